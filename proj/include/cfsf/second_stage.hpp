#pragma once

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

#include "cfsf/design.hpp"
#include "cfsf/first_stage.hpp"
#include "cfsf/types.hpp"

namespace cfsf {

struct SecondStageFit {
  Method method = Method::qr;
  CoefficientPath path;  // beta(u_m) over quantile levels, or beta(y_m) over thresholds
  double epsilon = 0.01;
  Link link = Link::logit;
  // DR: the reduced CDF is 1 at and above this value (largest kept outcome).
  double support_max = std::numeric_limits<double>::infinity();
  std::vector<std::string> warnings;
};

/// Weighted QR of Y on W_i = w(X_i, Z1_i, V_i) at each level of the
/// equidistant grid on [eps, 1 - eps]; trimmed rows carry zero weight.
SecondStageFit fit_second_stage_qr(const ObservationTable& table, const Eigen::VectorXd& weights,
                                   const ControlFunctionFit& cf, const RegressorBasis& basis, int grid_size,
                                   double epsilon);

/// eps + (1 - 2 eps) * (1/M) * #{m : w(x, z1, v)'beta(u_m) <= y}.
double qr_reduced_cdf(double y, double x, const Eigen::VectorXd& z1, double v, const SecondStageFit& fit,
                      const RegressorBasis& basis);

/// Weighted binary regression of 1(Y_i <= y_m) on W_i at each threshold.
/// Separated thresholds are dropped with a warning.
SecondStageFit fit_second_stage_dr(const ObservationTable& table, const Eigen::VectorXd& weights,
                                   const ControlFunctionFit& cf, const RegressorBasis& basis, const Grid& thresholds,
                                   Link link);

/// Gamma(w(x, z1, v)'beta(y_m)) with y_m the largest fitted threshold <= y;
/// 0 left of the first threshold and 1 from `support_max` on.
double dr_reduced_cdf(double y, double x, const Eigen::VectorXd& z1, double v, const SecondStageFit& fit,
                      const RegressorBasis& basis);

double reduced_cdf(double y, double x, const Eigen::VectorXd& z1, double v, const SecondStageFit& fit,
                   const RegressorBasis& basis);

/// DR thresholds: for a discrete outcome every support point but the
/// largest; otherwise the mesh points inside [min Y, max Y) of kept rows.
Grid default_second_stage_thresholds(const Eigen::VectorXd& kept_y, const Grid& mesh, bool discrete);

}  // namespace cfsf
