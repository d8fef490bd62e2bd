#pragma once

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

#include "cfsf/design.hpp"
#include "cfsf/distributions.hpp"
#include "cfsf/types.hpp"

namespace cfsf {

enum class Method { qr, dr };

inline const char* to_string(Method m) { return m == Method::qr ? "qr" : "dr"; }

/// T(x) = 1(lower <= x <= upper). The default keeps every row.
struct TrimRule {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool keeps(double x) const { return x >= lower && x <= upper; }
  void validate() const;
};

struct FirstStageConfig {
  Method method = Method::qr;
  Link link = Link::logit;  // DR only
  int grid_size = 599;      // M, quantile levels for QR
  double epsilon = 0.01;
  TrimRule trim;
};

struct ControlFunctionFit {
  Method method = Method::qr;
  Link link = Link::logit;
  CoefficientPath path;  // pi(v_m) over quantile levels, or pi(x_m) over thresholds
  double epsilon = 0.01;
  Eigen::VectorXd v_hat;  // 0 on trimmed rows
  Eigen::VectorXd trim;   // 1 kept, 0 trimmed
  std::vector<std::string> warnings;
};

// Equidistant levels {eps = v_1 < ... < v_M = 1 - eps}.
Eigen::VectorXd quantile_levels(int count, double epsilon);

/// One weighted quantile regression of X on R per level; consecutive levels
/// reuse the previous optimal basis.
CoefficientPath fit_first_stage_qr(const Eigen::MatrixXd& design, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& weights, int grid_size, double epsilon);

/// eps + (1 - 2 eps) * (1/M) * #{m : r'pi(v_m) <= x}.
double qr_control_value(double x, const Eigen::VectorXd& r, const CoefficientPath& path, double epsilon);

/// One binary regression of 1(X <= x_m) on R per threshold. Thresholds at
/// which the likelihood is unbounded are dropped (with a warning); the fit
/// fails only when no threshold survives.
CoefficientPath fit_first_stage_dr(const Eigen::MatrixXd& design, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& weights, const Grid& thresholds, Link link,
                                   std::vector<std::string>* warnings = nullptr);

/// Gamma(r'pi(x)): fitted probabilities at every threshold are sorted into
/// a nondecreasing sequence, then linearly interpolated at x (clamped to the
/// end thresholds). The result is kept inside (0,1).
double dr_control_value(double x, const Eigen::VectorXd& r, const CoefficientPath& path, Link link);

/// Default DR threshold grid: sample quantiles of X at equidistant
/// probabilities, without the maximum (where the indicator is identically 1).
Grid default_first_stage_thresholds(const Eigen::VectorXd& x, int grid_size);

/// Full first stage: fits the path, then V_i for kept rows (V_i = 0 and
/// T_i = 0 outside the trimming interval). `dr_thresholds` is required for DR.
ControlFunctionFit control_function(const ObservationTable& table, const Eigen::VectorXd& weights,
                                    const RegressorBasis& basis, const FirstStageConfig& config,
                                    const Grid* dr_thresholds = nullptr);

}  // namespace cfsf
