#pragma once

// Regressor construction for both stages, evaluation grids and the
// identification rank check.
//
// First stage:  R = (1, t(Z2_1), ..., t(Z2_d2), t(Z1_1), ..., t(Z1_d1)),
//               additive in the instrument transforms with one shared
//               intercept (each t drops its constant part).
// Second stage: W = p(X) (x) r1_1(Z1_1) (x) ... (x) r1_d1(Z1_d1) (x) q(V),
//               the Kronecker product with q fastest-varying, then the
//               covariate factors (last fastest), then p slowest. q acts on
//               Phi^{-1}(V). With default transforms and one covariate:
//               (1, F, Z, ZF, X, XF, XZ, XZF) where F = Phi^{-1}(V).

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "cfsf/types.hpp"

namespace cfsf {

enum class TransformKind { raw_plus_intercept, polynomial, cubic_bspline };

struct TransformSpec {
  TransformKind kind = TransformKind::raw_plus_intercept;
  int degree = 1;
  int knot_count = 4;          // interior knots for cubic B-splines
  std::vector<double> knots;   // user-supplied interior knots; empty selects quantile placement

  static TransformSpec raw() { return {}; }
  static TransformSpec polynomial(int degree) { return {TransformKind::polynomial, degree, 4, {}}; }
  static TransformSpec cubic_bspline(int knot_count, std::vector<double> knots = {}) {
    return {TransformKind::cubic_bspline, 3, knot_count, std::move(knots)};
  }

  void validate() const;
};

struct RegressorSpec {
  TransformSpec instrument;               // r(Z), per component
  TransformSpec treatment;                // p(X)
  std::vector<TransformSpec> covariates;  // r1 per Z1 column; absent entries are raw
  TransformSpec control;                  // q(V), on Phi^{-1}(V)
};

/// A scalar transformation with its data-dependent knots fixed. `evaluate`
/// returns the full basis including the constant part: (1, v, ..., v^d) for
/// power bases, the clamped cubic B-spline basis (a partition of unity) for
/// splines.
class Transform {
 public:
  Transform() = default;

  static Transform resolve(const TransformSpec& spec, const Eigen::VectorXd& sample);
  // Knots for a transformation of Phi^{-1}(V), V ~ U(0,1): standard normal
  // quantiles at equidistant probabilities.
  static Transform resolve_standard_normal(const TransformSpec& spec);

  Eigen::Index size() const;
  void evaluate(double value, Eigen::Ref<Eigen::VectorXd> out) const;
  Eigen::VectorXd evaluate(double value) const;

  // E[t(F)] for F standard normal.
  Eigen::VectorXd standard_normal_mean() const;

  TransformKind kind() const { return kind_; }
  const std::vector<double>& knot_vector() const { return knots_; }

 private:
  TransformKind kind_ = TransformKind::raw_plus_intercept;
  int degree_ = 1;
  std::vector<double> knots_;  // augmented (boundary knots repeated 4 times)
};

/// Cubic B-spline basis on an augmented knot vector, clamped to its range.
void cubic_bspline_basis(std::span<const double> knots, double value, Eigen::Ref<Eigen::VectorXd> out);

class RegressorBasis {
 public:
  RegressorBasis() = default;

  static RegressorBasis resolve(const RegressorSpec& spec, const ObservationTable& table);

  Eigen::Index first_stage_size() const;
  Eigen::Index second_stage_size() const;
  Eigen::Index covariate_count() const { return static_cast<Eigen::Index>(covariates_.size()); }

  // z = (Z2 components, then Z1 components).
  Eigen::VectorXd first_stage_row(const Eigen::VectorXd& z) const;
  Eigen::VectorXd second_stage_row(double x, const Eigen::VectorXd& z1, double v) const;
  // Same as above with q(V) replaced by an explicit control factor value.
  Eigen::VectorXd second_stage_row_with_control(double x, const Eigen::VectorXd& z1,
                                                const Eigen::VectorXd& control_factor) const;

  Eigen::VectorXd control_factor(double v) const;
  Eigen::VectorXd control_factor_mean() const { return control_.standard_normal_mean(); }

  Eigen::MatrixXd first_stage_design(const ObservationTable& table) const;
  // Rows with keep(i) == 0 are left as zeros (their V may be undefined).
  Eigen::MatrixXd second_stage_design(const ObservationTable& table, const Eigen::VectorXd& v,
                                      const Eigen::VectorXd& keep) const;

  // Rows of w(x, z1, .) for a fixed x at every row's (z1_i, v_i), or at a
  // fixed z1 when `fixed_z1` is non-null.
  Eigen::MatrixXd second_stage_design_at(double x, const ObservationTable& table, const Eigen::VectorXd& v,
                                         const Eigen::VectorXd& keep, const Eigen::VectorXd* fixed_z1) const;

 private:
  std::vector<Transform> instruments_;  // one per Z2 then Z1 column
  Transform treatment_;
  std::vector<Transform> covariates_;
  Transform control_;
};

std::vector<double> kronecker(std::span<const Eigen::VectorXd> factors);

enum class GridPlacement { sample_quantile, equidistant };

struct Grid {
  Eigen::VectorXd points;
  GridPlacement placement = GridPlacement::equidistant;

  Eigen::Index size() const { return points.size(); }
};

// Sample quantiles at probabilities p_lo + (p_hi - p_lo) j / (size - 1);
// repeated values are merged so the grid stays strictly increasing.
Grid make_quantile_grid(const Eigen::VectorXd& data, int size, double p_lo = 0.0, double p_hi = 1.0);
Grid make_equidistant_grid(double lo, double hi, int size);

struct RankCheck {
  double min_eigenvalue = 0.0;
  bool pass = false;
};

// Smallest eigenvalue of design'design / n against `threshold`.
RankCheck check_full_rank(const Eigen::MatrixXd& design, double threshold = 1e-10);

}  // namespace cfsf
