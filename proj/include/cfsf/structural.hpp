#pragma once

// Third stage: distribution, quantile and average structural functions from
// a fitted second stage, averaging the reduced-form CDF over the empirical
// distribution of (Z1_i, V_i) on kept rows and integrating over an
// equidistant outcome mesh.

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "cfsf/design.hpp"
#include "cfsf/first_stage.hpp"
#include "cfsf/second_stage.hpp"
#include "cfsf/types.hpp"

namespace cfsf {

enum class SurfaceKind { dsf, qsf, asf, asf_ls };

const char* to_string(SurfaceKind kind);

/// Estimates over a product region. For DSF `levels` holds outcome values,
/// for QSF quantile levels, and it is empty for ASF. Estimates are stored
/// x-major: index = ix * max(levels.size(), 1) + il.
struct StructuralSurface {
  SurfaceKind kind = SurfaceKind::asf;
  std::vector<double> levels;
  std::vector<double> x;
  Eigen::VectorXd estimates;
  std::optional<Eigen::VectorXd> conditioning;  // fixed z1, when conditional
  bool inversion_grid = false;  // DSF over the outcome support, kept for QSF band inversion

  Eigen::Index level_count() const { return levels.empty() ? 1 : static_cast<Eigen::Index>(levels.size()); }
  Eigen::Index index(Eigen::Index ix, Eigen::Index il) const { return ix * level_count() + il; }
};

/// Equidistant mesh over the kept-row outcome range, widened to contain 0
/// so that the 1(y >= 0) integrals are exact outside the mesh.
Grid default_outcome_mesh(const Eigen::VectorXd& kept_y, int size);

double mesh_width(const Grid& mesh);

/// G(y, x) = sum_i w_i F_Y(y | x, Z1_i, V_i) T_i / sum_i w_i T_i for one x.
/// The fitted reduced-form quantities at x are formed once on construction
/// and shared by every set of outcome values evaluated afterwards. With
/// `fixed_z1`, Z1_i is replaced by it.
class DsfEvaluator {
 public:
  DsfEvaluator(double x, const SecondStageFit& fit, const ControlFunctionFit& cf, const ObservationTable& table,
               const Eigen::VectorXd& weights, const RegressorBasis& basis,
               const Eigen::VectorXd* fixed_z1 = nullptr);

  /// Values at each entry of `ys` (any order). With `rearrange`, values are
  /// sorted along increasing y.
  Eigen::VectorXd operator()(const Eigen::VectorXd& ys, bool rearrange = false) const;

 private:
  const SecondStageFit* fit_;
  std::vector<double> weights_;   // kept rows with positive weight
  Eigen::MatrixXd quantiles_;     // QR: rows x quantile levels
  Eigen::MatrixXd design_;        // DR: rows x regressors
  double total_ = 0.0;
};

Eigen::VectorXd dsf_profile(const Eigen::VectorXd& ys, double x, const SecondStageFit& fit,
                            const ControlFunctionFit& cf, const ObservationTable& table,
                            const Eigen::VectorXd& weights, const RegressorBasis& basis,
                            const Eigen::VectorXd* fixed_z1 = nullptr, bool rearrange = false);

double dsf(double y, double x, const SecondStageFit& fit, const ControlFunctionFit& cf, const ObservationTable& table,
           const Eigen::VectorXd& weights, const RegressorBasis& basis, const Eigen::VectorXd* fixed_z1 = nullptr);

/// delta * sum_s [1(y_s >= 0) - 1{G(y_s) >= tau}] on an equidistant mesh.
double qsf(double tau, const Grid& mesh, const Eigen::VectorXd& profile);

/// delta * sum_s [1(y_s >= 0) - G(y_s)] on an equidistant mesh.
double asf(const Grid& mesh, const Eigen::VectorXd& profile);

/// Least-squares shortcut for the ASF under the QR specification:
/// w(x, mean Z1, E q(V))'b with b the weighted least-squares fit of Y on W_i
/// over kept rows. For q(V) = (1, Phi^{-1}(V)) the control factor is (1, 0).
double asf_least_squares(double x, const ObservationTable& table, const Eigen::VectorXd& weights,
                         const ControlFunctionFit& cf, const RegressorBasis& basis);

}  // namespace cfsf
