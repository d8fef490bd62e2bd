#pragma once

// Weighted-bootstrap uniform inference: replicate the three stages under
// i.i.d. standard exponential weights, then build pointwise standard errors
// (rescaled IQR), maximal-t critical values and uniform bands.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfsf/estimator.hpp"
#include "cfsf/structural.hpp"

namespace cfsf {

/// i.i.d. standard exponential draws from a stream keyed by
/// (master_seed, replicate); identical keys give identical vectors.
Eigen::VectorXd draw_weights(Eigen::Index n, std::uint64_t master_seed, std::uint64_t replicate);

struct ReplicateFailure {
  int replicate = 0;
  std::string message;
};

struct BootstrapEnsemble {
  int requested = 0;
  std::uint64_t master_seed = 0;
  std::string weight_law = "standard_exponential";
  std::vector<int> replicates;          // successful replicate indices, ascending
  std::vector<Eigen::MatrixXd> draws;   // per surface: one row per successful replicate
  std::vector<ReplicateFailure> failures;

  // More than 5% of replicates failed.
  bool failed() const;
};

using WeightSource = std::function<Eigen::VectorXd(int replicate)>;

/// Reruns the estimator B times. Replicates are spread over `workers`
/// threads but each is computed independently and stored by index, so the
/// ensemble does not depend on the schedule. `weights` overrides the
/// exponential draws (used to inject fixed weights).
BootstrapEnsemble bootstrap_ensemble(const ThreeStageEstimator& estimator, int replicates, std::uint64_t seed,
                                     int workers = 1, const WeightSource& weights = {});

/// Rescaled interquartile range of the draws, floored at `floor`.
double pointwise_se(const Eigen::VectorXd& draws, double floor = 1e-12);
Eigen::VectorXd pointwise_se(const Eigen::MatrixXd& draws, double floor = 1e-12);

/// (1 - alpha) sample quantile over replicates of max_j |draw_bj - est_j| / se_j.
double max_t_critical(const Eigen::MatrixXd& draws, const Eigen::VectorXd& estimates, const Eigen::VectorXd& ses,
                      double alpha);

struct UniformBand {
  std::vector<double> levels;  // per point; y, tau, or empty for ASF
  std::vector<double> x;       // per point
  Eigen::VectorXd center;
  Eigen::VectorXd se;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double critical = 0.0;
  double alpha = 0.1;
  std::vector<std::string> warnings;
};

/// center -/+ k * se; with `clip_unit` the edges are clipped to [0,1].
UniformBand uniform_band(const Eigen::VectorXd& center, const Eigen::VectorXd& ses, double critical,
                         bool clip_unit = false);

/// Band for one surface from its bootstrap draws (DSF bands are clipped).
UniformBand surface_band(const StructuralSurface& surface, const Eigen::MatrixXd& draws, double alpha,
                         double se_floor = 1e-12);

/// QSF band for a continuous outcome: QSF draws, then center and both edges
/// rearranged in tau at each x.
UniformBand qsf_band_continuous(const StructuralSurface& qsf_surface, const Eigen::MatrixXd& draws, double alpha,
                                double se_floor = 1e-12);

/// QSF band for a discrete outcome by inverting a DSF band over its y-grid:
/// lower = inf{y : G_U(y,x) >= tau}, upper = inf{y : G_L(y,x) >= tau},
/// center = inf{y : G(y,x) >= tau}. Points whose tau is not reached by both
/// band edges on the grid are dropped with a warning.
UniformBand qsf_band_discrete(const StructuralSurface& dsf_surface, const UniformBand& dsf_band,
                              const std::vector<double>& taus);

}  // namespace cfsf
