#pragma once

// The three-stage estimator assembled: control function, reduced-form CDF,
// structural surfaces. Everything that must stay fixed across bootstrap
// replicates (transform knots, threshold grids, outcome mesh, regions) is
// computed once from the unweighted sample at construction; `estimate` then
// reruns all three stages under a given weight vector.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "cfsf/design.hpp"
#include "cfsf/first_stage.hpp"
#include "cfsf/second_stage.hpp"
#include "cfsf/structural.hpp"
#include "cfsf/types.hpp"

namespace cfsf {

struct EstimatorConfig {
  FirstStageConfig first_stage;
  Method second_stage_method = Method::qr;
  Link second_stage_link = Link::logit;
  int second_stage_grid_size = 599;
  double second_stage_epsilon = 0.01;
  int mesh_size = 599;
  std::optional<bool> rearrange;         // default: on for a DR second stage
  std::optional<bool> discrete_outcome;  // default: at most 20 distinct outcomes
  bool least_squares_asf = false;

  void validate() const;
};

struct Regions {
  std::vector<double> dsf_y;
  std::vector<double> dsf_x;
  std::vector<double> taus;
  std::vector<double> qsf_x;
  std::vector<double> asf_x;
  std::vector<Eigen::VectorXd> conditioning;  // fixed z1 values for conditional surfaces
  std::vector<double> inversion_y;            // outcome support for discrete QSF bands; empty skips
};

struct RegionSettings {
  int x_points = 5;
  int dsf_x_points = 3;
  int y_points = 15;
  double p_lo = 0.1;
  double p_hi = 0.9;
  std::vector<double> taus{0.25, 0.5, 0.75};
};

/// Sample-quantile regions over the kept rows.
Regions default_regions(const ObservationTable& table, const TrimRule& trim, const RegionSettings& settings = {});

struct EstimationResult {
  ControlFunctionFit first_stage;
  SecondStageFit second_stage;
  std::vector<StructuralSurface> surfaces;
  std::vector<std::string> warnings;
};

class ThreeStageEstimator {
 public:
  ThreeStageEstimator(ObservationTable table, const RegressorSpec& spec, EstimatorConfig config, Regions regions);

  EstimationResult estimate(const Eigen::VectorXd& weights) const;
  EstimationResult estimate() const;

  const ObservationTable& table() const { return table_; }
  const RegressorBasis& basis() const { return basis_; }
  const EstimatorConfig& config() const { return config_; }
  const Regions& regions() const { return regions_; }
  const Grid& mesh() const { return mesh_; }
  /// Threshold grid of a DR first stage; empty for QR.
  const Grid& first_stage_thresholds() const { return first_thresholds_; }
  bool discrete_outcome() const { return discrete_; }
  bool rearranges() const { return rearrange_; }

 private:
  ObservationTable table_;
  RegressorBasis basis_;
  EstimatorConfig config_;
  Regions regions_;
  Grid mesh_;
  Grid first_thresholds_;
  Grid second_thresholds_;
  bool discrete_ = false;
  bool rearrange_ = false;
};

}  // namespace cfsf
