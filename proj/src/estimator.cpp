#include "cfsf/estimator.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "cfsf/error.hpp"
#include "cfsf/numerics.hpp"

namespace cfsf {

namespace {

constexpr std::size_t kDiscreteSupportLimit = 20;

Eigen::VectorXd kept_values(const Eigen::VectorXd& values, const Eigen::VectorXd& x, const TrimRule& trim) {
  std::vector<double> kept;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (trim.keeps(x(i))) kept.push_back(values(i));
  }
  if (kept.empty()) throw Error(ErrorKind::EmptyAfterTrim, "trimming removes every observation");
  return Eigen::Map<const Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size()));
}

std::vector<double> to_std(const Grid& grid) {
  return {grid.points.data(), grid.points.data() + grid.points.size()};
}

}  // namespace

void EstimatorConfig::validate() const {
  first_stage.trim.validate();
  if (!(first_stage.epsilon > 0.0 && first_stage.epsilon < 0.5) ||
      !(second_stage_epsilon > 0.0 && second_stage_epsilon < 0.5)) {
    throw Error(ErrorKind::InvalidInput, "epsilon must lie in (0, 0.5)");
  }
  if (first_stage.grid_size < 2 || second_stage_grid_size < 2) {
    throw Error(ErrorKind::InvalidInput, "grid sizes must be >= 2");
  }
  if (mesh_size < 2) throw Error(ErrorKind::InvalidInput, "mesh size must be >= 2");
}

Regions default_regions(const ObservationTable& table, const TrimRule& trim, const RegionSettings& settings) {
  const Eigen::VectorXd x = kept_values(table.x, table.x, trim);
  const Eigen::VectorXd y = kept_values(table.y, table.x, trim);
  Regions regions;
  if (settings.x_points >= 2) {
    regions.asf_x = to_std(make_quantile_grid(x, settings.x_points, settings.p_lo, settings.p_hi));
  } else if (settings.x_points == 1) {
    regions.asf_x = {empirical_quantile(x, 0.5)};
  }
  regions.qsf_x = regions.asf_x;
  if (settings.dsf_x_points >= 2) {
    regions.dsf_x = to_std(make_quantile_grid(x, settings.dsf_x_points, settings.p_lo, settings.p_hi));
  } else if (settings.dsf_x_points == 1) {
    regions.dsf_x = {empirical_quantile(x, 0.5)};
  }
  if (settings.y_points >= 2) {
    regions.dsf_y = to_std(make_quantile_grid(y, settings.y_points, settings.p_lo, settings.p_hi));
  }
  regions.taus = settings.taus;
  return regions;
}

ThreeStageEstimator::ThreeStageEstimator(ObservationTable table, const RegressorSpec& spec, EstimatorConfig config,
                                         Regions regions)
    : table_(std::move(table)), config_(std::move(config)), regions_(std::move(regions)) {
  table_.validate();
  config_.validate();
  if (table_.rows() < 2) throw Error(ErrorKind::InvalidInput, "need at least two observations");
  for (double tau : regions_.taus) {
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidInput, "quantile levels must lie in (0,1)");
  }
  for (const auto& z1 : regions_.conditioning) {
    if (z1.size() != table_.z1.cols()) {
      throw Error(ErrorKind::InvalidInput, "conditioning value has wrong number of covariates");
    }
  }
  basis_ = RegressorBasis::resolve(spec, table_);

  const Eigen::VectorXd kept_y = kept_values(table_.y, table_.x, config_.first_stage.trim);
  const std::set<double> support(kept_y.data(), kept_y.data() + kept_y.size());
  discrete_ = config_.discrete_outcome.value_or(support.size() <= kDiscreteSupportLimit);
  rearrange_ = config_.rearrange.value_or(config_.second_stage_method == Method::dr);
  mesh_ = default_outcome_mesh(kept_y, config_.mesh_size);

  if (config_.first_stage.method == Method::dr) {
    first_thresholds_ = default_first_stage_thresholds(table_.x, config_.first_stage.grid_size);
  }
  if (config_.second_stage_method == Method::dr) {
    second_thresholds_ = default_second_stage_thresholds(kept_y, mesh_, discrete_);
  }
}

EstimationResult ThreeStageEstimator::estimate() const {
  return estimate(Eigen::VectorXd::Ones(table_.rows()));
}

EstimationResult ThreeStageEstimator::estimate(const Eigen::VectorXd& weights) const {
  if (weights.size() != table_.rows()) throw Error(ErrorKind::InvalidInput, "weights have wrong length");
  EstimationResult result;
  result.first_stage = control_function(table_, weights, basis_, config_.first_stage,
                                        config_.first_stage.method == Method::dr ? &first_thresholds_ : nullptr);
  if (config_.second_stage_method == Method::qr) {
    result.second_stage = fit_second_stage_qr(table_, weights, result.first_stage, basis_,
                                              config_.second_stage_grid_size, config_.second_stage_epsilon);
  } else {
    result.second_stage = fit_second_stage_dr(table_, weights, result.first_stage, basis_, second_thresholds_,
                                              config_.second_stage_link);
  }
  result.warnings = result.first_stage.warnings;
  result.warnings.insert(result.warnings.end(), result.second_stage.warnings.begin(),
                         result.second_stage.warnings.end());

  const auto& cf = result.first_stage;
  const auto& ss = result.second_stage;

  std::vector<const Eigen::VectorXd*> conditions{nullptr};
  for (const auto& z1 : regions_.conditioning) conditions.push_back(&z1);

  const Eigen::VectorXd dsf_y =
      Eigen::Map<const Eigen::VectorXd>(regions_.dsf_y.data(), static_cast<Eigen::Index>(regions_.dsf_y.size()));
  const Eigen::VectorXd inversion_y = Eigen::Map<const Eigen::VectorXd>(
      regions_.inversion_y.data(), static_cast<Eigen::Index>(regions_.inversion_y.size()));

  auto contains = [](const std::vector<double>& v, double x) { return std::find(v.begin(), v.end(), x) != v.end(); };
  const bool want_dsf = !regions_.dsf_y.empty() && !regions_.dsf_x.empty();
  const bool want_qsf = !regions_.taus.empty() && !regions_.qsf_x.empty();
  const bool want_asf = !regions_.asf_x.empty();
  const bool want_inversion = !regions_.inversion_y.empty() && !regions_.qsf_x.empty();

  for (const Eigen::VectorXd* z1 : conditions) {
    // One evaluator per distinct x, shared by every surface that needs it.
    std::set<double> xs;
    if (want_dsf) xs.insert(regions_.dsf_x.begin(), regions_.dsf_x.end());
    if (want_qsf || want_inversion) xs.insert(regions_.qsf_x.begin(), regions_.qsf_x.end());
    if (want_asf) xs.insert(regions_.asf_x.begin(), regions_.asf_x.end());
    std::map<double, Eigen::VectorXd> region_profiles;
    std::map<double, Eigen::VectorXd> mesh_profiles;
    std::map<double, Eigen::VectorXd> inversion_profiles;
    for (double x : xs) {
      const DsfEvaluator evaluator(x, ss, cf, table_, weights, basis_, z1);
      if (want_dsf && contains(regions_.dsf_x, x)) region_profiles[x] = evaluator(dsf_y, rearrange_);
      if ((want_qsf && contains(regions_.qsf_x, x)) || (want_asf && contains(regions_.asf_x, x))) {
        mesh_profiles[x] = evaluator(mesh_.points, rearrange_);
      }
      if (want_inversion && contains(regions_.qsf_x, x)) inversion_profiles[x] = evaluator(inversion_y, rearrange_);
    }
    auto tag = [&](StructuralSurface& s) {
      if (z1 != nullptr) s.conditioning = *z1;
    };
    auto fill_profiles = [&](StructuralSurface& s, const std::map<double, Eigen::VectorXd>& profiles) {
      s.estimates.resize(static_cast<Eigen::Index>(s.levels.size() * s.x.size()));
      for (std::size_t ix = 0; ix < s.x.size(); ++ix) {
        const Eigen::VectorXd& profile = profiles.at(s.x[ix]);
        s.estimates.segment(s.index(static_cast<Eigen::Index>(ix), 0), profile.size()) = profile;
      }
    };

    if (want_dsf) {
      StructuralSurface s;
      s.kind = SurfaceKind::dsf;
      s.levels = regions_.dsf_y;
      s.x = regions_.dsf_x;
      fill_profiles(s, region_profiles);
      tag(s);
      result.surfaces.push_back(std::move(s));
    }
    if (want_qsf) {
      StructuralSurface s;
      s.kind = SurfaceKind::qsf;
      s.levels = regions_.taus;
      s.x = regions_.qsf_x;
      s.estimates.resize(static_cast<Eigen::Index>(s.levels.size() * s.x.size()));
      for (std::size_t ix = 0; ix < s.x.size(); ++ix) {
        const Eigen::VectorXd& profile = mesh_profiles.at(s.x[ix]);
        for (std::size_t il = 0; il < s.levels.size(); ++il) {
          s.estimates(s.index(static_cast<Eigen::Index>(ix), static_cast<Eigen::Index>(il))) =
              qsf(s.levels[il], mesh_, profile);
        }
      }
      tag(s);
      result.surfaces.push_back(std::move(s));
    }
    if (want_asf) {
      StructuralSurface s;
      s.kind = SurfaceKind::asf;
      s.x = regions_.asf_x;
      s.estimates.resize(static_cast<Eigen::Index>(s.x.size()));
      for (std::size_t ix = 0; ix < s.x.size(); ++ix) {
        s.estimates(static_cast<Eigen::Index>(ix)) = asf(mesh_, mesh_profiles.at(s.x[ix]));
      }
      tag(s);
      result.surfaces.push_back(std::move(s));
    }
    if (want_inversion) {
      StructuralSurface s;
      s.kind = SurfaceKind::dsf;
      s.inversion_grid = true;
      s.levels = regions_.inversion_y;
      s.x = regions_.qsf_x;
      fill_profiles(s, inversion_profiles);
      tag(s);
      result.surfaces.push_back(std::move(s));
    }
  }

  if (config_.least_squares_asf && !regions_.asf_x.empty()) {
    StructuralSurface s;
    s.kind = SurfaceKind::asf_ls;
    s.x = regions_.asf_x;
    s.estimates.resize(static_cast<Eigen::Index>(s.x.size()));
    for (std::size_t ix = 0; ix < s.x.size(); ++ix) {
      s.estimates(static_cast<Eigen::Index>(ix)) = asf_least_squares(s.x[ix], table_, weights, cf, basis_);
    }
    result.surfaces.push_back(std::move(s));
  }
  return result;
}

}  // namespace cfsf
