#include "cfsf/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <random>
#include <thread>

#include "cfsf/error.hpp"
#include "cfsf/numerics.hpp"

namespace cfsf {

Eigen::VectorXd draw_weights(Eigen::Index n, std::uint64_t master_seed, std::uint64_t replicate) {
  if (n < 1) throw Error(ErrorKind::InvalidInput, "need at least one weight");
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
  std::mt19937_64 engine(seq);
  Eigen::VectorXd weights(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;  // [0, 1)
    weights(i) = -std::log1p(-u);
  }
  return weights;
}

bool BootstrapEnsemble::failed() const {
  return static_cast<double>(failures.size()) > 0.05 * static_cast<double>(requested);
}

BootstrapEnsemble bootstrap_ensemble(const ThreeStageEstimator& estimator, int replicates, std::uint64_t seed,
                                     int workers, const WeightSource& weights) {
  if (replicates < 2) throw Error(ErrorKind::InvalidInput, "bootstrap needs at least two replicates");
  const Eigen::Index n = estimator.table().rows();

  struct Slot {
    std::optional<std::vector<StructuralSurface>> surfaces;
    std::string error;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(replicates));
  std::atomic<int> next{0};
  auto work = [&]() {
    for (int b = next.fetch_add(1); b < replicates; b = next.fetch_add(1)) {
      Slot& slot = slots[static_cast<std::size_t>(b)];
      try {
        const Eigen::VectorXd e = weights ? weights(b) : draw_weights(n, seed, static_cast<std::uint64_t>(b));
        slot.surfaces = estimator.estimate(e).surfaces;
      } catch (const std::exception& ex) {
        slot.error = ex.what();
      }
    }
  };
  const int threads = std::clamp(workers, 1, replicates);
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  BootstrapEnsemble ensemble;
  ensemble.requested = replicates;
  ensemble.master_seed = seed;
  std::vector<const std::vector<StructuralSurface>*> good;
  for (int b = 0; b < replicates; ++b) {
    const Slot& slot = slots[static_cast<std::size_t>(b)];
    if (slot.surfaces) {
      ensemble.replicates.push_back(b);
      good.push_back(&*slot.surfaces);
    } else {
      ensemble.failures.push_back({b, slot.error});
    }
  }
  if (!good.empty()) {
    const std::size_t surfaces = good.front()->size();
    for (std::size_t s = 0; s < surfaces; ++s) {
      const Eigen::Index points = (*good.front())[s].estimates.size();
      Eigen::MatrixXd draws(static_cast<Eigen::Index>(good.size()), points);
      for (std::size_t r = 0; r < good.size(); ++r) {
        draws.row(static_cast<Eigen::Index>(r)) = (*good[r])[s].estimates.transpose();
      }
      ensemble.draws.push_back(std::move(draws));
    }
  }
  return ensemble;
}

double pointwise_se(const Eigen::VectorXd& draws, double floor) {
  if (draws.size() < 2) throw Error(ErrorKind::InvalidInput, "need at least two draws");
  return std::max(iqr_scaled_sd(draws), floor);
}

Eigen::VectorXd pointwise_se(const Eigen::MatrixXd& draws, double floor) {
  Eigen::VectorXd se(draws.cols());
  for (Eigen::Index j = 0; j < draws.cols(); ++j) se(j) = pointwise_se(Eigen::VectorXd(draws.col(j)), floor);
  return se;
}

double max_t_critical(const Eigen::MatrixXd& draws, const Eigen::VectorXd& estimates, const Eigen::VectorXd& ses,
                      double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidInput, "alpha must lie in (0,1)");
  if (draws.cols() != estimates.size() || ses.size() != estimates.size()) {
    throw Error(ErrorKind::InvalidInput, "draws, estimates and standard errors disagree in size");
  }
  if (draws.rows() < 1) throw Error(ErrorKind::InvalidInput, "no bootstrap draws");
  if (!(ses.array() > 0.0).all()) throw Error(ErrorKind::InvalidInput, "standard errors must be positive");
  Eigen::VectorXd statistic(draws.rows());
  for (Eigen::Index b = 0; b < draws.rows(); ++b) {
    statistic(b) = ((draws.row(b).transpose() - estimates).cwiseAbs().cwiseQuotient(ses)).maxCoeff();
  }
  return empirical_quantile(statistic, 1.0 - alpha);
}

UniformBand uniform_band(const Eigen::VectorXd& center, const Eigen::VectorXd& ses, double critical, bool clip_unit) {
  if (center.size() != ses.size()) throw Error(ErrorKind::InvalidInput, "center and standard errors differ in size");
  UniformBand band;
  band.center = center;
  band.se = ses;
  band.critical = critical;
  band.lower = center - critical * ses;
  band.upper = center + critical * ses;
  if (clip_unit) {
    band.lower = band.lower.cwiseMax(0.0).cwiseMin(1.0);
    band.upper = band.upper.cwiseMax(0.0).cwiseMin(1.0);
  }
  return band;
}

namespace {

void label_points(const StructuralSurface& surface, UniformBand& band) {
  for (std::size_t ix = 0; ix < surface.x.size(); ++ix) {
    if (surface.levels.empty()) {
      band.x.push_back(surface.x[ix]);
      continue;
    }
    for (double level : surface.levels) {
      band.levels.push_back(level);
      band.x.push_back(surface.x[ix]);
    }
  }
}

}  // namespace

UniformBand surface_band(const StructuralSurface& surface, const Eigen::MatrixXd& draws, double alpha,
                         double se_floor) {
  const Eigen::VectorXd se = pointwise_se(draws, se_floor);
  const double k = max_t_critical(draws, surface.estimates, se, alpha);
  UniformBand band = uniform_band(surface.estimates, se, k, surface.kind == SurfaceKind::dsf);
  band.alpha = alpha;
  label_points(surface, band);
  return band;
}

UniformBand qsf_band_continuous(const StructuralSurface& qsf_surface, const Eigen::MatrixXd& draws, double alpha,
                                double se_floor) {
  UniformBand band = surface_band(qsf_surface, draws, alpha, se_floor);
  const Eigen::Index levels = qsf_surface.level_count();
  for (std::size_t ix = 0; ix < qsf_surface.x.size(); ++ix) {
    const Eigen::Index start = qsf_surface.index(static_cast<Eigen::Index>(ix), 0);
    band.center.segment(start, levels) = rearrange_monotone(band.center.segment(start, levels));
    band.lower.segment(start, levels) = rearrange_monotone(band.lower.segment(start, levels));
    band.upper.segment(start, levels) = rearrange_monotone(band.upper.segment(start, levels));
  }
  return band;
}

UniformBand qsf_band_discrete(const StructuralSurface& dsf_surface, const UniformBand& dsf_band,
                              const std::vector<double>& taus) {
  if (dsf_surface.kind != SurfaceKind::dsf) throw Error(ErrorKind::InvalidInput, "inversion needs a DSF surface");
  if (dsf_band.center.size() != dsf_surface.estimates.size()) {
    throw Error(ErrorKind::InvalidInput, "DSF band does not match the DSF surface");
  }
  std::vector<std::size_t> order(dsf_surface.levels.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dsf_surface.levels[a] < dsf_surface.levels[b]; });
  const auto count = static_cast<Eigen::Index>(order.size());

  UniformBand band;
  band.alpha = dsf_band.alpha;
  band.critical = dsf_band.critical;
  std::vector<double> center;
  std::vector<double> lower;
  std::vector<double> upper;

  auto left_inverse = [&](const Eigen::VectorXd& values, double tau) -> std::optional<double> {
    for (Eigen::Index j = 0; j < count; ++j) {
      if (values(j) >= tau) return dsf_surface.levels[order[static_cast<std::size_t>(j)]];
    }
    return std::nullopt;
  };

  for (std::size_t ix = 0; ix < dsf_surface.x.size(); ++ix) {
    Eigen::VectorXd g(count);
    Eigen::VectorXd gl(count);
    Eigen::VectorXd gu(count);
    for (Eigen::Index j = 0; j < count; ++j) {
      const Eigen::Index idx =
          dsf_surface.index(static_cast<Eigen::Index>(ix), static_cast<Eigen::Index>(order[static_cast<std::size_t>(j)]));
      g(j) = dsf_band.center(idx);
      gl(j) = dsf_band.lower(idx);
      gu(j) = dsf_band.upper(idx);
    }
    g = rearrange_monotone(g);
    gl = rearrange_monotone(gl);
    gu = rearrange_monotone(gu);
    for (double tau : taus) {
      const auto lo = left_inverse(gu, tau);
      const auto hi = left_inverse(gl, tau);
      const auto mid = left_inverse(g, tau);
      if (!lo || !hi || !mid) {
        char buffer[128];
        std::snprintf(buffer, sizeof buffer, "QSF band: tau=%.6g at x=%.6g not reached by the DSF band; dropped",
                      tau, dsf_surface.x[ix]);
        band.warnings.emplace_back(buffer);
        continue;
      }
      band.levels.push_back(tau);
      band.x.push_back(dsf_surface.x[ix]);
      center.push_back(*mid);
      lower.push_back(*lo);
      upper.push_back(*hi);
    }
  }
  const auto size = static_cast<Eigen::Index>(center.size());
  band.center = Eigen::Map<const Eigen::VectorXd>(center.data(), size);
  band.lower = Eigen::Map<const Eigen::VectorXd>(lower.data(), size);
  band.upper = Eigen::Map<const Eigen::VectorXd>(upper.data(), size);
  band.se = Eigen::VectorXd::Constant(size, std::numeric_limits<double>::quiet_NaN());
  return band;
}

}  // namespace cfsf
