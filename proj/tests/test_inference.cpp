#include <doctest.h>

#include <cmath>
#include <random>

#include "cfsf/error.hpp"
#include "cfsf/estimator.hpp"
#include "cfsf/inference.hpp"
#include "cfsf/simulate.hpp"

using namespace cfsf;

namespace {

ThreeStageEstimator small_estimator(std::uint64_t seed, Eigen::Index n = 200) {
  const ObservationTable t = generate(TriangularDesign{}, n, seed);
  EstimatorConfig config;
  config.first_stage.grid_size = 39;
  config.second_stage_grid_size = 39;
  config.mesh_size = 99;
  return ThreeStageEstimator(t, RegressorSpec{}, config, default_regions(t, config.first_stage.trim));
}

}  // namespace

TEST_CASE("exponential weights") {
  const Eigen::VectorXd a = draw_weights(1000000, 42, 3);
  const double mean = a.mean();
  const double var = (a.array() - mean).square().sum() / static_cast<double>(a.size() - 1);
  CHECK(std::abs(mean - 1.0) < 0.005);
  CHECK(std::abs(var - 1.0) < 0.01);
  CHECK(a.minCoeff() >= 0.0);
  CHECK(draw_weights(1000, 42, 3) == a.head(1000));
  CHECK(draw_weights(1000, 42, 4) != a.head(1000));
  CHECK(draw_weights(1000, 43, 3) != a.head(1000));
}

TEST_CASE("pointwise standard errors") {
  CHECK(pointwise_se(Eigen::VectorXd(Eigen::VectorXd::Constant(9, 2.0)), 1e-12) == 1e-12);
  CHECK(pointwise_se((Eigen::VectorXd(5) << 3, 1, 5, 2, 4).finished()) == doctest::Approx(2.0 / 1.349));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  Eigen::VectorXd g(2000);
  for (auto& v : g) v = normal(rng);
  CHECK(pointwise_se(g) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("max-t critical value by hand") {
  // Five replicates at two points; se = 1 at both.
  Eigen::MatrixXd draws(5, 2);
  draws << 0.5, -0.2, -1.5, 0.1, 0.3, 2.0, -0.1, -0.4, 1.0, 0.9;
  const Eigen::Vector2d center(0.0, 0.0);
  const Eigen::Vector2d ses(1.0, 1.0);
  // Row maxima: 0.5, 1.5, 2.0, 0.4, 1.0 -> sorted 0.4 0.5 1.0 1.5 2.0.
  CHECK(max_t_critical(draws, center, ses, 0.1) == 2.0);   // ceil(0.9 * 5) = 5
  CHECK(max_t_critical(draws, center, ses, 0.25) == 1.5);  // ceil(0.75 * 5) = 4
  CHECK(max_t_critical(draws, center, ses, 0.5) == 1.0);   // ceil(0.5 * 5) = 3
  // With se = 2 on the second point the maxima become 0.5, 1.5, 1.0, 0.4, 1.0.
  CHECK(max_t_critical(draws, center, Eigen::Vector2d(1.0, 2.0), 0.25) == 1.0);

  // Duplicated points do not change the critical value.
  Eigen::MatrixXd single = draws.col(0);
  Eigen::MatrixXd twice(5, 2);
  twice << single, single;
  CHECK(max_t_critical(single, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), 0.1) ==
        max_t_critical(twice, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), 0.1));
  CHECK_THROWS_AS(max_t_critical(draws, center, Eigen::Vector2d(0.0, 1.0), 0.1), Error);
}

TEST_CASE("critical values shrink as alpha grows") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd draws(199, 6);
  for (Eigen::Index i = 0; i < draws.size(); ++i) draws.data()[i] = normal(rng);
  const Eigen::VectorXd center = Eigen::VectorXd::Zero(6);
  const Eigen::VectorXd se = pointwise_se(draws);
  CHECK(max_t_critical(draws, center, se, 0.05) >= max_t_critical(draws, center, se, 0.1));
}

TEST_CASE("uniform bands") {
  const Eigen::Vector3d center(0.2, 0.5, 0.99);
  const Eigen::Vector3d se(0.05, 0.05, 0.05);
  const UniformBand zero = uniform_band(center, se, 0.0);
  CHECK(zero.lower == center);
  CHECK(zero.upper == center);
  const UniformBand band = uniform_band(center, se, 1.645);
  CHECK((band.upper - band.lower).isApprox(Eigen::Vector3d::Constant(2 * 1.645 * 0.05)));
  const UniformBand clipped = uniform_band(center, Eigen::Vector3d(0.05, 0.05, 0.05), 1.0, true);
  CHECK(clipped.upper(2) == 1.0);
  CHECK(clipped.lower(2) == doctest::Approx(0.94));
}

TEST_CASE("discrete QSF band by inversion on three support points") {
  StructuralSurface dsf_surface;
  dsf_surface.kind = SurfaceKind::dsf;
  dsf_surface.levels = {0.0, 1.0, 2.0};
  dsf_surface.x = {1.0};
  dsf_surface.estimates = Eigen::Vector3d(0.3, 0.6, 1.0);
  UniformBand band;
  band.center = dsf_surface.estimates;
  band.lower = Eigen::Vector3d(0.2, 0.45, 1.0);
  band.upper = Eigen::Vector3d(0.55, 0.75, 1.0);
  band.se = Eigen::Vector3d(0.05, 0.05, 0.0);
  const UniformBand q = qsf_band_discrete(dsf_surface, band, {0.25, 0.5, 0.9});
  REQUIRE(q.center.size() == 3);
  // tau = 0.25: G_U reaches it at 0, G at 1 (0.3 >= 0.25 at 0), G_L at 1.
  CHECK(q.lower(0) == 0.0);
  CHECK(q.center(0) == 0.0);
  CHECK(q.upper(0) == 1.0);
  // tau = 0.5: G_U at 0 (0.55), G at 1, G_L at 2.
  CHECK(q.lower(1) == 0.0);
  CHECK(q.center(1) == 1.0);
  CHECK(q.upper(1) == 2.0);
  // tau = 0.9: only the top support point.
  CHECK(q.lower(2) == 2.0);
  CHECK(q.upper(2) == 2.0);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(q.lower(j) <= q.upper(j));

  // A level the lower edge never reaches is dropped with a warning.
  band.lower(2) = 0.8;
  const UniformBand partial = qsf_band_discrete(dsf_surface, band, {0.5, 0.9});
  CHECK(partial.center.size() == 1);
  CHECK(partial.warnings.size() == 1);
}

TEST_CASE("continuous QSF band with degenerate draws equals the point QSF") {
  StructuralSurface q;
  q.kind = SurfaceKind::qsf;
  q.levels = {0.25, 0.5, 0.75};
  q.x = {0.0, 1.0};
  q.estimates = (Eigen::VectorXd(6) << -1, 0, 1, 0, 1, 2).finished();
  Eigen::MatrixXd draws(20, 6);
  for (Eigen::Index b = 0; b < 20; ++b) draws.row(b) = q.estimates.transpose();
  const UniformBand band = qsf_band_continuous(q, draws, 0.1);
  CHECK(band.lower == q.estimates);
  CHECK(band.upper == q.estimates);
}

TEST_CASE("bootstrap ensemble") {
  const ThreeStageEstimator estimator = small_estimator(31);
  const auto point = estimator.estimate();

  SUBCASE("unit weights reproduce the point estimate bitwise") {
    const auto ensemble = bootstrap_ensemble(estimator, 3, 1, 1,
                                             [&](int) { return Eigen::VectorXd::Ones(estimator.table().rows()); });
    REQUIRE(ensemble.draws.size() == point.surfaces.size());
    for (std::size_t s = 0; s < point.surfaces.size(); ++s) {
      for (Eigen::Index b = 0; b < ensemble.draws[s].rows(); ++b) {
        CHECK(Eigen::VectorXd(ensemble.draws[s].row(b).transpose()) == point.surfaces[s].estimates);
      }
    }
  }

  SUBCASE("worker count does not change the draws") {
    const auto one = bootstrap_ensemble(estimator, 12, 99, 1);
    const auto three = bootstrap_ensemble(estimator, 12, 99, 3);
    CHECK(one.replicates == three.replicates);
    REQUIRE(one.draws.size() == three.draws.size());
    for (std::size_t s = 0; s < one.draws.size(); ++s) CHECK(one.draws[s] == three.draws[s]);
  }

  SUBCASE("failed replicates are recorded") {
    const Eigen::Index n = estimator.table().rows();
    const auto ensemble = bootstrap_ensemble(estimator, 20, 5, 1, [&](int b) {
      return b == 3 ? Eigen::VectorXd::Zero(n) : draw_weights(n, 5, static_cast<std::uint64_t>(b));
    });
    CHECK(ensemble.failures.size() == 1);
    CHECK(ensemble.failures[0].replicate == 3);
    CHECK(ensemble.replicates.size() == 19);
    CHECK_FALSE(ensemble.failed());  // 1 of 20 is exactly 5%
  }

  CHECK_THROWS_AS(bootstrap_ensemble(estimator, 1, 1), Error);
}

TEST_CASE("band edges bracket the center on the simulation design") {
  const ThreeStageEstimator estimator = small_estimator(77, 300);
  const auto point = estimator.estimate();
  const auto ensemble = bootstrap_ensemble(estimator, 39, 7, 1);
  for (std::size_t s = 0; s < point.surfaces.size(); ++s) {
    const auto& surface = point.surfaces[s];
    const UniformBand band = surface.kind == SurfaceKind::qsf ? qsf_band_continuous(surface, ensemble.draws[s], 0.1)
                                                              : surface_band(surface, ensemble.draws[s], 0.1);
    CHECK((band.lower.array() <= band.center.array()).all());
    CHECK((band.center.array() <= band.upper.array()).all());
    if (surface.kind == SurfaceKind::qsf) {
      for (std::size_t ix = 0; ix < surface.x.size(); ++ix) {
        for (Eigen::Index il = 1; il < surface.level_count(); ++il) {
          CHECK(band.lower(surface.index(ix, il)) >= band.lower(surface.index(ix, il - 1)));
        }
      }
    }
  }
}
