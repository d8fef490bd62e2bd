#include <doctest.h>

#include <cmath>
#include <random>

#include "cfsf/design.hpp"
#include "cfsf/distributions.hpp"
#include "cfsf/error.hpp"

using namespace cfsf;

namespace {

ObservationTable table_with(int n, bool covariate) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal;
  ObservationTable t;
  t.y.resize(n);
  t.x.resize(n);
  t.z2.resize(n, 1);
  t.z1.resize(n, covariate ? 1 : 0);
  for (int i = 0; i < n; ++i) {
    t.z2(i, 0) = normal(rng);
    t.x(i) = t.z2(i, 0) + normal(rng);
    t.y(i) = t.x(i) + normal(rng);
    if (covariate) t.z1(i, 0) = i % 2;
  }
  t.z2_names = {"z2"};
  if (covariate) t.z1_names = {"z1"};
  return t;
}

// Smallest root of the characteristic polynomial of a symmetric 4x4 matrix:
// Faddeev-LeVerrier coefficients, then bisection below the Gershgorin bound.
double smallest_eigenvalue_by_polynomial(const Eigen::Matrix4d& a) {
  double c[5];
  c[4] = 1.0;
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (int k = 1; k <= 4; ++k) {
    m = a * m + c[5 - k] * Eigen::Matrix4d::Identity();
    c[4 - k] = -(a * m).trace() / k;
  }
  auto p = [&](double t) { return (((c[4] * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]; };
  double radius = 0.0;
  for (int i = 0; i < 4; ++i) radius = std::max(radius, a.row(i).cwiseAbs().sum());
  // Scan upward from the lower bound for the first sign change.
  double lo = -radius - 1.0;
  const double step = (2.0 * radius + 2.0) / 200000.0;
  double hi = lo + step;
  while (p(lo) * p(hi) > 0.0) {
    lo = hi;
    hi += step;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (p(lo) * p(mid) <= 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("first-stage rows") {
  const ObservationTable t = table_with(50, false);
  const RegressorBasis basis = RegressorBasis::resolve({}, t);
  Eigen::VectorXd z(1);
  z(0) = 2.0;
  CHECK(basis.first_stage_row(z) == Eigen::Vector2d(1, 2));
  z(0) = 0.0;
  CHECK(basis.first_stage_row(z) == Eigen::Vector2d(1, 0));

  RegressorSpec poly;
  poly.instrument = TransformSpec::polynomial(2);
  z(0) = 3.0;
  CHECK(RegressorBasis::resolve(poly, t).first_stage_row(z) == Eigen::Vector3d(1, 3, 9));
}

TEST_CASE("second-stage rows follow the Kronecker order") {
  const ObservationTable t = table_with(50, false);
  const RegressorBasis basis = RegressorBasis::resolve({}, t);
  CHECK(basis.second_stage_row(1.0, Eigen::VectorXd(0), 0.5) == Eigen::Vector4d(1, 0, 1, 0));
  const Eigen::VectorXd w = basis.second_stage_row(0.0, Eigen::VectorXd(0), 0.975);
  CHECK(w(0) == 1.0);
  CHECK(w(1) == doctest::Approx(1.959963984540054).epsilon(1e-13));
  CHECK(w(2) == 0.0);
  CHECK(w(3) == 0.0);
  CHECK_THROWS_AS(basis.second_stage_row(0.0, Eigen::VectorXd(0), 1.0), Error);

  const ObservationTable tc = table_with(50, true);
  const RegressorBasis with_z1 = RegressorBasis::resolve({}, tc);
  Eigen::VectorXd z1(1);
  z1(0) = 1.0;
  Eigen::VectorXd expected(8);
  expected << 1, 0, 1, 0, 2, 0, 2, 0;
  CHECK(with_z1.second_stage_row(2.0, z1, 0.5) == expected);
}

TEST_CASE("Kronecker dimension law and zeroed control coordinates") {
  const ObservationTable t = table_with(80, true);
  for (int dp = 1; dp <= 3; ++dp) {
    for (int dq = 1; dq <= 2; ++dq) {
      RegressorSpec spec;
      spec.treatment = TransformSpec::polynomial(dp);
      spec.covariates = {TransformSpec::polynomial(1)};
      spec.control = TransformSpec::polynomial(dq);
      const RegressorBasis basis = RegressorBasis::resolve(spec, t);
      CHECK(basis.second_stage_size() == (dp + 1) * 2 * (dq + 1));
      Eigen::VectorXd z1(1);
      z1(0) = 0.7;
      const Eigen::VectorXd w = basis.second_stage_row(1.3, z1, 0.5);
      // q(0.5) = (1, 0, ..): only coordinates with q index 0 survive.
      for (Eigen::Index j = 0; j < w.size(); ++j) {
        if (j % (dq + 1) != 0) CHECK(w(j) == 0.0);
      }
    }
  }
}

TEST_CASE("cubic B-spline rows form a partition of unity") {
  const ObservationTable t = table_with(200, false);
  RegressorSpec spec;
  spec.treatment = TransformSpec::cubic_bspline(4);
  const Transform tr = Transform::resolve(spec.treatment, t.x);
  CHECK(tr.size() == 8);
  for (double v = -6.0; v <= 6.0; v += 0.01) {
    const Eigen::VectorXd b = tr.evaluate(v);
    CHECK(b.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.minCoeff() >= 0.0);
  }
}

TEST_CASE("rank check") {
  CHECK(check_full_rank(Eigen::MatrixXd::Identity(5, 5) * std::sqrt(5.0)).min_eigenvalue == doctest::Approx(1.0));
  Eigen::MatrixXd dup(6, 2);
  dup << 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6;
  const RankCheck bad = check_full_rank(dup);
  CHECK_FALSE(bad.pass);
  CHECK(std::abs(bad.min_eigenvalue) < 1e-10);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(100, 4);
  for (Eigen::Index i = 0; i < 100; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = normal(rng) + (j == 0 ? 1.0 : 0.0);
  }
  const RankCheck ok = check_full_rank(x);
  CHECK(ok.pass);
  const Eigen::Matrix4d moment = x.transpose() * x / 100.0;
  CHECK(ok.min_eigenvalue == doctest::Approx(smallest_eigenvalue_by_polynomial(moment)).epsilon(1e-8));
}

TEST_CASE("identical transformations of one variable fail the rank check") {
  const ObservationTable t = table_with(60, true);
  RegressorSpec spec;
  spec.treatment = TransformSpec::polynomial(2);
  const RegressorBasis basis = RegressorBasis::resolve(spec, t);
  Eigen::MatrixXd r = basis.first_stage_design(t);
  Eigen::MatrixXd doubled(r.rows(), r.cols() + 1);
  doubled << r, r.col(1);
  CHECK_FALSE(check_full_rank(doubled).pass);
}

TEST_CASE("grids") {
  Eigen::VectorXd data(5);
  data << 3, 1, 4, 0, 2;
  const Grid q = make_quantile_grid(data, 5);
  CHECK(q.points == (Eigen::VectorXd(5) << 0, 1, 2, 3, 4).finished());
  const Grid e = make_equidistant_grid(0.0, 1.0, 3);
  CHECK(e.points == Eigen::Vector3d(0, 0.5, 1));
  CHECK_THROWS_AS(make_equidistant_grid(1.0, 1.0, 3), Error);
  CHECK_THROWS_AS(make_equidistant_grid(0.0, 1.0, 1), Error);
}
