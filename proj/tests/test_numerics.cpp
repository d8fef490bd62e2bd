#include <doctest.h>

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cfsf/numerics.hpp"

using namespace cfsf;

namespace {

double pinball(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double tau,
               const Eigen::VectorXd& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double r = y(i) - x.row(i).dot(b);
    total += w(i) * r * (tau - (r < 0.0 ? 1.0 : 0.0));
  }
  return total;
}

// Minimum of the pinball objective over every basic solution (k rows
// interpolated exactly). An optimal vertex always exists for full-rank designs.
double brute_force_minimum(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                           double tau) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  std::vector<int> pick(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) pick[static_cast<std::size_t>(j)] = static_cast<int>(j);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    Eigen::MatrixXd a(k, k);
    Eigen::VectorXd rhs(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      a.row(j) = x.row(pick[static_cast<std::size_t>(j)]);
      rhs(j) = y(pick[static_cast<std::size_t>(j)]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.isInvertible()) best = std::min(best, pinball(x, y, w, tau, lu.solve(rhs)));
    Eigen::Index j = k - 1;
    while (j >= 0 && pick[static_cast<std::size_t>(j)] == static_cast<int>(n - k + j)) --j;
    if (j < 0) break;
    ++pick[static_cast<std::size_t>(j)];
    for (Eigen::Index l = j + 1; l < k; ++l) pick[static_cast<std::size_t>(l)] = pick[static_cast<std::size_t>(l - 1)] + 1;
  }
  return best;
}

double loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& d, const Eigen::VectorXd& w, Link link,
              const Eigen::VectorXd& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double p = link_cdf(link, x.row(i).dot(b));
    total += w(i) * (d(i) > 0.5 ? std::log(p) : std::log1p(-p));
  }
  return total;
}

Eigen::VectorXd numeric_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& d, const Eigen::VectorXd& w,
                                 Link link, const Eigen::VectorXd& b) {
  Eigen::VectorXd g(b.size());
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double h = 1e-5 * (1.0 + std::abs(b(j)));
    Eigen::VectorXd up = b;
    Eigen::VectorXd down = b;
    up(j) += h;
    down(j) -= h;
    g(j) = (loglik(x, d, w, link, up) - loglik(x, d, w, link, down)) / (2.0 * h);
  }
  return g;
}

Eigen::VectorXd vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double value : values) v(i++) = value;
  return v;
}

}  // namespace

TEST_CASE("intercept-only quantile regression matches hand examples") {
  const Eigen::MatrixXd ones3 = Eigen::MatrixXd::Ones(3, 1);
  const Eigen::MatrixXd ones5 = Eigen::MatrixXd::Ones(5, 1);
  CHECK(solve_quantile_regression<double>(ones3, vec({1, 2, 3}), Eigen::VectorXd::Ones(3), 0.5).coefficients(0) ==
        doctest::Approx(2.0));
  CHECK(solve_quantile_regression<double>(ones5, vec({1, 2, 3, 4, 5}), Eigen::VectorXd::Ones(5), 0.25)
            .coefficients(0) == doctest::Approx(2.0));
  CHECK(solve_quantile_regression<double>(ones3, vec({1, 2, 3}), vec({3, 1, 1}), 0.5).coefficients(0) ==
        doctest::Approx(1.0));
}

TEST_CASE("quantile regression reaches the brute-force vertex minimum") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> expo;
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Index n = 8 + trial % 5;
    const Eigen::Index k = 1 + trial % 3;
    Eigen::MatrixXd x(n, k);
    Eigen::VectorXd y(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      for (Eigen::Index j = 1; j < k; ++j) x(i, j) = normal(rng);
      y(i) = trial % 4 == 0 ? std::round(2.0 * normal(rng)) : normal(rng);  // ties on some trials
      w(i) = trial % 2 == 0 ? 1.0 : expo(rng);
    }
    const double tau = 0.1 + 0.8 * (trial % 9) / 8.0;
    const auto fit = solve_quantile_regression<double>(x, y, w, tau);
    const double best = brute_force_minimum(x, y, w, tau);
    CHECK(pinball(x, y, w, tau, fit.coefficients) <= best + 1e-10 * (1.0 + best));
    CHECK(fit.report.converged);
  }
}

TEST_CASE("quantile regression sweep warm start agrees with cold solves") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  const Eigen::Index n = 40;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = normal(rng);
    x(i, 2) = normal(rng);
    y(i) = 1.0 + x(i, 1) + normal(rng);
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  QuantileRegressionSolver<double> solver(x, y, w);
  for (double tau = 0.05; tau < 0.96; tau += 0.05) {
    const auto warm = solver.solve(tau);
    const auto cold = solve_quantile_regression<double>(x, y, w, tau);
    CHECK(pinball(x, y, w, tau, warm.coefficients) ==
          doctest::Approx(pinball(x, y, w, tau, cold.coefficients)).epsilon(1e-12));
  }
}

TEST_CASE("quantile regression rejects bad input") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 1, 1, 1, 1, 1, 1, 1;
  const Eigen::VectorXd y = vec({1, 2, 3, 4});
  CHECK_THROWS_AS(solve_quantile_regression<double>(x, y, Eigen::VectorXd::Ones(4), 0.5), Error);
  try {
    solve_quantile_regression<double>(x, y, Eigen::VectorXd::Ones(4), 0.5);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RankDeficient);
  }
  Eigen::VectorXd bad = y;
  bad(1) = std::nan("");
  try {
    solve_quantile_regression<double>(Eigen::MatrixXd::Ones(4, 1), bad, Eigen::VectorXd::Ones(4), 0.5);
    FAIL("expected InvalidInput");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidInput);
  }
}

TEST_CASE("zero-weight rows have no influence on quantile regression") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  const Eigen::Index n = 30;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = normal(rng);
    y(i) = normal(rng);
  }
  for (Eigen::Index i = 0; i < n; i += 4) w(i) = 0.0;
  const auto before = solve_quantile_regression<double>(x, y, w, 0.3).coefficients;
  for (Eigen::Index i = 0; i < n; i += 4) y(i) = 1e6 * (i + 1);
  const auto after = solve_quantile_regression<double>(x, y, w, 0.3).coefficients;
  CHECK(before == after);
}

TEST_CASE("binary MLE hand examples") {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 1);
  CHECK(solve_binary_mle<double>(ones, vec({0, 1, 0, 1}), Eigen::VectorXd::Ones(4), Link::logit).coefficients(0) ==
        doctest::Approx(0.0));
  CHECK(solve_binary_mle<double>(ones, vec({1, 1, 0, 1}), Eigen::VectorXd::Ones(4), Link::logit).coefficients(0) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-10));
  Eigen::MatrixXd two(4, 2);
  two << 1, 0, 1, 0, 1, 1, 1, 1;
  const auto fit = solve_binary_mle<double>(two, vec({0, 1, 1, 0}), Eigen::VectorXd::Ones(4), Link::logit);
  CHECK(std::abs(fit.coefficients(0)) < 1e-10);
  CHECK(std::abs(fit.coefficients(1)) < 1e-10);
}

TEST_CASE("binary MLE with group dummies reproduces weighted fractions") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.2, 2.0);
  for (Link link : {Link::logit, Link::probit}) {
    const Eigen::Index n = 60;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 3);
    Eigen::VectorXd d(n);
    Eigen::VectorXd w(n);
    double success[3] = {0, 0, 0};
    double total[3] = {0, 0, 0};
    for (Eigen::Index i = 0; i < n; ++i) {
      const int g = static_cast<int>(i % 3);
      x(i, g) = 1.0;
      d(i) = (i / 3) % (g + 2) == 0 ? 1.0 : 0.0;
      w(i) = unif(rng);
      success[g] += w(i) * d(i);
      total[g] += w(i);
    }
    const auto fit = solve_binary_mle<double>(x, d, w, link);
    for (int g = 0; g < 3; ++g) CHECK(link_cdf(link, fit.coefficients(g)) == doctest::Approx(success[g] / total[g]).epsilon(1e-8));
  }
}

TEST_CASE("binary MLE optimum has zero finite-difference gradient") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> expo;
  for (Link link : {Link::logit, Link::probit}) {
    const Eigen::Index n = 200;
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd d(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      x(i, 1) = normal(rng);
      x(i, 2) = x(i, 1) * normal(rng);
      d(i) = 0.3 + 0.8 * x(i, 1) + normal(rng) > 0.0 ? 1.0 : 0.0;
      w(i) = expo(rng);
    }
    const auto fit = solve_binary_mle<double>(x, d, w, link);
    CHECK(fit.report.converged);
    const Eigen::VectorXd g = numeric_gradient(x, d, w, link, fit.coefficients);
    CHECK(g.norm() / w.sum() < 1e-6);
    // Any perturbation lowers the likelihood.
    const double best = loglik(x, d, w, link, fit.coefficients);
    for (Eigen::Index j = 0; j < 3; ++j) {
      Eigen::VectorXd b = fit.coefficients;
      b(j) += 1e-3;
      CHECK(loglik(x, d, w, link, b) < best);
    }
  }
}

TEST_CASE("binary MLE reports separation") {
  Eigen::MatrixXd x(6, 2);
  x << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  try {
    solve_binary_mle<double>(x, vec({0, 0, 0, 1, 1, 1}), Eigen::VectorXd::Ones(6), Link::logit);
    FAIL("expected Separation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Separation);
  }
}

TEST_CASE("empirical quantile follows the ceiling order-statistic rule") {
  const Eigen::VectorXd s = vec({5, 3, 1, 4, 2});
  CHECK(empirical_quantile(s, 0.75) == 4.0);
  CHECK(empirical_quantile(s, 0.25) == 2.0);
  CHECK(empirical_quantile(vec({7}), 0.5) == 7.0);
  CHECK(empirical_quantile(s, 0.0) == 1.0);
  CHECK(empirical_quantile(s, 1.0) == 5.0);
  CHECK_THROWS_AS(empirical_quantile(Eigen::VectorXd(0), 0.5), Error);
  double previous = -1e300;
  for (double p = 0.0; p <= 1.0; p += 0.01) {
    const double q = empirical_quantile(s, p);
    CHECK(q >= previous);
    CHECK(empirical_quantile(Eigen::VectorXd(s.array() + 10.0), p) == q + 10.0);
    previous = q;
  }
}

TEST_CASE("rescaled interquartile range") {
  CHECK(iqr_scaled_sd(vec({1, 2, 3, 4, 5})) == doctest::Approx(2.0 / 1.349));
  CHECK(iqr_scaled_sd(vec({0, 1})) == doctest::Approx(1.0 / 1.349));
  CHECK(iqr_scaled_sd(vec({4, 4, 4})) == 0.0);
}

TEST_CASE("monotone rearrangement") {
  CHECK(rearrange_monotone(vec({0.2, 0.5, 0.4})) == vec({0.2, 0.4, 0.5}));
  CHECK(rearrange_monotone(vec({1, 0, 1, 0})) == vec({0, 0, 1, 1}));
  CHECK(rearrange_monotone(vec({1, 2, 3})) == vec({1, 2, 3}));
}

TEST_CASE("path interpolation") {
  Eigen::VectorXd grid = vec({0, 1});
  Eigen::MatrixXd values(2, 1);
  values << 0, 2;
  CHECK(interpolate_path<double>(grid, values, 0.5)(0) == 1.0);
  CHECK(interpolate_path<double>(grid, values, 1.0)(0) == 2.0);
  CHECK(interpolate_path<double>(grid, values, -1.0)(0) == 0.0);
  CHECK_THROWS_AS(interpolate_path<double>(vec({1, 0}), values, 0.5), Error);
}

TEST_CASE("normal quantile agrees with boost") {
  const boost::math::normal_distribution<double> law;
  for (double p : {1e-12, 1e-6, 0.001, 0.01, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.975, 0.99, 0.999999}) {
    const double expected = boost::math::quantile(law, p);
    CHECK(normal_quantile(p) == doctest::Approx(expected).epsilon(1e-13));
  }
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(std::isinf(normal_quantile(0.0)));
}
