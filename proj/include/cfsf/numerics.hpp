#pragma once

// Core solvers and scalar utilities. Everything here is templated on the
// scalar type and works on Eigen dense objects; nothing keeps global state.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cfsf/distributions.hpp"
#include "cfsf/error.hpp"

namespace cfsf {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct SolverReport {
  bool converged = false;
  int iterations = 0;
  Scalar final_objective = 0;
  Scalar gradient_norm = 0;
};

template <typename Scalar>
struct RegressionFit {
  Vec<Scalar> coefficients;
  SolverReport<Scalar> report;
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.derived().allFinite()) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + " has non-finite entries");
  }
}

// Rows carrying positive weight, in their original order.
template <typename Scalar>
std::vector<Eigen::Index> positive_rows(const Eigen::Ref<const Vec<Scalar>>& weights) {
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(weights.size()));
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights(i) < Scalar(0)) throw Error(ErrorKind::InvalidInput, "negative weight");
    if (weights(i) > Scalar(0)) rows.push_back(i);
  }
  return rows;
}

template <typename Scalar>
void validate_regression_inputs(const Eigen::Ref<const Mat<Scalar>>& design,
                                const Eigen::Ref<const Vec<Scalar>>& response,
                                const Eigen::Ref<const Vec<Scalar>>& weights) {
  if (design.rows() != response.size() || design.rows() != weights.size()) {
    throw Error(ErrorKind::InvalidInput, "design, response and weights disagree in length");
  }
  if (design.cols() < 1) throw Error(ErrorKind::InvalidInput, "design has no columns");
  require_finite(design, "design");
  require_finite(response, "response");
  require_finite(weights, "weights");
}

template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar log_normal_cdf(Scalar x) {
  if (x > Scalar(-30)) return std::log(normal_cdf(x));
  const Scalar x2 = x * x;
  return -x2 / Scalar(2) - std::log(-x) - Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) +
         std::log1p(-Scalar(1) / x2 + Scalar(3) / (x2 * x2));
}

// phi(x) / Phi(x).
template <typename Scalar>
Scalar inverse_mills(Scalar x) {
  if (x > Scalar(-30)) return normal_pdf(x) / normal_cdf(x);
  const Scalar x2 = x * x;
  return -x / (Scalar(1) - Scalar(1) / x2 + Scalar(3) / (x2 * x2));
}

// Log-likelihood contribution, score and negative second derivative of one
// Bernoulli observation with respect to its index.
template <typename Scalar>
struct BernoulliTerms {
  Scalar loglik;
  Scalar score;
  Scalar curvature;
};

template <typename Scalar>
BernoulliTerms<Scalar> bernoulli_terms(Link link, bool success, Scalar index) {
  if (link == Link::logit) {
    const Scalar p = logistic_cdf(index);
    const Scalar ll = success ? -softplus(-index) : -softplus(index);
    return {ll, (success ? Scalar(1) : Scalar(0)) - p, p * (Scalar(1) - p)};
  }
  const Scalar s = success ? index : -index;
  const Scalar lambda = inverse_mills(s);
  const Scalar ll = log_normal_cdf(s);
  const Scalar score = success ? lambda : -lambda;
  return {ll, score, lambda * (lambda + s)};
}

template <typename Scalar>
struct Breakpoint {
  Scalar step;
  Scalar mass;
  Eigen::Index row;
};

// Smallest breakpoint at which the accumulated mass reaches `need`
// (a weighted quantile by selection, linear on average).
template <typename Scalar>
Eigen::Index first_breakpoint_reaching(std::vector<Breakpoint<Scalar>>& points, Scalar need) {
  auto by_step = [](const Breakpoint<Scalar>& a, const Breakpoint<Scalar>& b) { return a.step < b.step; };
  auto lo = points.begin();
  auto hi = points.end();
  while (lo < hi) {
    if (hi - lo <= 16) {
      std::sort(lo, hi, by_step);
      for (auto it = lo; it != hi; ++it) {
        need -= it->mass;
        if (need <= Scalar(0)) return it->row;
      }
      return -1;
    }
    auto mid = lo + (hi - lo) / 2;
    std::nth_element(lo, mid, hi, by_step);
    Scalar left = 0;
    for (auto it = lo; it != mid; ++it) left += it->mass;
    if (left >= need) {
      hi = mid;
    } else {
      need -= left;
      if (mid->mass >= need) return mid->row;
      need -= mid->mass;
      lo = mid + 1;
    }
  }
  return -1;
}

}  // namespace detail

/// Weighted linear quantile regression, min_b sum_i w_i rho_tau(y_i - x_i'b).
///
/// Solved by exact descent over basic solutions (each iterate interpolates
/// k observations): at every vertex the directional derivative along all 2k
/// edges is computed, the steepest descending edge is followed to the
/// minimizer of the piecewise-linear objective along it, and the basis is
/// updated. Each step strictly lowers the objective, so the method stops at
/// a vertex where zero lies in the subdifferential. Consecutive `solve`
/// calls start from the previous optimal basis, which makes a sweep over a
/// fine grid of quantile levels cost a handful of pivots per level.
///
/// Rows with zero weight are dropped on construction and have no influence
/// on any result.
template <typename Scalar>
class QuantileRegressionSolver {
 public:
  struct Options {
    // Edge derivatives normalized by |d| sum_i w_i |x_i| must be >= -tolerance.
    Scalar optimality_tolerance = Scalar(1e-10);
    int max_iterations = 0;  // 0 selects 100 + 20 * rows
  };

  QuantileRegressionSolver(const Eigen::Ref<const Mat<Scalar>>& design,
                           const Eigen::Ref<const Vec<Scalar>>& response,
                           const Eigen::Ref<const Vec<Scalar>>& weights)
      : QuantileRegressionSolver(design, response, weights, Options{}) {}

  QuantileRegressionSolver(const Eigen::Ref<const Mat<Scalar>>& design,
                           const Eigen::Ref<const Vec<Scalar>>& response,
                           const Eigen::Ref<const Vec<Scalar>>& weights, Options options)
      : options_(options) {
    detail::validate_regression_inputs<Scalar>(design, response, weights);
    const auto rows = detail::positive_rows<Scalar>(weights);
    if (rows.empty()) throw Error(ErrorKind::InvalidInput, "no positive weights");
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index k = design.cols();
    if (n < k) throw Error(ErrorKind::RankDeficient, "fewer weighted rows than regressors");

    x_.resize(n, k);
    y_.resize(n);
    w_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x_.row(i) = design.row(rows[static_cast<std::size_t>(i)]);
      y_(i) = response(rows[static_cast<std::size_t>(i)]);
      w_(i) = weights(rows[static_cast<std::size_t>(i)]);
    }

    Eigen::ColPivHouseholderQR<Mat<Scalar>> qr(x_.transpose());
    qr.setThreshold(Scalar(1e-10));
    if (qr.rank() < k) {
      throw Error(ErrorKind::RankDeficient,
                  "design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(k));
    }
    basis_.resize(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) basis_[static_cast<std::size_t>(j)] = qr.colsPermutation().indices()(j);

    residual_tolerance_ = Scalar(1e-11) * (Scalar(1) + y_.cwiseAbs().maxCoeff());
    weighted_row_norm_ = x_.rowwise().norm().dot(w_);
    in_basis_.assign(static_cast<std::size_t>(n), 0);
  }

  Eigen::Index rows() const { return x_.rows(); }
  Eigen::Index cols() const { return x_.cols(); }

  RegressionFit<Scalar> solve(Scalar tau) {
    if (!(tau > Scalar(0) && tau < Scalar(1))) {
      throw Error(ErrorKind::InvalidInput, "quantile level must lie in (0,1)");
    }
    const Eigen::Index n = x_.rows();
    const Eigen::Index k = x_.cols();
    const int max_iterations = options_.max_iterations > 0 ? options_.max_iterations
                                                          : 100 + 20 * static_cast<int>(n);

    Mat<Scalar> basis_rows(k, k);
    Vec<Scalar> basis_response(k);
    Vec<Scalar> beta(k);
    Vec<Scalar> residual(n);
    Vec<Scalar> psi(n);
    Vec<Scalar> direction_edge(n);
    std::vector<Eigen::Index> degenerate;
    std::vector<detail::Breakpoint<Scalar>> breakpoints;
    breakpoints.reserve(static_cast<std::size_t>(n));
    for (auto row : basis_) in_basis_[static_cast<std::size_t>(row)] = 1;

    RegressionFit<Scalar> fit;
    for (int iteration = 0;; ++iteration) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::Index row = basis_[static_cast<std::size_t>(j)];
        basis_rows.row(j) = x_.row(row);
        basis_response(j) = y_(row);
      }
      Eigen::PartialPivLU<Mat<Scalar>> lu(basis_rows);
      beta = lu.solve(basis_response);
      // Column j of B^{-1} is the direction d_j that moves x_j'b by one unit
      // and keeps the other basic fits; x_i'd_j is the edge coefficient of row i.
      const Mat<Scalar> inverse = lu.inverse();

      residual.noalias() = y_ - x_ * beta;
      degenerate.clear();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (in_basis_[static_cast<std::size_t>(i)]) {
          residual(i) = 0;
          psi(i) = 0;
        } else if (residual(i) > residual_tolerance_) {
          psi(i) = -tau * w_(i);
        } else if (residual(i) < -residual_tolerance_) {
          psi(i) = (Scalar(1) - tau) * w_(i);
        } else {
          psi(i) = 0;
          degenerate.push_back(i);
        }
      }
      const Vec<Scalar> linear = inverse.transpose() * (x_.transpose() * psi);
      Mat<Scalar> degenerate_edge(static_cast<Eigen::Index>(degenerate.size()), k);
      for (std::size_t d = 0; d < degenerate.size(); ++d) {
        degenerate_edge.row(static_cast<Eigen::Index>(d)) = x_.row(degenerate[d]) * inverse;
      }

      Scalar best = 0;
      Eigen::Index best_edge = -1;
      Scalar best_sign = 0;
      Scalar best_raw = 0;
      Scalar worst_normalized = 0;
      for (Eigen::Index j = 0; j < k; ++j) {
        const Scalar wb = w_(basis_[static_cast<std::size_t>(j)]);
        Scalar up = linear(j) + wb * (Scalar(1) - tau);
        Scalar down = -linear(j) + wb * tau;
        for (std::size_t d = 0; d < degenerate.size(); ++d) {
          const Scalar a = degenerate_edge(static_cast<Eigen::Index>(d), j);
          const Scalar wi = w_(degenerate[d]);
          up += wi * std::max((Scalar(1) - tau) * a, -tau * a);
          down += wi * std::max(-(Scalar(1) - tau) * a, tau * a);
        }
        // sum_i w_i |x_i'd_j| <= |d_j| * sum_i w_i |x_i|
        const Scalar bound = inverse.col(j).norm() * weighted_row_norm_;
        const Scalar norm = bound > Scalar(0) ? bound : Scalar(1);
        for (const auto& [raw, sign] : {std::pair{up, Scalar(1)}, std::pair{down, Scalar(-1)}}) {
          const Scalar normalized = raw / norm;
          worst_normalized = std::min(worst_normalized, normalized);
          if (normalized < -options_.optimality_tolerance && normalized < best) {
            best = normalized;
            best_edge = j;
            best_sign = sign;
            best_raw = raw;
          }
        }
      }

      fit.report.iterations = iteration;
      fit.report.gradient_norm = -worst_normalized;
      if (best_edge < 0) {
        fit.report.converged = true;
        break;
      }
      if (iteration >= max_iterations) {
        fit.report.converged = false;
        break;
      }

      direction_edge.noalias() = x_ * inverse.col(best_edge);
      breakpoints.clear();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (psi(i) == Scalar(0)) continue;  // basic or degenerate
        const Scalar a = best_sign * direction_edge(i);
        if (a == Scalar(0)) continue;
        const Scalar step = residual(i) / a;
        if (step > Scalar(0)) breakpoints.push_back({step, w_(i) * std::abs(a), i});
      }
      const Eigen::Index entering = detail::first_breakpoint_reaching(breakpoints, -best_raw);
      if (entering < 0) {
        throw Error(ErrorKind::NoConvergence, "quantile regression objective unbounded along an edge");
      }
      in_basis_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(best_edge)])] = 0;
      in_basis_[static_cast<std::size_t>(entering)] = 1;
      basis_[static_cast<std::size_t>(best_edge)] = entering;
    }
    for (auto row : basis_) in_basis_[static_cast<std::size_t>(row)] = 0;

    Scalar objective = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar r = residual(i);
      objective += w_(i) * r * (tau - (r < Scalar(0) ? Scalar(1) : Scalar(0)));
    }
    fit.coefficients = beta;
    fit.report.final_objective = objective;
    return fit;
  }

 private:
  Options options_;
  Mat<Scalar> x_;
  Vec<Scalar> y_;
  Vec<Scalar> w_;
  std::vector<Eigen::Index> basis_;
  std::vector<char> in_basis_;
  Scalar residual_tolerance_ = 0;
  Scalar weighted_row_norm_ = 0;  // sum_i w_i |x_i|
};

template <typename Scalar>
RegressionFit<Scalar> solve_quantile_regression(const Eigen::Ref<const Mat<Scalar>>& design,
                                                const Eigen::Ref<const Vec<Scalar>>& response,
                                                const Eigen::Ref<const Vec<Scalar>>& weights, Scalar tau) {
  QuantileRegressionSolver<Scalar> solver(design, response, weights);
  return solver.solve(tau);
}

template <typename Scalar>
struct BinaryMleOptions {
  int max_iterations = 100;
  Scalar gradient_tolerance = Scalar(1e-8);  // on the weight-normalized score
  Scalar coefficient_cap = Scalar(30);
  int max_halvings = 50;
};

/// Weighted Bernoulli maximum likelihood for P(y = 1) = Gamma(x'b) by damped
/// Newton with step halving. `start` seeds the iteration (e.g. the fit at a
/// neighbouring threshold); a start beyond the coefficient cap is ignored.
template <typename Scalar>
RegressionFit<Scalar> solve_binary_mle(const Eigen::Ref<const Mat<Scalar>>& design,
                                       const Eigen::Ref<const Vec<Scalar>>& indicator,
                                       const Eigen::Ref<const Vec<Scalar>>& weights, Link link,
                                       const BinaryMleOptions<Scalar>& options = {},
                                       const Vec<Scalar>* start = nullptr) {
  detail::validate_regression_inputs<Scalar>(design, indicator, weights);
  const auto rows = detail::positive_rows<Scalar>(weights);
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index k = design.cols();
  if (n == 0) throw Error(ErrorKind::InvalidInput, "no positive weights");

  Mat<Scalar> x(n, k);
  std::vector<char> success(static_cast<std::size_t>(n));
  Vec<Scalar> w(n);
  bool any_success = false;
  bool any_failure = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index row = rows[static_cast<std::size_t>(i)];
    const Scalar value = indicator(row);
    if (value != Scalar(0) && value != Scalar(1)) {
      throw Error(ErrorKind::InvalidInput, "indicator values must be 0 or 1");
    }
    x.row(i) = design.row(row);
    w(i) = weights(row);
    success[static_cast<std::size_t>(i)] = value == Scalar(1);
    any_success = any_success || value == Scalar(1);
    any_failure = any_failure || value == Scalar(0);
  }
  if (!any_success || !any_failure) {
    throw Error(ErrorKind::Separation, "indicator is constant on the weighted rows");
  }
  {
    Eigen::ColPivHouseholderQR<Mat<Scalar>> qr(x);
    qr.setThreshold(Scalar(1e-10));
    if (qr.rank() < k) {
      throw Error(ErrorKind::RankDeficient,
                  "design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(k));
    }
  }
  const Scalar total_weight = w.sum();

  Vec<Scalar> beta = Vec<Scalar>::Zero(k);
  if (start != nullptr && start->size() == k && start->allFinite() &&
      start->cwiseAbs().maxCoeff() <= options.coefficient_cap) {
    beta = *start;
  }

  auto loglik = [&](const Vec<Scalar>& b) {
    const Vec<Scalar> index = x * b;
    Scalar total = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      total += w(i) * detail::bernoulli_terms(link, success[static_cast<std::size_t>(i)] != 0, index(i)).loglik;
    }
    return total;
  };

  auto score_norm = [&](const Vec<Scalar>& b) {
    const Vec<Scalar> index = x * b;
    Vec<Scalar> g = Vec<Scalar>::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      g += w(i) * detail::bernoulli_terms(link, success[static_cast<std::size_t>(i)] != 0, index(i)).score *
           x.row(i).transpose();
    }
    return g.cwiseAbs().maxCoeff() / total_weight;
  };

  RegressionFit<Scalar> fit;
  Vec<Scalar> score(n);
  Vec<Scalar> curvature(n);
  bool polished = false;
  for (int iteration = 0; iteration <= options.max_iterations; ++iteration) {
    const Vec<Scalar> index = x * beta;
    Scalar current = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto t = detail::bernoulli_terms(link, success[static_cast<std::size_t>(i)] != 0, index(i));
      current += w(i) * t.loglik;
      score(i) = w(i) * t.score;
      curvature(i) = w(i) * t.curvature;
    }
    const Vec<Scalar> gradient = x.transpose() * score;
    const Scalar gradient_norm = gradient.cwiseAbs().maxCoeff() / total_weight;
    fit.report.iterations = iteration;
    fit.report.final_objective = current;
    fit.report.gradient_norm = gradient_norm;
    if (gradient_norm <= options.gradient_tolerance) {
      fit.report.converged = true;
      if (polished) break;
    }
    if (iteration == options.max_iterations) break;

    const Mat<Scalar> information = x.transpose() * curvature.asDiagonal() * x;
    Eigen::LDLT<Mat<Scalar>> ldlt(information);
    Vec<Scalar> direction = ldlt.solve(gradient);
    if (ldlt.info() != Eigen::Success || !direction.allFinite()) direction = gradient;

    // Near the optimum the log-likelihood is flat to rounding while the score
    // is not yet below tolerance; a step that loses only rounding noise is
    // accepted when it shrinks the score.
    const Scalar noise = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + std::abs(current));
    auto acceptable = [&](const Vec<Scalar>& b, Scalar value) {
      if (value >= current) return true;
      if (!(value >= current - noise)) return false;
      return score_norm(b) < gradient_norm;
    };
    Scalar step = 1;
    Vec<Scalar> candidate = beta + direction;
    Scalar value = loglik(candidate);
    int halvings = 0;
    while (!acceptable(candidate, value) && halvings < options.max_halvings) {
      step /= Scalar(2);
      candidate = beta + step * direction;
      value = loglik(candidate);
      ++halvings;
    }
    if (!acceptable(candidate, value)) {
      // No ascent possible at working precision: already at the optimum.
      if (fit.report.converged) break;
      throw Error(ErrorKind::NoConvergence, "line search failed before reaching gradient tolerance");
    }
    if (candidate.cwiseAbs().maxCoeff() > options.coefficient_cap) {
      throw Error(ErrorKind::Separation, "coefficient magnitude exceeded cap; likelihood appears unbounded");
    }
    beta = candidate;
    if (fit.report.converged) {
      polished = true;
      fit.report.converged = false;  // re-evaluated at the polished point
    }
  }
  if (!fit.report.converged) {
    throw Error(ErrorKind::NoConvergence, "binary MLE did not reach gradient tolerance");
  }
  // Complete separation: the score can fall below tolerance at a finite point
  // while every row is already fitted with probability one to working accuracy.
  {
    const Vec<Scalar> index = x * beta;
    bool separated = true;
    for (Eigen::Index i = 0; i < n && separated; ++i) {
      const auto t = detail::bernoulli_terms(link, success[static_cast<std::size_t>(i)] != 0, index(i));
      separated = t.loglik > Scalar(-1e-6);
    }
    if (separated) {
      throw Error(ErrorKind::Separation, "every row is fitted with probability one; likelihood appears unbounded");
    }
  }
  fit.coefficients = beta;
  return fit;
}

/// Order statistic at 1-based index ceil(p * m): the left-continuous inverse
/// of the empirical distribution function. p = 0 maps to the minimum.
template <typename Derived>
typename Derived::Scalar empirical_quantile(const Eigen::DenseBase<Derived>& sample,
                                            typename Derived::Scalar p) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index m = sample.size();
  if (m < 1) throw Error(ErrorKind::InvalidInput, "empty sample");
  if (!(p >= Scalar(0) && p <= Scalar(1))) throw Error(ErrorKind::InvalidInput, "probability outside [0,1]");
  detail::require_finite(sample, "sample");
  std::vector<Scalar> values(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) values[static_cast<std::size_t>(i)] = sample.derived().coeff(i);
  auto rank = static_cast<Eigen::Index>(std::ceil(p * static_cast<Scalar>(m)));
  rank = std::clamp<Eigen::Index>(rank, 1, m);
  auto nth = values.begin() + (rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

/// Interquartile range rescaled to the standard deviation of a normal law.
template <typename Derived>
typename Derived::Scalar iqr_scaled_sd(const Eigen::DenseBase<Derived>& sample) {
  using Scalar = typename Derived::Scalar;
  if (sample.size() < 2) throw Error(ErrorKind::InvalidInput, "need at least two values");
  return (empirical_quantile(sample, Scalar(0.75)) - empirical_quantile(sample, Scalar(0.25))) / Scalar(1.349);
}

/// Monotone rearrangement: the nondecreasing sort of the values.
template <typename Derived>
Vec<typename Derived::Scalar> rearrange_monotone(const Eigen::DenseBase<Derived>& values) {
  Vec<typename Derived::Scalar> sorted = values;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  return sorted;
}

/// Coordinatewise linear interpolation of a path stored one row per grid
/// point; queries outside the grid take the nearest endpoint row.
template <typename Scalar>
Vec<Scalar> interpolate_path(const Eigen::Ref<const Vec<Scalar>>& grid, const Eigen::Ref<const Mat<Scalar>>& values,
                             Scalar query) {
  const Eigen::Index m = grid.size();
  if (m < 2) throw Error(ErrorKind::InvalidInput, "interpolation needs at least two grid points");
  if (values.rows() != m) throw Error(ErrorKind::InvalidInput, "path rows must match grid size");
  for (Eigen::Index i = 1; i < m; ++i) {
    if (!(grid(i) > grid(i - 1))) throw Error(ErrorKind::InvalidInput, "grid must be strictly increasing");
  }
  if (query <= grid(0)) return values.row(0).transpose();
  if (query >= grid(m - 1)) return values.row(m - 1).transpose();
  const auto upper = std::upper_bound(grid.data(), grid.data() + m, query) - grid.data();
  const Eigen::Index lo = upper - 1;
  const Scalar t = (query - grid(lo)) / (grid(upper) - grid(lo));
  if (t == Scalar(0)) return values.row(lo).transpose();
  return ((Scalar(1) - t) * values.row(lo) + t * values.row(upper)).transpose();
}

}  // namespace cfsf
