#include "cfsf/second_stage.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <set>

#include "cfsf/error.hpp"
#include "cfsf/numerics.hpp"

namespace cfsf {

namespace {

std::string format_value(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.6g", v);
  return buffer;
}

Eigen::VectorXd effective_weights(const Eigen::VectorXd& weights, const ControlFunctionFit& cf) {
  if (weights.size() != cf.trim.size()) throw Error(ErrorKind::InvalidInput, "weights have wrong length");
  Eigen::VectorXd w = weights.cwiseProduct(cf.trim);
  if (!(w.sum() > 0.0)) throw Error(ErrorKind::EmptyAfterTrim, "no kept rows carry positive weight");
  return w;
}

std::string rank_diagnostic(const Eigen::MatrixXd& design, const Eigen::VectorXd& w) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) > 0.0) rows.push_back(i);
  }
  Eigen::MatrixXd kept(static_cast<Eigen::Index>(rows.size()), design.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) kept.row(static_cast<Eigen::Index>(r)) = design.row(rows[r]);
  const auto check = check_full_rank(kept);
  return " (min eigenvalue of the scaled moment matrix: " + format_value(check.min_eigenvalue) + ")";
}

}  // namespace

SecondStageFit fit_second_stage_qr(const ObservationTable& table, const Eigen::VectorXd& weights,
                                   const ControlFunctionFit& cf, const RegressorBasis& basis, int grid_size,
                                   double epsilon) {
  const Eigen::VectorXd w = effective_weights(weights, cf);
  const Eigen::MatrixXd design = basis.second_stage_design(table, cf.v_hat, cf.trim);

  SecondStageFit fit;
  fit.method = Method::qr;
  fit.epsilon = epsilon;
  fit.path.grid = quantile_levels(grid_size, epsilon);
  fit.path.coefficients.resize(grid_size, design.cols());

  std::optional<QuantileRegressionSolver<double>> solver;
  try {
    solver.emplace(design, table.y, w);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::RankDeficient) {
      throw Error(ErrorKind::RankDeficient, std::string("second stage: ") + e.what() + rank_diagnostic(design, w));
    }
    throw;
  }
  for (Eigen::Index m = 0; m < fit.path.grid.size(); ++m) {
    try {
      const auto result = solver->solve(fit.path.grid(m));
      if (!result.report.converged) throw Error(ErrorKind::NoConvergence, "iteration limit reached");
      fit.path.coefficients.row(m) = result.coefficients.transpose();
    } catch (const Error& e) {
      throw Error(e.kind(), "second stage at quantile level " + format_value(fit.path.grid(m)) + ": " + e.what());
    }
  }
  return fit;
}

double qr_reduced_cdf(double y, double x, const Eigen::VectorXd& z1, double v, const SecondStageFit& fit,
                      const RegressorBasis& basis) {
  const Eigen::VectorXd w = basis.second_stage_row(x, z1, v);
  const Eigen::VectorXd quantiles = fit.path.coefficients * w;
  const auto below = (quantiles.array() <= y).count();
  return fit.epsilon + (1.0 - 2.0 * fit.epsilon) * static_cast<double>(below) / static_cast<double>(fit.path.size());
}

SecondStageFit fit_second_stage_dr(const ObservationTable& table, const Eigen::VectorXd& weights,
                                   const ControlFunctionFit& cf, const RegressorBasis& basis, const Grid& thresholds,
                                   Link link) {
  const Eigen::VectorXd w = effective_weights(weights, cf);
  const Eigen::MatrixXd design = basis.second_stage_design(table, cf.v_hat, cf.trim);

  SecondStageFit fit;
  fit.method = Method::dr;
  fit.link = link;
  fit.support_max = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    if (w(i) > 0.0) fit.support_max = std::max(fit.support_max, table.y(i));
  }

  std::vector<double> kept_grid;
  std::vector<Eigen::VectorXd> kept_rows;
  Eigen::VectorXd indicator(table.rows());
  Eigen::VectorXd previous;
  for (Eigen::Index m = 0; m < thresholds.size(); ++m) {
    const double threshold = thresholds.points(m);
    if (threshold >= fit.support_max) break;
    for (Eigen::Index i = 0; i < table.rows(); ++i) indicator(i) = table.y(i) <= threshold ? 1.0 : 0.0;
    try {
      const auto result = solve_binary_mle<double>(design, indicator, w, link, {},
                                                   previous.size() > 0 ? &previous : nullptr);
      previous = result.coefficients;
      kept_grid.push_back(threshold);
      kept_rows.push_back(result.coefficients);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::RankDeficient) {
        throw Error(ErrorKind::RankDeficient, std::string("second stage: ") + e.what() + rank_diagnostic(design, w));
      }
      if (e.kind() != ErrorKind::Separation && e.kind() != ErrorKind::NoConvergence) throw;
      fit.warnings.push_back("second stage: dropped threshold " + format_value(threshold) + " (" + e.what() + ")");
    }
  }
  if (kept_grid.empty()) throw Error(ErrorKind::Separation, "second stage: every threshold was separated");
  fit.path.grid = Eigen::Map<const Eigen::VectorXd>(kept_grid.data(), static_cast<Eigen::Index>(kept_grid.size()));
  fit.path.coefficients.resize(fit.path.grid.size(), design.cols());
  for (std::size_t m = 0; m < kept_rows.size(); ++m) {
    fit.path.coefficients.row(static_cast<Eigen::Index>(m)) = kept_rows[m].transpose();
  }
  return fit;
}

double dr_reduced_cdf(double y, double x, const Eigen::VectorXd& z1, double v, const SecondStageFit& fit,
                      const RegressorBasis& basis) {
  if (y >= fit.support_max) return 1.0;
  const auto& grid = fit.path.grid;
  const auto upper = std::upper_bound(grid.data(), grid.data() + grid.size(), y) - grid.data();
  if (upper == 0) return 0.0;
  const Eigen::VectorXd w = basis.second_stage_row(x, z1, v);
  return link_cdf(fit.link, static_cast<double>(fit.path.coefficients.row(upper - 1) * w));
}

double reduced_cdf(double y, double x, const Eigen::VectorXd& z1, double v, const SecondStageFit& fit,
                   const RegressorBasis& basis) {
  return fit.method == Method::qr ? qr_reduced_cdf(y, x, z1, v, fit, basis)
                                  : dr_reduced_cdf(y, x, z1, v, fit, basis);
}

Grid default_second_stage_thresholds(const Eigen::VectorXd& kept_y, const Grid& mesh, bool discrete) {
  if (kept_y.size() < 1) throw Error(ErrorKind::EmptyAfterTrim, "no outcomes to place thresholds");
  const double lo = kept_y.minCoeff();
  const double hi = kept_y.maxCoeff();
  std::vector<double> points;
  if (discrete) {
    const std::set<double> support(kept_y.data(), kept_y.data() + kept_y.size());
    for (double value : support) {
      if (value < hi) points.push_back(value);
    }
  } else {
    for (Eigen::Index s = 0; s < mesh.size(); ++s) {
      const double value = mesh.points(s);
      if (value >= lo && value < hi) points.push_back(value);
    }
  }
  if (points.empty()) throw Error(ErrorKind::InvalidInput, "outcome has a single support point");
  Grid grid;
  grid.placement = discrete ? GridPlacement::sample_quantile : mesh.placement;
  grid.points = Eigen::Map<const Eigen::VectorXd>(points.data(), static_cast<Eigen::Index>(points.size()));
  return grid;
}

}  // namespace cfsf
