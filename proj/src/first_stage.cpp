#include "cfsf/first_stage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cfsf/error.hpp"
#include "cfsf/numerics.hpp"

namespace cfsf {

namespace {

std::string format_value(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.6g", v);
  return buffer;
}

constexpr double kProbabilityFloor = 1e-12;

}  // namespace

void TrimRule::validate() const {
  if (std::isnan(lower) || std::isnan(upper) || !(lower < upper)) {
    throw Error(ErrorKind::InvalidInput, "trim bounds must satisfy lower < upper");
  }
}

Eigen::VectorXd quantile_levels(int count, double epsilon) {
  if (count < 2) throw Error(ErrorKind::InvalidInput, "need at least two quantile levels");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw Error(ErrorKind::InvalidInput, "epsilon must lie in (0, 0.5)");
  return make_equidistant_grid(epsilon, 1.0 - epsilon, count).points;
}

CoefficientPath fit_first_stage_qr(const Eigen::MatrixXd& design, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& weights, int grid_size, double epsilon) {
  CoefficientPath path;
  path.grid = quantile_levels(grid_size, epsilon);
  path.coefficients.resize(grid_size, design.cols());
  QuantileRegressionSolver<double> solver(design, x, weights);
  for (Eigen::Index m = 0; m < path.grid.size(); ++m) {
    try {
      const auto fit = solver.solve(path.grid(m));
      if (!fit.report.converged) throw Error(ErrorKind::NoConvergence, "iteration limit reached");
      path.coefficients.row(m) = fit.coefficients.transpose();
    } catch (const Error& e) {
      throw Error(e.kind(), std::string("first stage at quantile level ") + format_value(path.grid(m)) + ": " +
                                e.what());
    }
  }
  return path;
}

double qr_control_value(double x, const Eigen::VectorXd& r, const CoefficientPath& path, double epsilon) {
  if (path.empty()) throw Error(ErrorKind::InvalidInput, "empty coefficient path");
  const Eigen::VectorXd quantiles = path.coefficients * r;
  const auto below = (quantiles.array() <= x).count();
  const double v = epsilon + (1.0 - 2.0 * epsilon) * static_cast<double>(below) / static_cast<double>(path.size());
  return std::clamp(v, epsilon, 1.0 - epsilon);
}

CoefficientPath fit_first_stage_dr(const Eigen::MatrixXd& design, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& weights, const Grid& thresholds, Link link,
                                   std::vector<std::string>* warnings) {
  const Eigen::Index grid_size = thresholds.size();
  if (grid_size < 1) throw Error(ErrorKind::InvalidInput, "empty threshold grid");
  std::vector<double> kept_grid;
  std::vector<Eigen::VectorXd> kept_rows;
  Eigen::VectorXd indicator(x.size());
  Eigen::VectorXd previous;
  for (Eigen::Index m = 0; m < grid_size; ++m) {
    const double threshold = thresholds.points(m);
    for (Eigen::Index i = 0; i < x.size(); ++i) indicator(i) = x(i) <= threshold ? 1.0 : 0.0;
    try {
      const auto fit = solve_binary_mle<double>(design, indicator, weights, link, {},
                                                previous.size() > 0 ? &previous : nullptr);
      previous = fit.coefficients;
      kept_grid.push_back(threshold);
      kept_rows.push_back(fit.coefficients);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Separation && e.kind() != ErrorKind::NoConvergence) {
        throw Error(e.kind(), "first stage at threshold " + format_value(threshold) + ": " + e.what());
      }
      if (warnings != nullptr) {
        warnings->push_back("first stage: dropped threshold " + format_value(threshold) + " (" + e.what() + ")");
      }
    }
  }
  if (kept_grid.empty()) throw Error(ErrorKind::Separation, "first stage: every threshold was separated");
  CoefficientPath path;
  path.grid = Eigen::Map<const Eigen::VectorXd>(kept_grid.data(), static_cast<Eigen::Index>(kept_grid.size()));
  path.coefficients.resize(path.grid.size(), design.cols());
  for (std::size_t m = 0; m < kept_rows.size(); ++m) {
    path.coefficients.row(static_cast<Eigen::Index>(m)) = kept_rows[m].transpose();
  }
  return path;
}

double dr_control_value(double x, const Eigen::VectorXd& r, const CoefficientPath& path, Link link) {
  if (path.empty()) throw Error(ErrorKind::InvalidInput, "empty coefficient path");
  const Eigen::VectorXd index = path.coefficients * r;
  Eigen::VectorXd probability(index.size());
  for (Eigen::Index m = 0; m < index.size(); ++m) probability(m) = link_cdf(link, index(m));
  probability = rearrange_monotone(probability);
  double value;
  if (path.size() == 1) {
    value = probability(0);
  } else {
    value = interpolate_path<double>(path.grid, probability, x)(0);
  }
  return std::clamp(value, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

Grid default_first_stage_thresholds(const Eigen::VectorXd& x, int grid_size) {
  Grid grid = make_quantile_grid(x, grid_size);
  const double top = x.maxCoeff();
  if (grid.size() > 0 && grid.points(grid.size() - 1) >= top) {
    grid.points.conservativeResize(grid.size() - 1);
  }
  if (grid.size() < 1) throw Error(ErrorKind::InvalidInput, "treatment has a single support point");
  return grid;
}

ControlFunctionFit control_function(const ObservationTable& table, const Eigen::VectorXd& weights,
                                    const RegressorBasis& basis, const FirstStageConfig& config,
                                    const Grid* dr_thresholds) {
  config.trim.validate();
  if (weights.size() != table.rows()) throw Error(ErrorKind::InvalidInput, "weights have wrong length");
  const Eigen::MatrixXd design = basis.first_stage_design(table);

  ControlFunctionFit fit;
  fit.method = config.method;
  fit.link = config.link;
  fit.epsilon = config.epsilon;
  if (config.method == Method::qr) {
    fit.path = fit_first_stage_qr(design, table.x, weights, config.grid_size, config.epsilon);
  } else {
    if (dr_thresholds == nullptr) throw Error(ErrorKind::InvalidInput, "DR first stage needs a threshold grid");
    fit.path = fit_first_stage_dr(design, table.x, weights, *dr_thresholds, config.link, &fit.warnings);
  }

  const Eigen::Index n = table.rows();
  fit.v_hat = Eigen::VectorXd::Zero(n);
  fit.trim = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!config.trim.keeps(table.x(i))) continue;
    fit.trim(i) = 1.0;
    const Eigen::VectorXd r = design.row(i).transpose();
    fit.v_hat(i) = config.method == Method::qr ? qr_control_value(table.x(i), r, fit.path, config.epsilon)
                                               : dr_control_value(table.x(i), r, fit.path, config.link);
  }
  return fit;
}

}  // namespace cfsf
