#include "cfsf/structural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfsf/error.hpp"
#include "cfsf/numerics.hpp"

namespace cfsf {

const char* to_string(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::dsf: return "dsf";
    case SurfaceKind::qsf: return "qsf";
    case SurfaceKind::asf: return "asf";
    case SurfaceKind::asf_ls: return "asf_ls";
  }
  return "unknown";
}

Grid default_outcome_mesh(const Eigen::VectorXd& kept_y, int size) {
  if (kept_y.size() < 1) throw Error(ErrorKind::EmptyAfterTrim, "no outcomes to build a mesh");
  const double lo = std::min(0.0, kept_y.minCoeff());
  const double hi = std::max(0.0, kept_y.maxCoeff());
  return make_equidistant_grid(lo, hi, size);
}

double mesh_width(const Grid& mesh) {
  if (mesh.size() < 2) throw Error(ErrorKind::InvalidInput, "mesh needs at least two points");
  return (mesh.points(mesh.size() - 1) - mesh.points(0)) / static_cast<double>(mesh.size() - 1);
}

DsfEvaluator::DsfEvaluator(double x, const SecondStageFit& fit, const ControlFunctionFit& cf,
                           const ObservationTable& table, const Eigen::VectorXd& weights,
                           const RegressorBasis& basis, const Eigen::VectorXd* fixed_z1)
    : fit_(&fit) {
  const Eigen::Index n = table.rows();
  if (weights.size() != n || cf.trim.size() != n) throw Error(ErrorKind::InvalidInput, "weights have wrong length");
  const Eigen::MatrixXd full = basis.second_stage_design_at(x, table, cf.v_hat, cf.trim, fixed_z1);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights(i) * cf.trim(i);
    if (w > 0.0) {
      rows.push_back(i);
      weights_.push_back(w);
      total_ += w;
    }
  }
  if (!(total_ > 0.0)) throw Error(ErrorKind::EmptyAfterTrim, "no kept rows carry positive weight");
  design_.resize(static_cast<Eigen::Index>(rows.size()), full.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) design_.row(static_cast<Eigen::Index>(r)) = full.row(rows[r]);
  if (fit.method == Method::qr) {
    quantiles_.noalias() = design_ * fit.path.coefficients.transpose();
    design_.resize(0, 0);
  }
}

Eigen::VectorXd DsfEvaluator::operator()(const Eigen::VectorXd& ys, bool rearrange) const {
  const SecondStageFit& fit = *fit_;
  const auto count = static_cast<std::size_t>(ys.size());
  std::vector<Eigen::Index> order(count);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return ys(a) < ys(b); });
  std::vector<double> sorted(count);
  for (std::size_t s = 0; s < count; ++s) sorted[s] = ys(order[s]);
  std::vector<double> values(count, 0.0);

  if (count > 0 && fit.method == Method::qr) {
    // Every fitted quantile w_i'beta(u_m) adds w_i to the first y at or
    // above it; the running sum then counts #{m : quantile <= y}.
    std::vector<double> mass(count + 1, 0.0);
    const double lo = sorted.front();
    const double span = sorted.back() - lo;
    const double slope = span > 0.0 ? static_cast<double>(count - 1) / span : 0.0;
    const auto last = static_cast<std::ptrdiff_t>(count);
    for (Eigen::Index m = 0; m < quantiles_.cols(); ++m) {
      for (Eigen::Index i = 0; i < quantiles_.rows(); ++i) {
        const double q = quantiles_(i, m);
        // Linear guess, then walk to the exact lower bound.
        std::ptrdiff_t pos = 0;
        if (q > lo) {
          const double guess = std::ceil((q - lo) * slope);
          pos = guess >= static_cast<double>(last) ? last : static_cast<std::ptrdiff_t>(guess);
        }
        while (pos > 0 && sorted[static_cast<std::size_t>(pos - 1)] >= q) --pos;
        while (pos < last && sorted[static_cast<std::size_t>(pos)] < q) ++pos;
        mass[static_cast<std::size_t>(pos)] += weights_[static_cast<std::size_t>(i)];
      }
    }
    const double scale = (1.0 - 2.0 * fit.epsilon) / (static_cast<double>(fit.path.size()) * total_);
    double running = 0.0;
    for (std::size_t s = 0; s < count; ++s) {
      running += mass[s];
      values[s] = fit.epsilon + scale * running;
    }
  } else if (count > 0) {
    const auto& grid = fit.path.grid;
    Eigen::Index cached = -1;
    double cached_value = 0.0;
    for (std::size_t s = 0; s < count; ++s) {
      const double y = sorted[s];
      if (y >= fit.support_max) {
        values[s] = 1.0;
        continue;
      }
      const Eigen::Index t = std::upper_bound(grid.data(), grid.data() + grid.size(), y) - grid.data() - 1;
      if (t < 0) {
        values[s] = 0.0;
        continue;
      }
      if (t != cached) {
        const Eigen::VectorXd index = design_ * fit.path.coefficients.row(t).transpose();
        double acc = 0.0;
        for (Eigen::Index i = 0; i < index.size(); ++i) {
          acc += weights_[static_cast<std::size_t>(i)] * link_cdf(fit.link, index(i));
        }
        cached = t;
        cached_value = acc / total_;
      }
      values[s] = cached_value;
    }
  }

  if (rearrange) std::sort(values.begin(), values.end());
  Eigen::VectorXd out(ys.size());
  for (std::size_t s = 0; s < count; ++s) out(order[s]) = values[s];
  return out;
}

Eigen::VectorXd dsf_profile(const Eigen::VectorXd& ys, double x, const SecondStageFit& fit,
                            const ControlFunctionFit& cf, const ObservationTable& table,
                            const Eigen::VectorXd& weights, const RegressorBasis& basis,
                            const Eigen::VectorXd* fixed_z1, bool rearrange) {
  return DsfEvaluator(x, fit, cf, table, weights, basis, fixed_z1)(ys, rearrange);
}

double dsf(double y, double x, const SecondStageFit& fit, const ControlFunctionFit& cf, const ObservationTable& table,
           const Eigen::VectorXd& weights, const RegressorBasis& basis, const Eigen::VectorXd* fixed_z1) {
  Eigen::VectorXd ys(1);
  ys(0) = y;
  return dsf_profile(ys, x, fit, cf, table, weights, basis, fixed_z1, false)(0);
}

double qsf(double tau, const Grid& mesh, const Eigen::VectorXd& profile) {
  if (profile.size() != mesh.size()) throw Error(ErrorKind::InvalidInput, "profile does not match mesh");
  const double delta = mesh_width(mesh);
  Eigen::Index sum = 0;
  for (Eigen::Index s = 0; s < mesh.size(); ++s) {
    sum += (mesh.points(s) >= 0.0 ? 1 : 0) - (profile(s) >= tau ? 1 : 0);
  }
  return delta * static_cast<double>(sum);
}

double asf(const Grid& mesh, const Eigen::VectorXd& profile) {
  if (profile.size() != mesh.size()) throw Error(ErrorKind::InvalidInput, "profile does not match mesh");
  const double delta = mesh_width(mesh);
  double sum = 0.0;
  for (Eigen::Index s = 0; s < mesh.size(); ++s) sum += (mesh.points(s) >= 0.0 ? 1.0 : 0.0) - profile(s);
  return delta * sum;
}

double asf_least_squares(double x, const ObservationTable& table, const Eigen::VectorXd& weights,
                         const ControlFunctionFit& cf, const RegressorBasis& basis) {
  const Eigen::Index n = table.rows();
  const Eigen::VectorXd w = weights.cwiseProduct(cf.trim);
  const double total = w.sum();
  if (!(total > 0.0)) throw Error(ErrorKind::EmptyAfterTrim, "no kept rows carry positive weight");
  const Eigen::MatrixXd design = basis.second_stage_design(table, cf.v_hat, cf.trim);

  const Eigen::VectorXd root = w.cwiseSqrt();
  const Eigen::MatrixXd scaled = root.asDiagonal() * design;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) {
    throw Error(ErrorKind::RankDeficient, "least-squares ASF: regressors are collinear on kept rows");
  }
  const Eigen::VectorXd beta = qr.solve(root.cwiseProduct(table.y));

  Eigen::VectorXd z1_mean = Eigen::VectorXd::Zero(table.z1.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w(i) > 0.0) z1_mean += w(i) * table.z1.row(i).transpose();
  }
  z1_mean /= total;
  const Eigen::VectorXd row = basis.second_stage_row_with_control(x, z1_mean, basis.control_factor_mean());
  return row.dot(beta);
}

}  // namespace cfsf
