#include "cfsf/design.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cfsf/distributions.hpp"
#include "cfsf/error.hpp"
#include "cfsf/numerics.hpp"

namespace cfsf {

void ObservationTable::validate() const {
  const Eigen::Index n = y.size();
  if (x.size() != n) throw Error(ErrorKind::InvalidInput, "x and y lengths differ");
  if (z2.rows() != n && z2.cols() > 0) throw Error(ErrorKind::InvalidInput, "instrument block has wrong row count");
  if (z1.rows() != n && z1.cols() > 0) throw Error(ErrorKind::InvalidInput, "covariate block has wrong row count");
  if (!y.allFinite() || !x.allFinite() || !z2.allFinite() || !z1.allFinite()) {
    throw Error(ErrorKind::InvalidInput, "observation table has non-finite entries");
  }
}

void TransformSpec::validate() const {
  switch (kind) {
    case TransformKind::raw_plus_intercept:
      return;
    case TransformKind::polynomial:
      if (degree < 1) throw Error(ErrorKind::InvalidInput, "polynomial degree must be >= 1");
      return;
    case TransformKind::cubic_bspline:
      if (knots.empty() && knot_count < 1) throw Error(ErrorKind::InvalidInput, "spline needs >= 1 knot");
      for (std::size_t i = 1; i < knots.size(); ++i) {
        if (!(knots[i] > knots[i - 1])) throw Error(ErrorKind::InvalidInput, "spline knots must increase");
      }
      return;
  }
}

void cubic_bspline_basis(std::span<const double> knots, double value, Eigen::Ref<Eigen::VectorXd> out) {
  constexpr int order = 4;
  const int count = static_cast<int>(knots.size()) - order;
  out.setZero();
  const double lo = knots[order - 1];
  const double hi = knots[static_cast<std::size_t>(count)];
  const double t = std::clamp(value, lo, hi);

  // Knot span s with knots[s] <= t < knots[s+1]; the right end uses the last
  // non-empty span.
  int span = count - 1;
  if (t < hi) {
    span = static_cast<int>(std::upper_bound(knots.begin(), knots.end(), t) - knots.begin()) - 1;
    span = std::clamp(span, order - 1, count - 1);
  }

  double basis[order] = {1.0, 0.0, 0.0, 0.0};
  double left[order];
  double right[order];
  for (int j = 1; j < order; ++j) {
    left[j] = t - knots[static_cast<std::size_t>(span + 1 - j)];
    right[j] = knots[static_cast<std::size_t>(span + j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom > 0.0 ? basis[r] / denom : 0.0;
      basis[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    basis[j] = saved;
  }
  for (int r = 0; r < order; ++r) out(span - (order - 1) + r) = basis[r];
}

namespace {

std::vector<double> augment_knots(double lo, double hi, const std::vector<double>& interior) {
  if (!(hi > lo)) throw Error(ErrorKind::InvalidInput, "spline boundary knots are degenerate");
  std::vector<double> knots(4, lo);
  for (double k : interior) {
    if (!(k > lo && k < hi)) throw Error(ErrorKind::InvalidInput, "interior spline knot outside the data range");
    if (knots.size() > 4 && !(k > knots.back())) {
      throw Error(ErrorKind::InvalidInput, "spline knots collapse; variable has too few distinct values");
    }
    knots.push_back(k);
  }
  knots.insert(knots.end(), 4, hi);
  return knots;
}

double standard_normal_moment(int power) {
  if (power % 2 == 1) return 0.0;
  double value = 1.0;
  for (int j = power - 1; j > 0; j -= 2) value *= j;
  return value;
}

}  // namespace

Transform Transform::resolve(const TransformSpec& spec, const Eigen::VectorXd& sample) {
  spec.validate();
  Transform t;
  t.kind_ = spec.kind;
  t.degree_ = spec.kind == TransformKind::raw_plus_intercept ? 1 : spec.degree;
  if (spec.kind == TransformKind::cubic_bspline) {
    if (sample.size() < 2) throw Error(ErrorKind::InvalidInput, "spline needs data to place boundary knots");
    const double lo = sample.minCoeff();
    const double hi = sample.maxCoeff();
    std::vector<double> interior = spec.knots;
    if (interior.empty()) {
      for (int j = 1; j <= spec.knot_count; ++j) {
        interior.push_back(empirical_quantile(sample, static_cast<double>(j) / (spec.knot_count + 1)));
      }
    }
    t.knots_ = augment_knots(lo, hi, interior);
  }
  return t;
}

Transform Transform::resolve_standard_normal(const TransformSpec& spec) {
  spec.validate();
  Transform t;
  t.kind_ = spec.kind;
  t.degree_ = spec.kind == TransformKind::raw_plus_intercept ? 1 : spec.degree;
  if (spec.kind == TransformKind::cubic_bspline) {
    std::vector<double> interior = spec.knots;
    if (interior.empty()) {
      for (int j = 1; j <= spec.knot_count; ++j) {
        interior.push_back(normal_quantile(static_cast<double>(j) / (spec.knot_count + 1)));
      }
    }
    t.knots_ = augment_knots(normal_quantile(0.001), normal_quantile(0.999), interior);
  }
  return t;
}

Eigen::Index Transform::size() const {
  if (kind_ == TransformKind::cubic_bspline) return static_cast<Eigen::Index>(knots_.size()) - 4;
  return degree_ + 1;
}

void Transform::evaluate(double value, Eigen::Ref<Eigen::VectorXd> out) const {
  if (kind_ == TransformKind::cubic_bspline) {
    cubic_bspline_basis(knots_, value, out);
    return;
  }
  double power = 1.0;
  for (int j = 0; j <= degree_; ++j) {
    out(j) = power;
    power *= value;
  }
}

Eigen::VectorXd Transform::evaluate(double value) const {
  Eigen::VectorXd out(size());
  evaluate(value, out);
  return out;
}

Eigen::VectorXd Transform::standard_normal_mean() const {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(size());
  if (kind_ != TransformKind::cubic_bspline) {
    for (int j = 0; j <= degree_; ++j) mean(j) = standard_normal_moment(j);
    return mean;
  }
  // Midpoint rule in probability space.
  constexpr int nodes = 20000;
  Eigen::VectorXd row(size());
  for (int i = 0; i < nodes; ++i) {
    evaluate(normal_quantile((i + 0.5) / nodes), row);
    mean += row;
  }
  return mean / nodes;
}

std::vector<double> kronecker(std::span<const Eigen::VectorXd> factors) {
  std::vector<double> out{1.0};
  for (const auto& factor : factors) {
    std::vector<double> next;
    next.reserve(out.size() * static_cast<std::size_t>(factor.size()));
    for (double a : out) {
      for (Eigen::Index j = 0; j < factor.size(); ++j) next.push_back(a * factor(j));
    }
    out = std::move(next);
  }
  return out;
}

RegressorBasis RegressorBasis::resolve(const RegressorSpec& spec, const ObservationTable& table) {
  table.validate();
  RegressorBasis basis;
  for (Eigen::Index c = 0; c < table.z2.cols(); ++c) {
    basis.instruments_.push_back(Transform::resolve(spec.instrument, table.z2.col(c)));
  }
  for (Eigen::Index c = 0; c < table.z1.cols(); ++c) {
    basis.instruments_.push_back(Transform::resolve(spec.instrument, table.z1.col(c)));
  }
  basis.treatment_ = Transform::resolve(spec.treatment, table.x);
  for (Eigen::Index c = 0; c < table.z1.cols(); ++c) {
    const auto idx = static_cast<std::size_t>(c);
    const TransformSpec& cs = idx < spec.covariates.size() ? spec.covariates[idx] : TransformSpec{};
    basis.covariates_.push_back(Transform::resolve(cs, table.z1.col(c)));
  }
  basis.control_ = Transform::resolve_standard_normal(spec.control);
  return basis;
}

Eigen::Index RegressorBasis::first_stage_size() const {
  Eigen::Index size = 1;
  for (const auto& t : instruments_) size += t.size() - 1;
  return size;
}

Eigen::Index RegressorBasis::second_stage_size() const {
  Eigen::Index size = treatment_.size() * control_.size();
  for (const auto& t : covariates_) size *= t.size();
  return size;
}

Eigen::VectorXd RegressorBasis::first_stage_row(const Eigen::VectorXd& z) const {
  if (z.size() != static_cast<Eigen::Index>(instruments_.size())) {
    throw Error(ErrorKind::InvalidInput, "instrument vector has wrong length");
  }
  Eigen::VectorXd row(first_stage_size());
  row(0) = 1.0;
  Eigen::Index offset = 1;
  for (std::size_t c = 0; c < instruments_.size(); ++c) {
    const Eigen::VectorXd full = instruments_[c].evaluate(z(static_cast<Eigen::Index>(c)));
    row.segment(offset, full.size() - 1) = full.tail(full.size() - 1);
    offset += full.size() - 1;
  }
  return row;
}

Eigen::VectorXd RegressorBasis::control_factor(double v) const {
  if (!(v > 0.0 && v < 1.0)) throw Error(ErrorKind::InvalidInput, "control value must lie in (0,1)");
  return control_.evaluate(normal_quantile(v));
}

Eigen::VectorXd RegressorBasis::second_stage_row_with_control(double x, const Eigen::VectorXd& z1,
                                                              const Eigen::VectorXd& control_factor) const {
  if (z1.size() != covariate_count()) throw Error(ErrorKind::InvalidInput, "covariate vector has wrong length");
  std::vector<Eigen::VectorXd> factors;
  factors.reserve(covariates_.size() + 2);
  factors.push_back(treatment_.evaluate(x));
  for (std::size_t c = 0; c < covariates_.size(); ++c) {
    factors.push_back(covariates_[c].evaluate(z1(static_cast<Eigen::Index>(c))));
  }
  factors.push_back(control_factor);
  const auto w = kronecker(factors);
  return Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
}

Eigen::VectorXd RegressorBasis::second_stage_row(double x, const Eigen::VectorXd& z1, double v) const {
  return second_stage_row_with_control(x, z1, control_factor(v));
}

Eigen::MatrixXd RegressorBasis::first_stage_design(const ObservationTable& table) const {
  const Eigen::Index n = table.rows();
  Eigen::MatrixXd design(n, first_stage_size());
  Eigen::VectorXd z(table.z2.cols() + table.z1.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < table.z2.cols(); ++c) z(c) = table.z2(i, c);
    for (Eigen::Index c = 0; c < table.z1.cols(); ++c) z(table.z2.cols() + c) = table.z1(i, c);
    design.row(i) = first_stage_row(z).transpose();
  }
  return design;
}

Eigen::MatrixXd RegressorBasis::second_stage_design(const ObservationTable& table, const Eigen::VectorXd& v,
                                                    const Eigen::VectorXd& keep) const {
  const Eigen::Index n = table.rows();
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, second_stage_size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (keep(i) == 0.0) continue;
    const Eigen::VectorXd z1 = table.z1.cols() > 0 ? Eigen::VectorXd(table.z1.row(i).transpose()) : Eigen::VectorXd();
    design.row(i) = second_stage_row(table.x(i), z1, v(i)).transpose();
  }
  return design;
}

Eigen::MatrixXd RegressorBasis::second_stage_design_at(double x, const ObservationTable& table,
                                                       const Eigen::VectorXd& v, const Eigen::VectorXd& keep,
                                                       const Eigen::VectorXd* fixed_z1) const {
  const Eigen::Index n = table.rows();
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, second_stage_size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (keep(i) == 0.0) continue;
    const Eigen::VectorXd z1 = fixed_z1 != nullptr        ? *fixed_z1
                               : table.z1.cols() > 0 ? Eigen::VectorXd(table.z1.row(i).transpose())
                                                     : Eigen::VectorXd();
    design.row(i) = second_stage_row(x, z1, v(i)).transpose();
  }
  return design;
}

Grid make_quantile_grid(const Eigen::VectorXd& data, int size, double p_lo, double p_hi) {
  if (size < 2) throw Error(ErrorKind::InvalidInput, "grid size must be >= 2");
  if (!(p_lo >= 0.0 && p_hi <= 1.0 && p_lo < p_hi)) {
    throw Error(ErrorKind::InvalidInput, "grid probability range must satisfy 0 <= lo < hi <= 1");
  }
  if (data.size() < 1) throw Error(ErrorKind::InvalidInput, "grid needs data");
  Eigen::VectorXd sorted = rearrange_monotone(data);
  std::vector<double> points;
  points.reserve(static_cast<std::size_t>(size));
  const auto m = static_cast<double>(sorted.size());
  for (int j = 0; j < size; ++j) {
    const double p = p_lo + (p_hi - p_lo) * j / (size - 1);
    auto rank = static_cast<Eigen::Index>(std::ceil(p * m));
    rank = std::clamp<Eigen::Index>(rank, 1, sorted.size());
    const double value = sorted(rank - 1);
    if (points.empty() || value > points.back()) points.push_back(value);
  }
  Grid grid;
  grid.placement = GridPlacement::sample_quantile;
  grid.points = Eigen::Map<const Eigen::VectorXd>(points.data(), static_cast<Eigen::Index>(points.size()));
  return grid;
}

Grid make_equidistant_grid(double lo, double hi, int size) {
  if (size < 2) throw Error(ErrorKind::InvalidInput, "grid size must be >= 2");
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo)) {
    throw Error(ErrorKind::InvalidInput, "grid bounds are degenerate");
  }
  Grid grid;
  grid.placement = GridPlacement::equidistant;
  grid.points.resize(size);
  const double delta = (hi - lo) / (size - 1);
  for (int j = 0; j < size; ++j) grid.points(j) = lo + j * delta;
  grid.points(size - 1) = hi;
  return grid;
}

RankCheck check_full_rank(const Eigen::MatrixXd& design, double threshold) {
  if (design.rows() < design.cols() || design.cols() == 0) return {0.0, false};
  const Eigen::MatrixXd moment = design.transpose() * design / static_cast<double>(design.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(moment, Eigen::EigenvaluesOnly);
  const double smallest = std::max(0.0, solver.eigenvalues()(0));
  return {smallest, smallest > threshold};
}

}  // namespace cfsf
