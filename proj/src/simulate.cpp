#include "cfsf/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "cfsf/distributions.hpp"
#include "cfsf/error.hpp"

namespace cfsf {

namespace {

// Uniform on the open interval (0,1).
double open_uniform(std::mt19937_64& engine) {
  return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53;
}

double scale_at(const TriangularDesign& d, double x) { return d.s1 + d.s2 * x; }

// Location and spread of Y(x) given the covariate, or with Z1 integrated out.
std::pair<double, double> outcome_law(const TriangularDesign& d, double x, std::optional<double> z1) {
  const double s = scale_at(d, x);
  if (!(s > 0.0)) throw Error(ErrorKind::DesignInvalid, "s1 + s2*x must be positive at the oracle point");
  double location = d.b1 + d.b2 * x;
  double spread = s;
  if (d.with_covariate) {
    if (z1) {
      location += d.gamma * *z1;
    } else {
      spread = std::hypot(s, d.gamma);
    }
  }
  return {location, spread};
}

void put(std::ostream& out, double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  out << buffer;
}

}  // namespace

void TriangularDesign::validate() const {
  const bool finite = std::isfinite(pi1) && std::isfinite(pi2) && std::isfinite(pi3) && std::isfinite(sigma_x) &&
                      std::isfinite(b1) && std::isfinite(b2) && std::isfinite(s1) && std::isfinite(s2) &&
                      std::isfinite(gamma) && std::isfinite(theta);
  if (!finite) throw Error(ErrorKind::DesignInvalid, "design parameters must be finite");
  if (!(sigma_x > 0.0)) throw Error(ErrorKind::DesignInvalid, "sigma_x must be positive");
  if (!(std::abs(theta) < 1.0)) throw Error(ErrorKind::DesignInvalid, "|theta| must be below 1");
  if (z_law == InstrumentLaw::bernoulli && !(z_probability > 0.0 && z_probability < 1.0)) {
    throw Error(ErrorKind::DesignInvalid, "Bernoulli instrument probability must lie in (0,1)");
  }
}

ObservationTable generate(const TriangularDesign& design, Eigen::Index n, std::uint64_t seed) {
  design.validate();
  if (n < 1) throw Error(ErrorKind::InvalidInput, "sample size must be positive");
  std::mt19937_64 engine(seed);
  ObservationTable table;
  table.y.resize(n);
  table.x.resize(n);
  table.z2.resize(n, 1);
  table.z2_names = {"z2"};
  table.z1.resize(n, design.with_covariate ? 1 : 0);
  if (design.with_covariate) table.z1_names = {"z1"};

  const double mix = std::sqrt(1.0 - design.theta * design.theta);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double nv = normal_quantile(open_uniform(engine));
    const double nu = normal_quantile(open_uniform(engine));
    const double uz = open_uniform(engine);
    const double z = design.z_law == InstrumentLaw::standard_normal ? normal_quantile(uz)
                                                                    : (uz < design.z_probability ? 1.0 : 0.0);
    double z1 = 0.0;
    if (design.with_covariate) z1 = normal_quantile(open_uniform(engine));

    const double x = design.pi1 + design.pi2 * z + design.pi3 * z1 + design.sigma_x * nv;
    const double s = scale_at(design, x);
    if (!(s > 0.0)) {
      char buffer[128];
      std::snprintf(buffer, sizeof buffer, "s1 + s2*x = %.6g <= 0 at generated x = %.6g (row %lld)", s, x,
                    static_cast<long long>(i));
      throw Error(ErrorKind::DesignInvalid, buffer);
    }
    table.x(i) = x;
    table.z2(i, 0) = z;
    if (design.with_covariate) table.z1(i, 0) = z1;
    table.y(i) = design.b1 + design.b2 * x + design.gamma * z1 + s * (design.theta * nv + mix * nu);
  }
  return table;
}

double oracle_asf(const TriangularDesign& design, double x, std::optional<double> z1) {
  double value = design.b1 + design.b2 * x;
  if (design.with_covariate && z1) value += design.gamma * *z1;
  return value;
}

double oracle_qsf(const TriangularDesign& design, double tau, double x, std::optional<double> z1) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidInput, "tau must lie in (0,1)");
  const auto [location, spread] = outcome_law(design, x, z1);
  return location + spread * normal_quantile(tau);
}

double oracle_dsf(const TriangularDesign& design, double y, double x, std::optional<double> z1) {
  const auto [location, spread] = outcome_law(design, x, z1);
  return normal_cdf((y - location) / spread);
}

double oracle(const TriangularDesign& design, const OraclePoint& point) {
  switch (point.kind) {
    case OracleKind::asf: return oracle_asf(design, point.x, point.z1);
    case OracleKind::qsf: return oracle_qsf(design, point.level, point.x, point.z1);
    case OracleKind::dsf: return oracle_dsf(design, point.level, point.x, point.z1);
  }
  return 0.0;
}

void write_csv(std::ostream& out, const ObservationTable& table) {
  table.validate();
  auto name = [](const std::vector<std::string>& names, Eigen::Index j, const char* stem) {
    if (static_cast<std::size_t>(j) < names.size()) return names[static_cast<std::size_t>(j)];
    return std::string(stem) + "_" + std::to_string(j + 1);
  };
  out << "y,x";
  for (Eigen::Index j = 0; j < table.z1.cols(); ++j) out << ',' << name(table.z1_names, j, "z1");
  for (Eigen::Index j = 0; j < table.z2.cols(); ++j) out << ',' << name(table.z2_names, j, "z2");
  out << '\n';
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    put(out, table.y(i));
    out << ',';
    put(out, table.x(i));
    for (Eigen::Index j = 0; j < table.z1.cols(); ++j) {
      out << ',';
      put(out, table.z1(i, j));
    }
    for (Eigen::Index j = 0; j < table.z2.cols(); ++j) {
      out << ',';
      put(out, table.z2(i, j));
    }
    out << '\n';
  }
}

}  // namespace cfsf
