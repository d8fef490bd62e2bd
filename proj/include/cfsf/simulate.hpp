#pragma once

// Heteroskedastic normal triangular design with closed-form structural
// functions, used as ground truth in tests.
//
//   X = pi1 + pi2*Z + pi3*Z1 + sigma_x * N(V)
//   Y = b1 + b2*X + gamma*Z1 + (s1 + s2*X) * (theta*N(V) + sqrt(1-theta^2)*N(U))
//
// with N the standard normal quantile and V, U, Z, Z1 independent.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "cfsf/types.hpp"

namespace cfsf {

enum class InstrumentLaw { standard_normal, bernoulli };

struct TriangularDesign {
  double pi1 = 1.0;
  double pi2 = 1.0;
  double sigma_x = 1.0;
  double b1 = 1.0;
  double b2 = 1.0;
  double s1 = 1.0;
  double s2 = 0.1;
  double theta = 0.5;
  InstrumentLaw z_law = InstrumentLaw::standard_normal;
  double z_probability = 0.5;  // for the Bernoulli law
  // Optional standard normal covariate Z1 shifting both equations.
  bool with_covariate = false;
  double pi3 = 0.0;
  double gamma = 0.0;

  void validate() const;
};

/// n draws; deterministic in (design, n, seed). Throws DesignInvalid when
/// s1 + s2*x <= 0 for some generated x.
ObservationTable generate(const TriangularDesign& design, Eigen::Index n, std::uint64_t seed);

enum class OracleKind { asf, qsf, dsf };

struct OraclePoint {
  OracleKind kind = OracleKind::asf;
  double x = 0.0;
  double level = 0.0;  // tau for QSF, y for DSF
  std::optional<double> z1;  // fixed covariate; unset integrates Z1 out
};

/// True structural function at the point.
double oracle(const TriangularDesign& design, const OraclePoint& point);
double oracle_asf(const TriangularDesign& design, double x, std::optional<double> z1 = {});
double oracle_qsf(const TriangularDesign& design, double tau, double x, std::optional<double> z1 = {});
double oracle_dsf(const TriangularDesign& design, double y, double x, std::optional<double> z1 = {});

/// Header y,x,z1...,z2... and one line per row, values printed round-trip exact.
void write_csv(std::ostream& out, const ObservationTable& table);

}  // namespace cfsf
