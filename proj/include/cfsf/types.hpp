#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace cfsf {

/// n observations of (Y, X, Z2, Z1). Z2 holds the excluded instruments,
/// Z1 the included covariates; either block may have zero columns.
struct ObservationTable {
  Eigen::VectorXd y;
  Eigen::VectorXd x;
  Eigen::MatrixXd z2;
  Eigen::MatrixXd z1;
  std::vector<std::string> z2_names;
  std::vector<std::string> z1_names;

  Eigen::Index rows() const { return y.size(); }
  Eigen::Index instrument_count() const { return z2.cols(); }
  Eigen::Index covariate_count() const { return z1.cols(); }

  // Throws InvalidInput on ragged blocks or non-finite entries.
  void validate() const;
};

/// One coefficient vector per point of an increasing index grid (quantile
/// levels or thresholds). Row m of `coefficients` belongs to `grid(m)`.
struct CoefficientPath {
  Eigen::VectorXd grid;
  Eigen::MatrixXd coefficients;

  Eigen::Index size() const { return grid.size(); }
  Eigen::Index dimension() const { return coefficients.cols(); }
  bool empty() const { return grid.size() == 0; }
};

}  // namespace cfsf
