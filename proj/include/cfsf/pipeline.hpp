#pragma once

// Batch driver behind the command line: a flat key=value run configuration,
// CSV ingest, estimation, bootstrap bands and the output files.

#include <cstdint>
#include <limits>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfsf/design.hpp"
#include "cfsf/error.hpp"
#include "cfsf/estimator.hpp"
#include "cfsf/simulate.hpp"
#include "cfsf/types.hpp"

namespace cfsf {

struct RunConfig {
  std::string input;
  std::string output_dir = "cfsf_out";
  std::string y_column = "y";
  std::string x_column = "x";
  std::vector<std::string> z2_columns;  // empty: every column named z2*
  std::vector<std::string> z1_columns;  // empty: every column named z1*

  Method first_stage_method = Method::qr;
  Method second_stage_method = Method::qr;
  Link link = Link::logit;
  int grid_size = 599;  // M
  int mesh_size = 599;  // S
  int bootstrap = 199;  // B
  double epsilon = 0.01;
  double alpha = 0.1;
  double trim_lower = -std::numeric_limits<double>::infinity();
  double trim_upper = std::numeric_limits<double>::infinity();

  TransformSpec instrument_transform;
  TransformSpec treatment_transform;
  TransformSpec covariate_transform;
  TransformSpec control_transform;

  RegionSettings regions;
  std::optional<bool> rearrange;
  std::optional<bool> discrete;
  std::vector<Eigen::VectorXd> conditional_z1;
  bool emit_asf_ls = false;

  std::uint64_t seed = 20180101;
  int workers = 0;  // 0: available parallelism

  /// Applies one key; throws InvalidInput naming the key on bad values.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  EstimatorConfig estimator_config() const;
  RegressorSpec regressor_spec() const;
  int resolved_workers() const;

  // Keys set explicitly, as given; echoed in the manifest. Worker count and
  // output directory are left out so they cannot change the output bytes.
  const std::map<std::string, std::string>& settings() const { return settings_; }

 private:
  std::map<std::string, std::string> settings_;
};

/// Every key accepted by RunConfig::set, in documentation order.
const std::vector<std::string>& config_keys();

/// Reads `key = value` lines; blank lines and lines starting with '#' are skipped.
std::map<std::string, std::string> parse_config_text(std::istream& in);
RunConfig load_config(const std::string& path);

/// CSV with a header row; missing or non-numeric cells are rejected.
ObservationTable read_table(std::istream& in, const RunConfig& config);
ObservationTable read_table_file(const RunConfig& config);

std::string fnv1a64_hex(const std::string& bytes);

struct RankDiagnostic {
  std::string stage;
  double min_eigenvalue = 0.0;
  bool pass = false;
};

struct OutputFile {
  std::string name;
  std::string contents;
};

struct RunReport {
  std::map<std::string, double> timings;  // seconds per stage
  std::vector<RankDiagnostic> rank;
  std::vector<std::string> warnings;
  std::vector<std::string> replicate_failures;
  std::vector<OutputFile> files;  // written by write_outputs, manifest last
  bool bands_emitted = false;
  bool bootstrap_failed = false;
};

/// Runs estimation and, for B > 0, the bootstrap and bands. Nothing is written.
RunReport run_pipeline(const RunConfig& config, const ObservationTable& table);
RunReport run_pipeline(const RunConfig& config);

/// Rank diagnostics of both stages at unit weights.
std::vector<RankDiagnostic> check_configuration(const RunConfig& config, const ObservationTable& table);

/// Writes every file of the report into the output directory.
void write_outputs(const RunReport& report, const std::string& directory);

/// Design parameters of the simulate verb, keyed like the TriangularDesign fields.
void set_design_parameter(TriangularDesign& design, const std::string& key, const std::string& value);
const std::vector<std::string>& design_keys();

/// 1 for validation errors, 2 for numerical failures.
int exit_code_for(const Error& e);

}  // namespace cfsf
