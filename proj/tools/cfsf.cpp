// Command line front end: estimate, check and simulate.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "cfsf/error.hpp"
#include "cfsf/pipeline.hpp"
#include "cfsf/simulate.hpp"

namespace {

struct RunOptions {
  std::string config_path;
  std::map<std::string, std::string> flags;
};

void add_run_options(CLI::App* verb, RunOptions& options) {
  verb->add_option("-c,--config", options.config_path, "key = value configuration file");
  for (const auto& key : cfsf::config_keys()) {
    verb->add_option_function<std::string>(
        "--" + key, [&options, key](const std::string& value) { options.flags[key] = value; },
        "overrides config key '" + key + "'");
  }
}

// Config file, then environment, then flags.
cfsf::RunConfig assemble(const RunOptions& options) {
  cfsf::RunConfig config = options.config_path.empty() ? cfsf::RunConfig{} : cfsf::load_config(options.config_path);
  if (const char* dir = std::getenv("CFSF_OUTPUT_DIR"); dir != nullptr && *dir != '\0') config.set("output_dir", dir);
  if (const char* workers = std::getenv("CFSF_WORKERS"); workers != nullptr && *workers != '\0') {
    config.set("workers", workers);
  }
  for (const auto& [key, value] : options.flags) config.set(key, value);
  return config;
}

int run_estimate(const RunOptions& options) {
  const cfsf::RunConfig config = assemble(options);
  const cfsf::RunReport report = cfsf::run_pipeline(config);
  cfsf::write_outputs(report, config.output_dir);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& [stage, seconds] : report.timings) std::fprintf(stderr, "time %s: %.3f s\n", stage.c_str(), seconds);
  for (const auto& f : report.files) std::cout << config.output_dir << '/' << f.name << '\n';
  return report.bootstrap_failed ? 2 : 0;
}

int run_check(const RunOptions& options) {
  const cfsf::RunConfig config = assemble(options);
  const cfsf::ObservationTable table = cfsf::read_table_file(config);
  const auto diagnostics = cfsf::check_configuration(config, table);
  std::printf("observations: %lld\n", static_cast<long long>(table.rows()));
  for (const auto& d : diagnostics) {
    std::printf("%s: min eigenvalue %.6g, %s\n", d.stage.c_str(), d.min_eigenvalue, d.pass ? "full rank" : "deficient");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control-function estimates of average, distribution and quantile structural functions"};
  app.require_subcommand(1);

  RunOptions estimate_options;
  CLI::App* estimate = app.add_subcommand("estimate", "run the three stages, bootstrap and bands");
  add_run_options(estimate, estimate_options);

  RunOptions check_options;
  CLI::App* check = app.add_subcommand("check", "validate the configuration and the rank conditions");
  add_run_options(check, check_options);

  CLI::App* simulate = app.add_subcommand("simulate", "write a sample from the triangular design as CSV");
  long long n = 1000;
  unsigned long long seed = 1;
  std::string output;
  std::map<std::string, std::string> design_flags;
  simulate->add_option("-n,--n", n, "number of rows")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", seed, "random seed");
  simulate->add_option("-o,--output", output, "output CSV path (stdout when omitted)");
  for (const auto& key : cfsf::design_keys()) {
    simulate->add_option_function<std::string>(
        "--" + key, [&design_flags, key](const std::string& value) { design_flags[key] = value; },
        "design parameter '" + key + "'");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*estimate) return run_estimate(estimate_options);
    if (*check) return run_check(check_options);
    if (*simulate) {
      cfsf::TriangularDesign design;
      for (const auto& [key, value] : design_flags) cfsf::set_design_parameter(design, key, value);
      const cfsf::ObservationTable table = cfsf::generate(design, n, seed);
      if (output.empty()) {
        cfsf::write_csv(std::cout, table);
      } else {
        std::ofstream out(output, std::ios::binary);
        if (!out) throw cfsf::Error(cfsf::ErrorKind::InvalidInput, "cannot open '" + output + "' for writing");
        cfsf::write_csv(out, table);
      }
      return 0;
    }
  } catch (const cfsf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cfsf::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
