#include "cfsf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cfsf/error.hpp"
#include "cfsf/inference.hpp"

namespace cfsf {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) parts.push_back(trim(item));
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  for (auto& p : split(s, ',')) {
    if (!p.empty()) parts.push_back(p);
  }
  return parts;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw Error(ErrorKind::InvalidInput, "config key '" + key + "': cannot use '" + value + "', expected " + expected);
}

double parse_real(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || std::isnan(out)) bad_value(key, value, "a number");
  return out;
}

long long parse_integer(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  char* end = nullptr;
  const long long out = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, value, "an integer");
  return out;
}

int parse_count(const std::string& key, const std::string& value) {
  const long long v = parse_integer(key, value);
  if (v < 0 || v > 100000000) bad_value(key, value, "a non-negative count");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, value, "true or false");
}

std::optional<bool> parse_tristate(const std::string& key, const std::string& value) {
  if (trim(value) == "auto") return std::nullopt;
  return parse_bool(key, value);
}

Method parse_method(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "qr") return Method::qr;
  if (v == "dr") return Method::dr;
  bad_value(key, value, "qr or dr");
}

// raw | poly:D | bspline:K | knots:a|b|c
TransformSpec parse_transform(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  const auto colon = v.find(':');
  const std::string head = v.substr(0, colon);
  const std::string tail = colon == std::string::npos ? std::string() : v.substr(colon + 1);
  TransformSpec spec;
  if (head == "raw" && tail.empty()) {
    spec = TransformSpec::raw();
  } else if (head == "poly" && !tail.empty()) {
    spec = TransformSpec::polynomial(static_cast<int>(parse_integer(key, tail)));
  } else if (head == "bspline" && !tail.empty()) {
    spec = TransformSpec::cubic_bspline(static_cast<int>(parse_integer(key, tail)));
  } else if (head == "knots" && !tail.empty()) {
    std::vector<double> knots;
    for (const auto& k : split(tail, '|')) knots.push_back(parse_real(key, k));
    const auto count = static_cast<int>(knots.size());
    spec = TransformSpec::cubic_bspline(count, std::move(knots));
  } else {
    bad_value(key, value, "raw, poly:D, bspline:K or knots:a|b|...");
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidInput, "config key '" + key + "': " + e.what());
  }
  return spec;
}

std::string format_real(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::RankDeficient || kind == ErrorKind::Separation || kind == ErrorKind::NoConvergence;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "input",          "output_dir",          "y",
      "x",              "z2",                  "z1",
      "first_stage",    "second_stage",        "link",
      "M",              "S",                   "B",
      "epsilon",        "alpha",               "trim_lower",
      "trim_upper",     "instrument_transform", "treatment_transform",
      "covariate_transform", "control_transform", "x_points",
      "dsf_x_points",   "y_points",            "region_p_lo",
      "region_p_hi",    "taus",                "rearrange",
      "discrete",       "conditional_z1",      "emit_asf_ls",
      "seed",           "workers"};
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "input") {
    input = trim(value);
  } else if (key == "output_dir") {
    output_dir = trim(value);
  } else if (key == "y") {
    y_column = trim(value);
  } else if (key == "x") {
    x_column = trim(value);
  } else if (key == "z2") {
    z2_columns = split_list(value);
  } else if (key == "z1") {
    z1_columns = split_list(value);
  } else if (key == "first_stage") {
    first_stage_method = parse_method(key, value);
  } else if (key == "second_stage") {
    second_stage_method = parse_method(key, value);
  } else if (key == "link") {
    const std::string v = trim(value);
    if (v == "logit") {
      link = Link::logit;
    } else if (v == "probit") {
      link = Link::probit;
    } else {
      bad_value(key, value, "logit or probit");
    }
  } else if (key == "M") {
    grid_size = parse_count(key, value);
  } else if (key == "S") {
    mesh_size = parse_count(key, value);
  } else if (key == "B") {
    bootstrap = parse_count(key, value);
  } else if (key == "epsilon") {
    epsilon = parse_real(key, value);
  } else if (key == "alpha") {
    alpha = parse_real(key, value);
  } else if (key == "trim_lower") {
    trim_lower = parse_real(key, value);
  } else if (key == "trim_upper") {
    trim_upper = parse_real(key, value);
  } else if (key == "instrument_transform") {
    instrument_transform = parse_transform(key, value);
  } else if (key == "treatment_transform") {
    treatment_transform = parse_transform(key, value);
  } else if (key == "covariate_transform") {
    covariate_transform = parse_transform(key, value);
  } else if (key == "control_transform") {
    control_transform = parse_transform(key, value);
  } else if (key == "x_points") {
    regions.x_points = parse_count(key, value);
  } else if (key == "dsf_x_points") {
    regions.dsf_x_points = parse_count(key, value);
  } else if (key == "y_points") {
    regions.y_points = parse_count(key, value);
  } else if (key == "region_p_lo") {
    regions.p_lo = parse_real(key, value);
  } else if (key == "region_p_hi") {
    regions.p_hi = parse_real(key, value);
  } else if (key == "taus") {
    regions.taus.clear();
    for (const auto& t : split_list(value)) regions.taus.push_back(parse_real(key, t));
  } else if (key == "rearrange") {
    rearrange = parse_tristate(key, value);
  } else if (key == "discrete") {
    discrete = parse_tristate(key, value);
  } else if (key == "conditional_z1") {
    conditional_z1.clear();
    for (const auto& point : split(value, ';')) {
      if (point.empty()) continue;
      const auto parts = split_list(point);
      Eigen::VectorXd z(static_cast<Eigen::Index>(parts.size()));
      for (std::size_t j = 0; j < parts.size(); ++j) z(static_cast<Eigen::Index>(j)) = parse_real(key, parts[j]);
      conditional_z1.push_back(std::move(z));
    }
  } else if (key == "emit_asf_ls") {
    emit_asf_ls = parse_bool(key, value);
  } else if (key == "seed") {
    const long long v = parse_integer(key, value);
    if (v < 0) bad_value(key, value, "a non-negative integer");
    seed = static_cast<std::uint64_t>(v);
  } else if (key == "workers") {
    workers = parse_count(key, value);
  } else {
    throw Error(ErrorKind::InvalidInput, "unknown config key '" + key + "'");
  }
  if (key != "workers" && key != "output_dir") settings_[key] = trim(value);
}

void RunConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw Error(ErrorKind::InvalidInput, "epsilon must lie in (0, 0.5)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidInput, "alpha must lie in (0, 1)");
  if (grid_size < 2) throw Error(ErrorKind::InvalidInput, "M must be at least 2");
  if (mesh_size < 2) throw Error(ErrorKind::InvalidInput, "S must be at least 2");
  if (bootstrap == 1) throw Error(ErrorKind::InvalidInput, "B must be 0 (no inference) or at least 2");
  if (!(trim_lower < trim_upper)) throw Error(ErrorKind::InvalidInput, "trim_lower must be below trim_upper");
  if (!(regions.p_lo >= 0.0 && regions.p_lo < regions.p_hi && regions.p_hi <= 1.0)) {
    throw Error(ErrorKind::InvalidInput, "region quantile range must satisfy 0 <= region_p_lo < region_p_hi <= 1");
  }
  for (double tau : regions.taus) {
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidInput, "taus must lie in (0, 1)");
  }
  if (y_column.empty() || x_column.empty()) throw Error(ErrorKind::InvalidInput, "y and x column names are required");
  instrument_transform.validate();
  treatment_transform.validate();
  covariate_transform.validate();
  control_transform.validate();
}

EstimatorConfig RunConfig::estimator_config() const {
  EstimatorConfig c;
  c.first_stage.method = first_stage_method;
  c.first_stage.link = link;
  c.first_stage.grid_size = grid_size;
  c.first_stage.epsilon = epsilon;
  c.first_stage.trim = TrimRule{trim_lower, trim_upper};
  c.second_stage_method = second_stage_method;
  c.second_stage_link = link;
  c.second_stage_grid_size = grid_size;
  c.second_stage_epsilon = epsilon;
  c.mesh_size = mesh_size;
  c.rearrange = rearrange;
  c.discrete_outcome = discrete;
  c.least_squares_asf = emit_asf_ls;
  return c;
}

RegressorSpec RunConfig::regressor_spec() const {
  RegressorSpec spec;
  spec.instrument = instrument_transform;
  spec.treatment = treatment_transform;
  spec.control = control_transform;
  spec.covariates.assign(std::max<std::size_t>(z1_columns.size(), 1), covariate_transform);
  return spec;
}

int RunConfig::resolved_workers() const {
  if (workers > 0) return workers;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::map<std::string, std::string> parse_config_text(std::istream& in) {
  std::map<std::string, std::string> entries;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidInput, "config line " + std::to_string(number) + ": expected key = value");
    }
    entries[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return entries;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidInput, "cannot open config file '" + path + "'");
  RunConfig config;
  for (const auto& [key, value] : parse_config_text(in)) config.set(key, value);
  return config;
}

ObservationTable read_table(std::istream& in, const RunConfig& config) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::InvalidInput, "input is empty");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const std::vector<std::string> header = split(trim(line), ',');

  auto find = [&](const std::string& name, const char* role) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(ErrorKind::InvalidInput,
                  std::string("missing column '") + name + "' (role " + role + ") in the input header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  auto by_prefix = [&](const char* prefix) {
    std::vector<std::string> names;
    for (const auto& h : header) {
      if (h.rfind(prefix, 0) == 0) names.push_back(h);
    }
    return names;
  };

  const std::size_t y_col = find(config.y_column, "y");
  const std::size_t x_col = find(config.x_column, "x");
  const std::vector<std::string> z2_names = config.z2_columns.empty() ? by_prefix("z2") : config.z2_columns;
  const std::vector<std::string> z1_names = config.z1_columns.empty() ? by_prefix("z1") : config.z1_columns;
  if (z2_names.empty()) {
    throw Error(ErrorKind::InvalidInput, "missing column role z2: no instrument column named z2* and none configured");
  }
  std::vector<std::size_t> z2_cols;
  std::vector<std::size_t> z1_cols;
  for (const auto& name : z2_names) z2_cols.push_back(find(name, "z2"));
  for (const auto& name : z1_names) z1_cols.push_back(find(name, "z1"));

  std::vector<std::vector<double>> columns(header.size());
  std::vector<char> needed(header.size(), 0);
  needed[y_col] = needed[x_col] = 1;
  for (auto c : z2_cols) needed[c] = 1;
  for (auto c : z1_cols) needed[c] = 1;

  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(trim(line), ',');
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::InvalidInput, "line " + std::to_string(number) + ": expected " +
                                               std::to_string(header.size()) + " fields, found " +
                                               std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!needed[c]) continue;
      const std::string& cell = cells[c];
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw Error(ErrorKind::InvalidInput, "line " + std::to_string(number) + ", column '" + header[c] +
                                                 "': missing or non-numeric value '" + cell + "'");
      }
      columns[c].push_back(v);
    }
  }
  const auto n = static_cast<Eigen::Index>(columns[y_col].size());
  if (n == 0) throw Error(ErrorKind::InvalidInput, "input has no data rows");

  ObservationTable table;
  table.y = Eigen::Map<const Eigen::VectorXd>(columns[y_col].data(), n);
  table.x = Eigen::Map<const Eigen::VectorXd>(columns[x_col].data(), n);
  table.z2.resize(n, static_cast<Eigen::Index>(z2_cols.size()));
  for (std::size_t j = 0; j < z2_cols.size(); ++j) {
    table.z2.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(columns[z2_cols[j]].data(), n);
  }
  table.z1.resize(n, static_cast<Eigen::Index>(z1_cols.size()));
  for (std::size_t j = 0; j < z1_cols.size(); ++j) {
    table.z1.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(columns[z1_cols[j]].data(), n);
  }
  table.z2_names = z2_names;
  table.z1_names = z1_names;
  table.validate();
  return table;
}

ObservationTable read_table_file(const RunConfig& config) {
  if (config.input.empty()) throw Error(ErrorKind::InvalidInput, "config key 'input' is required");
  std::ifstream in(config.input);
  if (!in) throw Error(ErrorKind::InvalidInput, "cannot open input file '" + config.input + "'");
  return read_table(in, config);
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(h));
  return buffer;
}

namespace {

struct Prepared {
  RegressorSpec spec;
  EstimatorConfig estimator_config;
  Regions regions;
};

Prepared prepare(const RunConfig& config, const ObservationTable& table) {
  config.validate();
  for (const auto& z : config.conditional_z1) {
    if (z.size() != table.z1.cols()) {
      throw Error(ErrorKind::InvalidInput, "conditional_z1 values need " + std::to_string(table.z1.cols()) +
                                               " components, one per z1 column");
    }
  }
  Prepared p;
  p.spec = config.regressor_spec();
  p.spec.covariates.assign(static_cast<std::size_t>(table.z1.cols()), config.covariate_transform);
  p.estimator_config = config.estimator_config();
  p.regions = default_regions(table, p.estimator_config.first_stage.trim, config.regions);
  p.regions.conditioning = config.conditional_z1;
  return p;
}

ThreeStageEstimator build_estimator(const RunConfig& config, const ObservationTable& table) {
  Prepared p = prepare(config, table);
  ThreeStageEstimator probe(table, p.spec, p.estimator_config, p.regions);
  if (!probe.discrete_outcome() || p.regions.taus.empty()) return probe;
  std::set<double> support;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    if (p.estimator_config.first_stage.trim.keeps(table.x(i))) support.insert(table.y(i));
  }
  p.regions.inversion_y.assign(support.begin(), support.end());
  return ThreeStageEstimator(table, p.spec, p.estimator_config, p.regions);
}

RankDiagnostic rank_of(const char* stage, const Eigen::MatrixXd& design, const Eigen::VectorXd& keep) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < keep.size(); ++i) {
    if (keep(i) > 0.0) rows.push_back(i);
  }
  Eigen::MatrixXd kept(static_cast<Eigen::Index>(rows.size()), design.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) kept.row(static_cast<Eigen::Index>(r)) = design.row(rows[r]);
  const RankCheck check = check_full_rank(kept);
  return {stage, check.min_eigenvalue, check.pass};
}

std::string rank_message(const RankDiagnostic& d) {
  char buffer[160];
  std::snprintf(buffer, sizeof buffer, "%s regressors are rank deficient (min eigenvalue of the scaled moment matrix %.6g)",
                d.stage.c_str(), d.min_eigenvalue);
  return buffer;
}

std::vector<RankDiagnostic> diagnose(const ThreeStageEstimator& estimator) {
  const ObservationTable& table = estimator.table();
  const RegressorBasis& basis = estimator.basis();
  std::vector<RankDiagnostic> out;
  out.push_back(rank_of("first_stage", basis.first_stage_design(table), Eigen::VectorXd::Ones(table.rows())));
  if (!out.back().pass) throw Error(ErrorKind::RankDeficient, rank_message(out.back()));
  const ControlFunctionFit cf = control_function(table, Eigen::VectorXd::Ones(table.rows()), basis,
                                                 estimator.config().first_stage,
                                                 estimator.config().first_stage.method == Method::dr
                                                     ? &estimator.first_stage_thresholds()
                                                     : nullptr);
  out.push_back(rank_of("second_stage", basis.second_stage_design(table, cf.v_hat, cf.trim), cf.trim));
  if (!out.back().pass) throw Error(ErrorKind::RankDeficient, rank_message(out.back()));
  return out;
}

std::string surface_name(const StructuralSurface& s, const std::vector<Eigen::VectorXd>& conditioning) {
  std::string name = to_string(s.kind);
  if (s.inversion_grid) name += "_support";
  if (s.conditioning) {
    for (std::size_t k = 0; k < conditioning.size(); ++k) {
      if (conditioning[k].size() == s.conditioning->size() && conditioning[k] == *s.conditioning) {
        name += "_cond" + std::to_string(k + 1);
        break;
      }
    }
  }
  return name;
}

const char* level_header(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::dsf: return "y";
    case SurfaceKind::qsf: return "tau";
    default: return nullptr;
  }
}

std::string coordinates_header(const StructuralSurface& s, const ObservationTable& table) {
  std::string h;
  if (const char* level = level_header(s.kind)) h += std::string(level) + ",";
  h += "x";
  if (s.conditioning) {
    for (const auto& name : table.z1_names) h += "," + name;
  }
  return h;
}

std::string coordinates(double level, bool has_level, double x, const StructuralSurface& s) {
  std::string row;
  if (has_level) row += format_real(level) + ",";
  row += format_real(x);
  if (s.conditioning) {
    for (Eigen::Index j = 0; j < s.conditioning->size(); ++j) row += "," + format_real((*s.conditioning)(j));
  }
  return row;
}

std::string estimates_csv(const StructuralSurface& s, const ObservationTable& table) {
  std::string out = coordinates_header(s, table) + ",estimate\n";
  const bool has_level = level_header(s.kind) != nullptr;
  for (std::size_t ix = 0; ix < s.x.size(); ++ix) {
    for (Eigen::Index il = 0; il < s.level_count(); ++il) {
      const double level = has_level ? s.levels[static_cast<std::size_t>(il)] : 0.0;
      out += coordinates(level, has_level, s.x[ix], s) + "," +
             format_real(s.estimates(s.index(static_cast<Eigen::Index>(ix), il))) + "\n";
    }
  }
  return out;
}

std::string band_csv(const StructuralSurface& s, const UniformBand& band, const ObservationTable& table) {
  std::string out = coordinates_header(s, table) + ",estimate,se,lower,upper\n";
  const bool has_level = level_header(s.kind) != nullptr;
  for (Eigen::Index p = 0; p < band.center.size(); ++p) {
    const double level = has_level ? band.levels[static_cast<std::size_t>(p)] : 0.0;
    out += coordinates(level, has_level, band.x[static_cast<std::size_t>(p)], s) + "," +
           format_real(band.center(p)) + "," + format_real(band.se(p)) + "," + format_real(band.lower(p)) + "," +
           format_real(band.upper(p)) + "\n";
  }
  return out;
}

}  // namespace

std::vector<RankDiagnostic> check_configuration(const RunConfig& config, const ObservationTable& table) {
  return diagnose(build_estimator(config, table));
}

RunReport run_pipeline(const RunConfig& config, const ObservationTable& table) {
  RunReport report;
  auto clock = std::chrono::steady_clock::now();
  const ThreeStageEstimator estimator = build_estimator(config, table);
  report.rank = diagnose(estimator);
  report.timings["setup"] = seconds_since(clock);

  clock = std::chrono::steady_clock::now();
  const EstimationResult result = estimator.estimate();
  report.timings["estimate"] = seconds_since(clock);
  report.warnings = result.warnings;

  const auto& conditioning = estimator.regions().conditioning;
  for (const auto& s : result.surfaces) {
    report.files.push_back({surface_name(s, conditioning) + ".csv", estimates_csv(s, table)});
  }

  nlohmann::json ensemble_json;
  if (config.bootstrap == 0) {
    report.warnings.emplace_back("B=0: inference disabled, only point estimates are written");
  } else {
    clock = std::chrono::steady_clock::now();
    const BootstrapEnsemble ensemble =
        bootstrap_ensemble(estimator, config.bootstrap, config.seed, config.resolved_workers());
    report.timings["bootstrap"] = seconds_since(clock);
    for (const auto& f : ensemble.failures) {
      report.replicate_failures.push_back("replicate " + std::to_string(f.replicate) + ": " + f.message);
    }
    ensemble_json["requested"] = ensemble.requested;
    ensemble_json["successful"] = ensemble.replicates.size();
    ensemble_json["master_seed"] = ensemble.master_seed;
    ensemble_json["weight_law"] = ensemble.weight_law;
    ensemble_json["failures"] = report.replicate_failures;
    ensemble_json["alpha"] = config.alpha;

    if (ensemble.failed()) {
      report.bootstrap_failed = true;
      report.warnings.push_back("bootstrap: " + std::to_string(ensemble.failures.size()) + " of " +
                                std::to_string(ensemble.requested) +
                                " replicates failed (more than 5%); bands are not emitted");
    } else {
      clock = std::chrono::steady_clock::now();
      nlohmann::json critical = nlohmann::json::object();
      for (std::size_t k = 0; k < result.surfaces.size(); ++k) {
        const StructuralSurface& s = result.surfaces[k];
        if (s.inversion_grid) continue;
        UniformBand band;
        if (s.kind == SurfaceKind::qsf && estimator.discrete_outcome()) {
          // Invert the band of the DSF over the outcome support at the same x and conditioning.
          std::size_t match = result.surfaces.size();
          for (std::size_t j = 0; j < result.surfaces.size(); ++j) {
            const auto& c = result.surfaces[j];
            if (c.inversion_grid && c.conditioning.has_value() == s.conditioning.has_value() &&
                (!c.conditioning || *c.conditioning == *s.conditioning)) {
              match = j;
              break;
            }
          }
          if (match == result.surfaces.size()) throw Error(ErrorKind::InvalidInput, "no support grid for QSF band");
          const UniformBand dsf_band = surface_band(result.surfaces[match], ensemble.draws[match], config.alpha);
          band = qsf_band_discrete(result.surfaces[match], dsf_band, s.levels);
        } else if (s.kind == SurfaceKind::qsf) {
          band = qsf_band_continuous(s, ensemble.draws[k], config.alpha);
        } else {
          band = surface_band(s, ensemble.draws[k], config.alpha);
        }
        report.warnings.insert(report.warnings.end(), band.warnings.begin(), band.warnings.end());
        const std::string name = surface_name(s, conditioning);
        critical[name] = band.critical;
        report.files.push_back({name + "_band.csv", band_csv(s, band, table)});
      }
      ensemble_json["critical_values"] = critical;
      report.bands_emitted = true;
      report.timings["bands"] = seconds_since(clock);
    }
    report.files.push_back({"ensemble.json", ensemble_json.dump(2) + "\n"});
  }

  nlohmann::json manifest;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : report.files) {
    files.push_back({{"name", f.name}, {"fnv1a64", fnv1a64_hex(f.contents)}, {"bytes", f.contents.size()}});
  }
  manifest["files"] = files;
  manifest["config"] = config.settings();
  manifest["warnings"] = report.warnings;
  nlohmann::json rank = nlohmann::json::array();
  for (const auto& r : report.rank) {
    rank.push_back({{"stage", r.stage}, {"min_eigenvalue", r.min_eigenvalue}, {"pass", r.pass}});
  }
  manifest["rank"] = rank;
  manifest["observations"] = table.rows();
  manifest["discrete_outcome"] = estimator.discrete_outcome();
  manifest["bands_emitted"] = report.bands_emitted;
  manifest["bootstrap_failed"] = report.bootstrap_failed;
  report.files.push_back({"manifest.json", manifest.dump(2) + "\n"});
  return report;
}

RunReport run_pipeline(const RunConfig& config) { return run_pipeline(config, read_table_file(config)); }

void write_outputs(const RunReport& report, const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw Error(ErrorKind::InvalidInput, "cannot create output directory '" + directory + "': " + ec.message());
  for (const auto& f : report.files) {
    const fs::path path = fs::path(directory) / f.name;
    std::ofstream out(path, std::ios::binary);
    out << f.contents;
    if (!out) throw Error(ErrorKind::InvalidInput, "cannot write '" + path.string() + "'");
  }
}

const std::vector<std::string>& design_keys() {
  static const std::vector<std::string> keys{"pi1",   "pi2", "pi3",   "sigma_x", "b1",     "b2",
                                             "s1",    "s2",  "theta", "gamma",   "z_law", "z_probability",
                                             "covariate"};
  return keys;
}

void set_design_parameter(TriangularDesign& design, const std::string& key, const std::string& value) {
  if (key == "pi1") {
    design.pi1 = parse_real(key, value);
  } else if (key == "pi2") {
    design.pi2 = parse_real(key, value);
  } else if (key == "pi3") {
    design.pi3 = parse_real(key, value);
  } else if (key == "sigma_x") {
    design.sigma_x = parse_real(key, value);
  } else if (key == "b1") {
    design.b1 = parse_real(key, value);
  } else if (key == "b2") {
    design.b2 = parse_real(key, value);
  } else if (key == "s1") {
    design.s1 = parse_real(key, value);
  } else if (key == "s2") {
    design.s2 = parse_real(key, value);
  } else if (key == "theta") {
    design.theta = parse_real(key, value);
  } else if (key == "gamma") {
    design.gamma = parse_real(key, value);
  } else if (key == "z_probability") {
    design.z_probability = parse_real(key, value);
  } else if (key == "z_law") {
    const std::string v = trim(value);
    if (v == "normal") {
      design.z_law = InstrumentLaw::standard_normal;
    } else if (v == "bernoulli") {
      design.z_law = InstrumentLaw::bernoulli;
    } else {
      bad_value(key, value, "normal or bernoulli");
    }
  } else if (key == "covariate") {
    design.with_covariate = parse_bool(key, value);
  } else {
    throw Error(ErrorKind::InvalidInput, "unknown design parameter '" + key + "'");
  }
}

int exit_code_for(const Error& e) { return is_numerical(e.kind()) ? 2 : 1; }

}  // namespace cfsf
