#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cfsf/error.hpp"
#include "cfsf/pipeline.hpp"
#include "cfsf/simulate.hpp"

using namespace cfsf;

namespace {

RunConfig small_config() {
  RunConfig config;
  config.set("M", "39");
  config.set("S", "79");
  config.set("B", "12");
  config.set("seed", "5");
  return config;
}

const OutputFile* find_file(const RunReport& report, const std::string& name) {
  for (const auto& f : report.files) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

std::vector<std::vector<double>> parse_rows(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("config text and keys") {
  std::istringstream text("# comment\n\nM = 99\n  first_stage=dr \nlink = probit\ntaus = 0.1,0.9\n");
  const auto pairs = parse_config_text(text);
  CHECK(pairs.at("M") == "99");
  CHECK(pairs.at("first_stage") == "dr");
  RunConfig config;
  for (const auto& [k, v] : pairs) config.set(k, v);
  CHECK(config.grid_size == 99);
  CHECK(config.first_stage_method == Method::dr);
  CHECK(config.link == Link::probit);
  CHECK(config.regions.taus == std::vector<double>{0.1, 0.9});

  CHECK_THROWS_AS(config.set("no_such_key", "1"), Error);
  CHECK_THROWS_WITH_AS(config.set("M", "many"), doctest::Contains("'M'"), Error);
  config.set("epsilon", "0.7");
  CHECK_THROWS_AS(config.validate(), Error);

  std::istringstream broken("M 99\n");
  CHECK_THROWS_AS(parse_config_text(broken), Error);
}

TEST_CASE("defaults") {
  const RunConfig config;
  CHECK(config.grid_size == 599);
  CHECK(config.mesh_size == 599);
  CHECK(config.bootstrap == 199);
  CHECK(config.epsilon == 0.01);
  CHECK(config.alpha == 0.1);
  CHECK(config.regions.x_points == 5);
  CHECK(config.regions.y_points == 15);
  CHECK(config.regions.taus == std::vector<double>{0.25, 0.5, 0.75});
}

TEST_CASE("CSV ingest") {
  const RunConfig config;
  std::istringstream good("\xEF\xBB\xBFy,x,z2\n1,2,3\n4,5,6\n");
  const ObservationTable t = read_table(good, config);
  CHECK(t.rows() == 2);
  CHECK(t.z2(1, 0) == 6.0);

  std::istringstream missing("y,z2\n1,3\n");
  CHECK_THROWS_WITH_AS(read_table(missing, config), doctest::Contains("missing column 'x'"), Error);

  std::istringstream blank("y,x,z2\n1,,3\n");
  CHECK_THROWS_WITH_AS(read_table(blank, config), doctest::Contains("line 2"), Error);

  std::istringstream text("y,x,z2\n1,a,3\n");
  CHECK_THROWS_WITH_AS(read_table(text, config), doctest::Contains("column 'x'"), Error);

  std::istringstream no_instrument("y,x,w\n1,2,3\n");
  CHECK_THROWS_AS(read_table(no_instrument, config), Error);

  // Simulated output reads back without loss.
  TriangularDesign design;
  design.with_covariate = true;
  const ObservationTable sim = generate(design, 40, 2);
  std::stringstream csv;
  write_csv(csv, sim);
  const ObservationTable back = read_table(csv, config);
  CHECK(back.y == sim.y);
  CHECK(back.x == sim.x);
  CHECK(back.z1 == sim.z1);
  CHECK(back.z2 == sim.z2);
}

TEST_CASE("B=0 writes point estimates only") {
  RunConfig config = small_config();
  config.set("B", "0");
  const RunReport report = run_pipeline(config, generate(TriangularDesign{}, 300, 1));
  CHECK_FALSE(report.bands_emitted);
  bool warned = false;
  for (const auto& w : report.warnings) warned = warned || w.find("B=0") != std::string::npos;
  CHECK(warned);
  for (const auto& f : report.files) CHECK(f.name.find("_band") == std::string::npos);
  CHECK(find_file(report, "asf.csv") != nullptr);
  CHECK(report.files.back().name == "manifest.json");
}

TEST_CASE("outputs are identical across runs and worker counts") {
  const ObservationTable table = generate(TriangularDesign{}, 300, 1);
  RunConfig one = small_config();
  one.set("workers", "1");
  RunConfig three = small_config();
  three.set("workers", "3");
  const RunReport a = run_pipeline(one, table);
  const RunReport b = run_pipeline(three, table);
  const RunReport c = run_pipeline(one, table);
  REQUIRE(a.files.size() == b.files.size());
  for (std::size_t i = 0; i < a.files.size(); ++i) {
    CHECK(a.files[i].name == b.files[i].name);
    CHECK(a.files[i].contents == b.files[i].contents);
    CHECK(a.files[i].contents == c.files[i].contents);
  }
}

TEST_CASE("band files and manifest") {
  const RunReport report = run_pipeline(small_config(), generate(TriangularDesign{}, 300, 3));
  CHECK(report.bands_emitted);
  for (const char* name : {"asf_band.csv", "qsf_band.csv", "dsf_band.csv"}) {
    const OutputFile* f = find_file(report, name);
    REQUIRE(f != nullptr);
    for (const auto& row : parse_rows(f->contents)) {
      const std::size_t k = row.size();
      CHECK(row[k - 2] <= row[k - 4]);  // lower <= estimate
      CHECK(row[k - 4] <= row[k - 1]);  // estimate <= upper
    }
  }
  const auto manifest = nlohmann::json::parse(report.files.back().contents);
  for (const auto& entry : manifest["files"]) {
    const OutputFile* f = find_file(report, entry["name"].get<std::string>());
    REQUIRE(f != nullptr);
    CHECK(entry["fnv1a64"].get<std::string>() == fnv1a64_hex(f->contents));
    CHECK(entry["bytes"].get<std::size_t>() == f->contents.size());
  }
  CHECK_FALSE(manifest["config"].contains("workers"));
}

TEST_CASE("checksum") {
  CHECK(fnv1a64_hex("") == "cbf29ce484222325");
  CHECK(fnv1a64_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("rank check and exit codes") {
  ObservationTable table = generate(TriangularDesign{}, 200, 4);
  const auto diagnostics = check_configuration(small_config(), table);
  REQUIRE(diagnostics.size() == 2);
  for (const auto& d : diagnostics) CHECK(d.pass);

  table.z2.col(0).setConstant(1.0);  // no instrument variation
  try {
    check_configuration(small_config(), table);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RankDeficient);
    CHECK(exit_code_for(e) == 2);
  }
  CHECK(exit_code_for(Error(ErrorKind::InvalidInput, "x")) == 1);
  CHECK(exit_code_for(Error(ErrorKind::Separation, "x")) == 2);
  CHECK(exit_code_for(Error(ErrorKind::DesignInvalid, "x")) == 1);
}

TEST_CASE("outputs land on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "cfsf_pipeline_test";
  std::filesystem::remove_all(dir);
  RunConfig config = small_config();
  config.set("B", "0");
  const RunReport report = run_pipeline(config, generate(TriangularDesign{}, 200, 6));
  write_outputs(report, dir.string());
  for (const auto& f : report.files) {
    std::ifstream in(dir / f.name, std::ios::binary);
    std::ostringstream contents;
    contents << in.rdbuf();
    CHECK(contents.str() == f.contents);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("distribution regression configuration runs end to end") {
  RunConfig config = small_config();
  config.set("first_stage", "dr");
  config.set("second_stage", "dr");
  config.set("B", "0");
  const RunReport report = run_pipeline(config, generate(TriangularDesign{}, 300, 2));
  CHECK(report.rank.size() == 2);
  CHECK(find_file(report, "qsf.csv") != nullptr);
}
