#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>

#include "hbiuq/config.hpp"
#include "hbiuq/error.hpp"
#include "hbiuq/io.hpp"

using namespace hbiuq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hbiuq_unit_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

json additive_doc() {
  return json::parse(R"({
    "seed": 3,
    "forward": {"model": "additive", "weights": [1, 2]},
    "parameters": [
      {"name": "a", "prior": {"law": "uniform", "lo": 0, "hi": 5}},
      {"name": "b", "prior": {"law": "normal", "mean": 1, "sd": 2}, "range": [-1, 3]}
    ],
    "noise": {"kind": "known", "sigma": 0.5}
  })");
}

}  // namespace

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e22, 123456789.125, 0.0}) {
    CHECK(std::stod(io::format_double(v)) == v);
  }
  CHECK(io::format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("CSV quoting follows RFC 4180") {
  io::CsvTable t{{"name", "note"}, {{"plain", "has,comma"}, {"q\"uote", "line\nbreak"}, {"", "x"}}};
  const std::string text = io::to_csv(t);
  CHECK(text.find("\"has,comma\"") != std::string::npos);
  CHECK(text.find("\"q\"\"uote\"") != std::string::npos);
  CHECK(text.find("\r\n") != std::string::npos);
  auto back = io::parse_csv(text);
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);

  // LF-only input parses too.
  auto lf = io::parse_csv("a,b\n1,2\n");
  CHECK(lf.rows.size() == 1);
  CHECK(lf.rows[0][1] == "2");
  CHECK_THROWS(io::parse_csv("a,b\n1,2,3\n"));
}

TEST_CASE("observation files") {
  auto dir = scratch("obs");
  write_file(dir / "ok.csv", "group_id,control_1,observed_1\nB,0.5,1.25\nA,1,2\nB,2,3\n");
  auto f = io::read_observations(dir / "ok.csv");
  CHECK(f.group_labels == std::vector<std::string>{"B", "A"});
  CHECK(f.observations.size() == 3);
  CHECK(f.observations.group(1) == 1);
  CHECK(f.observations.control(2)[0] == 2.0);

  auto table = io::observations_table(f.observations, f.group_labels);
  CHECK(table.header == std::vector<std::string>{"group_id", "control_1", "observed_1"});
  CHECK(table.rows[0][0] == "B");

  write_file(dir / "bad_header.csv", "grp,observed_1\n0,1\n");
  CHECK_THROWS_AS(io::read_observations(dir / "bad_header.csv"), IoError);
  write_file(dir / "bad_value.csv", "group_id,observed_1\n0,abc\n");
  CHECK_THROWS_AS(io::read_observations(dir / "bad_value.csv"), IoError);
  CHECK_THROWS_AS(io::read_observations(dir / "missing.csv"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("config parsing is strict") {
  auto ok = parse_config(additive_doc());
  CHECK(ok.seed == 3);
  CHECK(ok.problem.parameters.size() == 2);
  CHECK(ok.problem.sampler.seed == 3);
  CHECK(ok.sensitivity.threshold == 1e-3);
  CHECK(ok.problem.parameters[1].design_range(false).lo == -1);

  auto unknown = additive_doc();
  unknown["sampler"] = {{"chains", 2}, {"chian", 3}};
  try {
    parse_config(unknown);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sampler.chian") != std::string::npos);
  }

  auto top = additive_doc();
  top["colour"] = "red";
  CHECK_THROWS_AS(parse_config(top), ConfigError);

  auto wrong_type = additive_doc();
  wrong_type["seed"] = "three";
  CHECK_THROWS_AS(parse_config(wrong_type), ConfigError);

  auto bad_count = additive_doc();
  bad_count["forward"]["weights"] = {1, 2, 3};
  CHECK_THROWS_AS(parse_config(bad_count), ConfigError);

  auto per_group = additive_doc();
  per_group["parameters"][0] = {{"name", "a"}, {"per_group", true}, {"mean_prior", {{"law", "uniform"}, {"lo", 0}, {"hi", 1}}}};
  CHECK_THROWS_AS(parse_config(per_group), ConfigError);

  auto bad_sd = additive_doc();
  bad_sd["parameters"][0] = {{"name", "a"},
                             {"per_group", true},
                             {"mean_prior", {{"law", "uniform"}, {"lo", 0}, {"hi", 1}}},
                             {"sd_prior", {{"law", "normal"}, {"mean", 1}, {"sd", 1}}}};
  CHECK_THROWS_AS(parse_config(bad_sd), ConfigError);
}

TEST_CASE("resolved config parses back to the same document") {
  auto doc = additive_doc();
  doc["data"] = "/tmp/data.csv";
  doc["sensitivity"] = {{"top_k", 1}, {"sobol_n", 512}};
  auto cfg = parse_config(doc);
  auto resolved = resolved_config(cfg);
  CHECK(resolved.contains("sampler"));
  CHECK(resolved["sensitivity"]["screen_samples"] == 50);
  auto again = resolved_config(parse_config(resolved));
  CHECK(again == resolved);

  auto toy = toy_config(7, 100, 2, 50);
  CHECK(resolved_config(parse_config(resolved_config(toy))) == resolved_config(toy));
}

TEST_CASE("relative data paths resolve against the config directory") {
  auto dir = scratch("rel");
  auto doc = additive_doc();
  doc["data"] = "obs.csv";
  write_file(dir / "config.json", doc.dump());
  auto cfg = load_config(dir / "config.json");
  CHECK(*cfg.data == dir / "obs.csv");
  write_file(dir / "broken.json", "{\"seed\": ");
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("HBIUQ_SEED overrides the config seed") {
  auto cfg = parse_config(additive_doc());
  setenv("HBIUQ_SEED", "99", 1);
  apply_seed_override(cfg);
  CHECK(cfg.seed == 99);
  CHECK(cfg.problem.sampler.seed == 99);
  setenv("HBIUQ_SEED", "12x", 1);
  CHECK_THROWS_AS(apply_seed_override(cfg), ConfigError);
  unsetenv("HBIUQ_SEED");
  apply_seed_override(cfg);
  CHECK(cfg.seed == 99);
}

TEST_CASE("JSON documents for results") {
  ChainSet cs;
  cs.names = {"x", "y"};
  Rng rng(1);
  for (int c = 0; c < 2; ++c) {
    Eigen::MatrixXd m(50, 2);
    for (Eigen::Index i = 0; i < 50; ++i) m.row(i) << rng.normal(), rng.normal();
    cs.draws.push_back(m);
    cs.stats.emplace_back();
  }
  auto j = io::to_json(diagnostics(cs));
  CHECK(j["chains"] == 2);
  CHECK(j["parameters"].size() == 2);
  CHECK(j["parameters"][0]["name"] == "x");
  CHECK(j["parameters"][0].contains("rhat"));

  auto table = io::draws_table(cs);
  CHECK(table.header == std::vector<std::string>{"chain", "draw", "x", "y"});
  CHECK(table.rows.size() == 100);

  PopulationPosterior pop;
  pop.families = {"a"};
  pop.fitted = {{1.5, 0.25}};
  pop.draws = Eigen::MatrixXd::Constant(3, 1, 1.5);
  pop.correlation = Eigen::MatrixXd::Identity(1, 1);
  auto pj = io::population_json(pop, "population_draws.csv");
  CHECK(pj["families"]["a"]["law"] == "normal");
  CHECK(pj["families"]["a"]["mean"] == 1.5);
  CHECK(pj["draws_file"] == "population_draws.csv");
}

TEST_CASE("SVG output is well formed") {
  ChainSet cs;
  cs.names = {"x"};
  cs.draws.push_back(Eigen::MatrixXd::Random(20, 1));
  cs.draws.push_back(Eigen::MatrixXd::Random(20, 1));
  auto trace = io::trace_svg(cs, 0);
  CHECK(trace.rfind("<svg", 0) == 0);
  CHECK(trace.find("</svg>") != std::string::npos);
  auto pooled = cs.pooled(0);
  auto dens = io::density_svg(pooled, "x");
  CHECK(dens.find("<polyline") != std::string::npos);
}
