#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "hbiuq/cli.hpp"
#include "hbiuq/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hbiuq;

namespace {

struct Invocation {
  int code;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "hbiuq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hbiuq_unit_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_json_file(const fs::path& p, const json& doc) {
  std::ofstream(p) << doc.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

json additive_config(std::vector<double> weights) {
  json params = json::array();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    params.push_back({{"name", "x" + std::to_string(i + 1)}, {"prior", {{"law", "uniform"}, {"lo", 0}, {"hi", 1}}}});
  }
  return {{"seed", 5},
          {"forward", {{"model", "additive"}, {"weights", weights}}},
          {"parameters", params},
          {"sensitivity", {{"sobol_n", 2048}, {"bootstrap", 50}}}};
}

}  // namespace

TEST_CASE("argument errors map to exit 2") {
  CHECK(invoke({}).code == cli::kConfig);
  CHECK(invoke({"frobnicate"}).code == cli::kConfig);
  CHECK(invoke({"calibrate"}).code == cli::kConfig);
}

TEST_CASE("benchmark-toy refuses an unidentifiable layout") {
  auto dir = scratch("refuse");
  auto r = invoke({"benchmark-toy", "--groups", "2", "--per-group", "1", "--out", (dir / "out").string()});
  CHECK(r.code == cli::kConfig);
  CHECK(r.err.find("unidentifiable") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("config and data errors") {
  auto dir = scratch("errors");
  SUBCASE("unknown key") {
    auto doc = additive_config({1, 1});
    doc["sampler"] = {{"chainz", 2}};
    auto p = write_json_file(dir / "c.json", doc);
    CHECK(invoke({"screen", p.string(), "--out", (dir / "o").string()}).code == cli::kConfig);
  }
  SUBCASE("missing config file") {
    CHECK(invoke({"sobol", (dir / "nope.json").string()}).code == cli::kIo);
  }
  SUBCASE("missing data path") {
    auto doc = additive_config({1, 1});
    doc["data"] = "does_not_exist.csv";
    auto p = write_json_file(dir / "c.json", doc);
    CHECK(invoke({"calibrate", p.string(), "--out", (dir / "o").string()}).code == cli::kIo);
  }
  SUBCASE("locked output directory") {
    fs::create_directories(dir / "o");
    std::ofstream(dir / "o" / ".hbiuq.lock") << "busy";
    auto p = write_json_file(dir / "c.json", additive_config({1, 1}));
    CHECK(invoke({"screen", p.string(), "--out", (dir / "o").string()}).code == cli::kIo);
  }
  SUBCASE("zero-variance output") {
    auto p = write_json_file(dir / "c.json", additive_config({0, 0}));
    CHECK(invoke({"sobol", p.string(), "--out", (dir / "o").string()}).code == cli::kZeroVariance);
  }
  SUBCASE("GP surrogate without a gradient fallback") {
    std::ofstream(dir / "obs.csv") << "group_id,observed_1\n0,1.0\n0,1.2\n1,0.9\n";
    auto doc = additive_config({1, 1});
    doc["data"] = "obs.csv";
    doc["surrogate"] = {{"kind", "gp"}, {"lhs", 20}};
    doc["noise"] = {{"kind", "known"}, {"sigma", 0.1}};
    auto p = write_json_file(dir / "c.json", doc);
    auto r = invoke({"calibrate", p.string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kConfig);
    CHECK(r.err.find("finite-difference fallback") != std::string::npos);
  }
  SUBCASE("malformed HBIUQ_SEED") {
    auto p = write_json_file(dir / "c.json", additive_config({1, 1}));
    setenv("HBIUQ_SEED", "seven", 1);
    CHECK(invoke({"screen", p.string(), "--out", (dir / "o").string()}).code == cli::kConfig);
    unsetenv("HBIUQ_SEED");
  }
  fs::remove_all(dir);
}

TEST_CASE("screen and sobol on an additive function") {
  auto dir = scratch("sens");
  auto p = write_json_file(dir / "c.json", additive_config({2, 0, 4, 1}));
  REQUIRE(invoke({"screen", p.string(), "--out", (dir / "screen").string()}).code == cli::kSuccess);
  auto screening = io::read_json(dir / "screen" / "screening.json");
  CHECK(screening["threshold"] == 1e-3);
  CHECK(screening["selected"] == json({"x1", "x3", "x4"}));
  CHECK(fs::exists(dir / "screen" / "screening.csv"));
  CHECK(fs::exists(dir / "screen" / "screening.svg"));
  CHECK(fs::exists(dir / "screen" / "resolved_config.json"));
  CHECK(fs::exists(dir / "screen" / "manifest.json"));
  CHECK_FALSE(fs::exists(dir / "screen" / ".hbiuq.lock"));

  REQUIRE(invoke({"sobol", p.string(), "--out", (dir / "sobol").string()}).code == cli::kSuccess);
  auto sobol = io::read_json(dir / "sobol" / "sobol.json");
  CHECK(sobol["ranking"] == json({"x3", "x1", "x4", "x2"}));
  CHECK(sobol["evaluations"] == 2048 * 6);
  auto table = io::read_csv(dir / "sobol" / "sobol.csv");
  CHECK(table.header == std::vector<std::string>{"parameter", "output", "S1", "ST", "S1_se", "ST_se"});
  CHECK(table.rows[0][0] == "x3");
  fs::remove_all(dir);
}

TEST_CASE("HBIUQ_SEED reaches the resolved config") {
  auto dir = scratch("seed");
  auto p = write_json_file(dir / "c.json", additive_config({1, 2}));
  setenv("HBIUQ_SEED", "1234", 1);
  auto r = invoke({"screen", p.string(), "--out", (dir / "o").string()});
  unsetenv("HBIUQ_SEED");
  REQUIRE(r.code == cli::kSuccess);
  CHECK(io::read_json(dir / "o" / "resolved_config.json")["seed"] == 1234);
  fs::remove_all(dir);
}

TEST_CASE("calibrate reproduces benchmark-toy from its resolved config") {
  auto dir = scratch("toy");
  auto bench = invoke({"benchmark-toy", "--groups", "6", "--draws", "800", "--burn-in", "300", "--seed", "4",
                       "--splits", "0", "--out", (dir / "bench").string()});
  REQUIRE((bench.code == cli::kSuccess || bench.code == cli::kConvergence));
  auto summary = io::read_json(dir / "bench" / "summary.json");
  CHECK(summary.contains("coverage_checks"));
  CHECK(fs::exists(dir / "bench" / "nonhierarchical" / "draws.csv"));
  CHECK(fs::exists(dir / "bench" / "plots" / "trace_mu_alpha.svg"));

  auto cal = invoke({"calibrate", (dir / "bench" / "resolved_config.json").string(), "--out", (dir / "cal").string()});
  REQUIRE((cal.code == cli::kSuccess || cal.code == cli::kConvergence));
  for (const char* f : {"draws.csv", "population.json", "population_draws.csv", "ppc.csv", "ppc.json"}) {
    CAPTURE(f);
    CHECK(slurp(dir / "bench" / f) == slurp(dir / "cal" / f));
  }
  fs::remove_all(dir);
}

TEST_CASE("poly surrogate artifact records the design size") {
  auto dir = scratch("poly");
  std::ofstream(dir / "obs.csv") << "group_id,control_1,observed_1\n"
                                    "0,-1,0.1\n0,0,-2.1\n0,1,3.9\n1,-1,-0.2\n1,0,-1.8\n1,1,4.2\n";
  json doc = {{"seed", 2},
              {"data", "obs.csv"},
              {"hierarchical", false},
              {"forward", {{"model", "quadratic"}}},
              {"parameters",
               {{{"name", "alpha"}, {"prior", {{"law", "uniform"}, {"lo", 0}, {"hi", 8}}}},
                {{"name", "beta"}, {"prior", {{"law", "uniform"}, {"lo", -2}, {"hi", 6}}}},
                {{"name", "theta"}, {"prior", {{"law", "uniform"}, {"lo", -6}, {"hi", 2}}}}}},
              {"noise", {{"kind", "known"}, {"sigma", 0.3}}},
              {"surrogate", {{"kind", "poly"}, {"degree", 2}, {"lhs", 100}}},
              {"sampler", {{"chains", 2}, {"draws", 300}, {"burn_in", 200}}},
              {"prior_extension", {{"enabled", false}}},
              {"ppc", {{"draws", 100}}}};
  auto p = write_json_file(dir / "c.json", doc);
  auto r = invoke({"calibrate", p.string(), "--out", (dir / "o").string()});
  REQUIRE((r.code == cli::kSuccess || r.code == cli::kConvergence));
  auto diag = io::read_json(dir / "o" / "diagnostics.json");
  CHECK(diag["surrogate"]["kind"] == "poly");
  CHECK(diag["surrogate"]["design_points"] == 100);
  CHECK(fs::exists(dir / "o" / "surrogate.json"));
  fs::remove_all(dir);
}
