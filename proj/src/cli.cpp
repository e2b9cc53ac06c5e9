#include <CLI11.hpp>
#include <Eigen/Core>
#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>

#include "hbiuq/cli.hpp"
#include "hbiuq/config.hpp"
#include "hbiuq/error.hpp"
#include "hbiuq/io.hpp"
#include "hbiuq/stats.hpp"

namespace hbiuq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Rng streams derived from the run seed, one per pipeline stage.
constexpr std::uint64_t kDataStream = 100;
constexpr std::uint64_t kPopulationStream = 101;
constexpr std::uint64_t kPpcStream = 102;
constexpr std::uint64_t kSplitStream = 103;
constexpr std::uint64_t kScreenStream = 104;
constexpr std::uint64_t kSobolStream = 105;
constexpr std::uint64_t kSensitivityDesignStream = 106;

constexpr double kRhatLimit = 1.05;
constexpr double kEssLimit = 400.0;

// Output directory with a lockfile guard and a record of what was written.
class ArtifactDir {
 public:
  ArtifactDir(fs::path root, std::string command, std::uint64_t seed)
      : root_(std::move(root)), command_(std::move(command)), seed_(seed) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw IoError("cannot create output directory " + root_.string() + ": " + ec.message());
    lock_ = root_ / ".hbiuq.lock";
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (!f) {
      if (errno == EEXIST) {
        throw IoError("output directory " + root_.string() +
                      " is in use by another run (delete .hbiuq.lock if that run is gone)");
      }
      throw IoError("cannot create lockfile in " + root_.string());
    }
    std::fclose(f);
  }
  ArtifactDir(const ArtifactDir&) = delete;
  ArtifactDir& operator=(const ArtifactDir&) = delete;
  ~ArtifactDir() {
    std::error_code ec;
    fs::remove(lock_, ec);
  }

  const fs::path& root() const { return root_; }

  fs::path path(const std::string& name) {
    const fs::path p = root_ / name;
    if (p.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(p.parent_path(), ec);
      if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
    }
    files_.insert(fs::path(name).generic_string());
    return p;
  }
  void csv(const std::string& name, const io::CsvTable& t) { io::write_csv(t, path(name)); }
  void json_file(const std::string& name, const json& doc) { io::write_json(doc, path(name)); }
  void text(const std::string& name, const std::string& s) { io::write_text(s, path(name)); }

  void manifest() {
    files_.insert("manifest.json");
    json doc = {{"tool", "hbiuq"},
                {"version", HBIUQ_VERSION},
                {"command", command_},
                {"seed", seed_},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"compiler", __VERSION__},
                {"files", std::vector<std::string>(files_.begin(), files_.end())}};
    io::write_json(doc, root_ / "manifest.json");
  }

 private:
  fs::path root_;
  fs::path lock_;
  std::string command_;
  std::uint64_t seed_;
  std::set<std::string> files_;
};

std::string plot_name(const std::string& coord) {
  std::string s = coord;
  std::replace_if(s.begin(), s.end(), [](char c) { return c == '[' || c == ']' || c == '/'; }, '_');
  return s;
}

json interval_json(const ParameterSummary& p) {
  return {{"mean", p.mean}, {"lower", p.q025}, {"upper", p.q975}};
}

struct PipelineOutcome {
  CalibrationResult calibration;
  std::optional<PopulationPosterior> population;
  std::optional<SplitReport> split;
  PpcReport ppc;
};

// Calibration, population resampling, predictive check, split study and
// plots, written under `prefix` in the artifact directory.
PipelineOutcome run_pipeline(const RunConfig& cfg, const io::ObservationFile& data, ArtifactDir& dir,
                             const std::string& prefix, std::ostream& log) {
  const ObservationSet& obs = data.observations;
  log << "calibrating " << (cfg.hierarchical ? "hierarchical" : "non-hierarchical") << " model: "
      << obs.group_count() << " groups, " << obs.size() << " records\n";
  PipelineOutcome out;
  out.calibration = cfg.extend_priors ? calibrate_with_extension(cfg.problem, obs, cfg.hierarchical, cfg.extension)
                                      : hbiuq::calibrate(cfg.problem, obs, cfg.hierarchical);
  const CalibrationResult& cal = out.calibration;

  dir.csv(prefix + "draws.csv", io::draws_table(cal.chains));
  json diag = io::to_json(cal.diagnostics);
  diag["hierarchical"] = cal.hierarchical;
  diag["status"] = cal.status == CalibrationStatus::Converged ? "converged" : "failed";
  diag["status_message"] = cal.status_message;
  diag["extension_rounds"] = cal.extension_rounds;
  json ranges = json::object();
  for (std::size_t i = 0; i < cfg.problem.parameters.size(); ++i) {
    ranges[cfg.problem.parameters[i].name] = {cal.ranges[i].lo, cal.ranges[i].hi};
  }
  diag["ranges"] = ranges;
  json chain_stats = json::array();
  for (const auto& s : cal.chains.stats) chain_stats.push_back(io::to_json(s));
  diag["chain_stats"] = chain_stats;
  if (cal.surrogate) {
    diag["surrogate"] = {{"kind", cal.surrogate->is_poly() ? "poly" : "gp"},
                         {"design_points", cal.surrogate->design.rows()},
                         {"file", prefix + "surrogate.json"}};
    save_surrogate(*cal.surrogate, dir.path(prefix + "surrogate.json"));
  }
  dir.json_file(prefix + "diagnostics.json", diag);

  if (!cal.families.empty()) {
    Rng rng = Rng::for_stream(cfg.seed, kPopulationStream);
    out.population = resample_population(cal.summary, cal.families, cfg.population_draws, rng);
    dir.json_file(prefix + "population.json", io::population_json(*out.population, "population_draws.csv"));
    dir.csv(prefix + "population_draws.csv", io::population_draws_table(*out.population));
  }

  {
    Rng rng = Rng::for_stream(cfg.seed, kPpcStream);
    out.ppc = posterior_predictive_check(cfg.problem, obs, cal, out.population ? &*out.population : nullptr,
                                         cfg.ppc, rng);
    dir.csv(prefix + "ppc.csv", io::ppc_table(out.ppc, data.group_labels));
    dir.json_file(prefix + "ppc.json", io::ppc_json(out.ppc));
  }

  if (cfg.splits > 0) {
    log << "split study: " << cfg.splits << " random half splits\n";
    Rng rng = Rng::for_stream(cfg.seed, kSplitStream);
    out.split = dataset_split_study(cfg.problem, obs, cfg.hierarchical, cfg.splits, rng, &cal);
    dir.json_file(prefix + "split.json", io::split_json(*out.split));
  }

  for (std::size_t i = 0; i < cal.summary.dim(); ++i) {
    const std::string name = plot_name(cal.summary.names[i]);
    dir.text(prefix + "plots/trace_" + name + ".svg", io::trace_svg(cal.summary, i));
    const auto pooled = cal.summary.pooled(i);
    dir.text(prefix + "plots/density_" + name + ".svg", io::density_svg(pooled, cal.summary.names[i]));
  }
  if (out.population) {
    for (std::size_t k = 0; k < out.population->families.size(); ++k) {
      const Eigen::VectorXd col = out.population->draws.col(static_cast<Eigen::Index>(k));
      dir.text(prefix + "plots/population_" + plot_name(out.population->families[k]) + ".svg",
               io::density_svg({col.data(), static_cast<std::size_t>(col.size())},
                               out.population->families[k] + " (population)"));
    }
  }
  if (cal.status == CalibrationStatus::Failed) log << "warning: " << cal.status_message << "\n";
  return out;
}

fs::path output_dir(const RunConfig& cfg, const std::optional<fs::path>& flag, const std::string& command) {
  if (flag) return *flag;
  if (cfg.output) return *cfg.output;
  return fs::path("hbiuq-" + command + "-out");
}

RunConfig load(const fs::path& config) {
  if (!fs::exists(config)) throw IoError("config file not found: " + config.string());
  RunConfig cfg = load_config(config);
  apply_seed_override(cfg);
  return cfg;
}

io::ObservationFile load_data(const RunConfig& cfg) {
  if (!cfg.data) throw ConfigError("config has no data path");
  if (!fs::exists(*cfg.data)) throw IoError("data file not found: " + cfg.data->string());
  io::ObservationFile f = io::read_observations(*cfg.data);
  if (f.observations.control_dim() != cfg.forward.control_dim()) {
    throw ConfigError("data has " + std::to_string(f.observations.control_dim()) + " control columns but the " +
                      cfg.forward.model + " model takes " + std::to_string(cfg.forward.control_dim()));
  }
  if (f.observations.output_dim() != cfg.problem.forward.output_dim) {
    throw ConfigError("data has " + std::to_string(f.observations.output_dim()) + " observed columns but the " +
                      cfg.forward.model + " model has " + std::to_string(cfg.problem.forward.output_dim) +
                      " outputs");
  }
  return f;
}

// The function screened or decomposed: the forward model (or its fitted
// surrogate) at every configured control setting, outputs stacked.
struct SensitivityTarget {
  VectorFunction f;
  std::vector<Bounds> bounds;
  std::vector<std::string> names;
  std::vector<double> nominal;
};

SensitivityTarget sensitivity_target(const RunConfig& cfg) {
  std::optional<io::ObservationFile> data;
  if (cfg.data) data = load_data(cfg);
  std::vector<std::vector<double>> controls = cfg.sensitivity.controls;
  if (controls.empty() && data) {
    std::set<std::vector<double>> seen;
    for (std::size_t r = 0; r < data->observations.size(); ++r) {
      const auto c = data->observations.control(r);
      std::vector<double> v(c.begin(), c.end());
      if (seen.insert(v).second) controls.push_back(std::move(v));
    }
  }
  if (controls.empty()) {
    if (cfg.forward.control_dim() > 0) {
      throw ConfigError("the " + cfg.forward.model +
                        " model needs control settings: give sensitivity.controls or a data file");
    }
    controls.push_back({});
  }
  SensitivityTarget t;
  for (const auto& p : cfg.problem.parameters) {
    t.bounds.push_back(p.design_range(cfg.hierarchical));
    t.names.push_back(p.name);
    t.nominal.push_back(p.nominal_value(cfg.hierarchical));
  }
  ForwardModel forward = cfg.problem.forward;
  const auto& spec = cfg.problem.surrogate;
  if (spec.policy != SurrogatePolicy::DirectForward) {
    if (!data) throw ConfigError("fitting a surrogate needs a data file for its control settings");
    Rng rng = Rng::for_stream(cfg.seed, kSensitivityDesignStream);
    auto table = std::make_shared<const SurrogateTable>(
        fit_surrogate_table(cfg.problem.forward, data->observations, t.bounds, spec.design_size,
                            spec.policy == SurrogatePolicy::FitPoly ? SurrogateKind::Poly : SurrogateKind::Gp,
                            spec.degree, rng, spec.gp));
    forward = make_surrogate_forward(table, cfg.problem.forward.param_dim);
  }
  t.f = at_controls(std::move(forward), std::move(controls));
  return t;
}

}  // namespace

int benchmark_toy(const BenchmarkOptions& o, std::ostream& log) {
  if (o.groups < 2) {
    throw ConfigError("unidentifiable configuration: the population sds need at least 2 groups (got " +
                      std::to_string(o.groups) + ")");
  }
  if (o.per_group < 3) {
    throw ConfigError("unidentifiable configuration: three per-group coefficients need at least 3 points per "
                      "group (got " + std::to_string(o.per_group) + ")");
  }
  if (o.chains == 0 || o.draws < o.chains) throw ConfigError("need at least one kept draw per chain");
  const std::size_t kept = (o.draws + o.chains - 1) / o.chains;
  RunConfig cfg = toy_config(o.seed, kept, o.chains, o.burn_in);
  cfg.splits = o.splits;

  ArtifactDir dir(o.output, "benchmark-toy", o.seed);
  ToyOptions toy;
  toy.groups = o.groups;
  toy.per_group = o.per_group;
  Rng data_rng = Rng::for_stream(o.seed, kDataStream);
  const ToyData generated = generate_toy_data(toy, data_rng);
  dir.csv("observations.csv", io::observations_table(generated.observations));
  {
    io::CsvTable truth;
    truth.header = {"group_id", "alpha", "beta", "theta"};
    for (Eigen::Index g = 0; g < generated.truth.rows(); ++g) {
      truth.rows.push_back({std::to_string(g), io::format_double(generated.truth(g, 0)),
                            io::format_double(generated.truth(g, 1)), io::format_double(generated.truth(g, 2))});
    }
    dir.csv("truth.csv", truth);
  }
  // Read back, so the run sees exactly what a calibrate run on this file sees.
  const io::ObservationFile data = io::read_observations(dir.root() / "observations.csv");
  // Relative to the resolved config itself, so the directory stays relocatable.
  cfg.data = "observations.csv";
  dir.json_file("resolved_config.json", resolved_config(cfg));

  const PipelineOutcome hier = run_pipeline(cfg, data, dir, "", log);
  RunConfig flat = cfg;
  flat.hierarchical = false;
  const PipelineOutcome nonhier = run_pipeline(flat, data, dir, "nonhierarchical/", log);

  const struct {
    const char* coord;
    double truth;
  } targets[] = {{"mu_alpha", toy.alpha.mean}, {"mu_beta", toy.beta.mean},   {"mu_theta", toy.theta.mean},
                 {"sigma_alpha", toy.alpha.sd}, {"sigma_beta", toy.beta.sd}, {"sigma_theta", toy.theta.sd}};
  const auto& diag = hier.calibration.diagnostics;
  bool pass = true;
  json checks = json::array();
  for (const auto& t : targets) {
    const auto& p = diag.at(t.coord);
    const bool ok = p.q025 <= t.truth && t.truth <= p.q975;
    pass = pass && ok;
    checks.push_back({{"parameter", t.coord}, {"truth", t.truth}, {"lower", p.q025}, {"upper", p.q975}, {"pass", ok}});
  }
  const double rhat = diag.max_rhat().value_or(1.0);
  const double ess = diag.min_ess();
  const bool converged = rhat < kRhatLimit && ess > kEssLimit;
  pass = pass && converged;

  json flat_ci = json::object();
  const char* shared[] = {"alpha", "beta", "theta"};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& p = nonhier.calibration.diagnostics.at(shared[i]);
    flat_ci[shared[i]] = interval_json(p);
    flat_ci[shared[i]]["truth"] = targets[i].truth;
    flat_ci[shared[i]]["contains_truth"] = p.q025 <= targets[i].truth && targets[i].truth <= p.q975;
  }
  json summary = {{"groups", o.groups},
                  {"per_group", o.per_group},
                  {"seed", o.seed},
                  {"chains", o.chains},
                  {"kept_draws", kept * o.chains},
                  {"coverage_checks", checks},
                  {"convergence",
                   {{"max_rhat", rhat}, {"min_ess_bulk", ess}, {"rhat_limit", kRhatLimit}, {"ess_limit", kEssLimit},
                    {"pass", converged}}},
                  {"noise_sigma", interval_json(diag.at("sigma"))},
                  {"nonhierarchical", flat_ci},
                  {"ppc_coverage", {{"hierarchical", hier.ppc.coverage}, {"nonhierarchical", nonhier.ppc.coverage}}},
                  {"pass", pass}};
  if (hier.split && nonhier.split) {
    summary["split_max_distance"] = {{"hierarchical", hier.split->max_distance()},
                                     {"nonhierarchical", nonhier.split->max_distance()}};
  }
  dir.json_file("summary.json", summary);
  dir.manifest();

  for (const auto& c : checks) {
    log << (c["pass"].get<bool>() ? "PASS " : "FAIL ") << c["parameter"].get<std::string>() << " 95% CI ["
        << c["lower"].get<double>() << ", " << c["upper"].get<double>() << "] truth " << c["truth"].get<double>()
        << "\n";
  }
  log << (converged ? "PASS " : "FAIL ") << "convergence: max R-hat " << rhat << ", min bulk ESS " << ess << "\n";
  return pass ? kSuccess : kConvergence;
}

int calibrate(const fs::path& config, const std::optional<fs::path>& output, std::ostream& log) {
  const RunConfig cfg = load(config);
  const io::ObservationFile data = load_data(cfg);
  ArtifactDir dir(output_dir(cfg, output, "calibrate"), "calibrate", cfg.seed);
  dir.json_file("resolved_config.json", resolved_config(cfg));
  const PipelineOutcome out = run_pipeline(cfg, data, dir, "", log);
  dir.manifest();
  return out.calibration.status == CalibrationStatus::Converged ? kSuccess : kConvergence;
}

int screen(const fs::path& config, const std::optional<fs::path>& output, std::ostream& log) {
  const RunConfig cfg = load(config);
  const SensitivityTarget t = sensitivity_target(cfg);
  ArtifactDir dir(output_dir(cfg, output, "screen"), "screen", cfg.seed);
  dir.json_file("resolved_config.json", resolved_config(cfg));
  Rng rng = Rng::for_stream(cfg.seed, kScreenStream);
  const ScreeningResult r =
      oat_screen(t.f, t.bounds, t.nominal, cfg.sensitivity.screen_samples, cfg.sensitivity.threshold, rng, t.names);
  dir.csv("screening.csv", io::screening_table(r));
  dir.text("screening.svg", io::screening_bar_svg(r));
  std::vector<std::string> selected;
  for (std::size_t i : r.selected_indices()) selected.push_back(r.names[i]);
  dir.json_file("screening.json",
                {{"threshold", r.threshold}, {"sweep_size", r.sweep_size}, {"selected", selected}});
  dir.manifest();
  log << "screening selected " << selected.size() << " of " << r.names.size() << " parameters\n";
  return kSuccess;
}

int sobol(const fs::path& config, const std::optional<fs::path>& output, std::ostream& log) {
  const RunConfig cfg = load(config);
  const SensitivityTarget t = sensitivity_target(cfg);
  ArtifactDir dir(output_dir(cfg, output, "sobol"), "sobol", cfg.seed);
  dir.json_file("resolved_config.json", resolved_config(cfg));
  Rng rng = Rng::for_stream(cfg.seed, kSobolStream);
  const SobolResult r = sobol_indices(t.f, t.bounds, cfg.sensitivity.sobol_n, rng, cfg.sensitivity.bootstrap, t.names);
  const auto order = rank_and_select(r);
  const auto chosen = rank_and_select(r, cfg.sensitivity.top_k);
  dir.csv("sobol.csv", io::sobol_table(r, order));
  dir.text("sobol.svg", io::sobol_bar_svg(r, order));
  std::vector<std::string> ranking, selected;
  for (std::size_t i : order) ranking.push_back(r.names[i]);
  for (std::size_t i : chosen) selected.push_back(r.names[i]);
  dir.json_file("sobol.json", {{"n", r.n},
                               {"evaluations", r.evaluations},
                               {"bootstrap", r.bootstrap},
                               {"ranking", ranking},
                               {"selected", selected}});
  dir.manifest();
  log << "sobol: " << r.evaluations << " evaluations, most influential: " << ranking.front() << "\n";
  return kSuccess;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical Bayesian inverse uncertainty quantification"};
  app.set_version_flag("--version", std::string("hbiuq ") + HBIUQ_VERSION);
  app.require_subcommand(1);

  BenchmarkOptions bench;
  auto* b = app.add_subcommand("benchmark-toy", "Synthetic quadratic benchmark with known population truths");
  b->add_option("--groups", bench.groups, "Number of groups")->capture_default_str();
  b->add_option("--per-group", bench.per_group, "Points per group")->capture_default_str();
  b->add_option("--seed", bench.seed, "Run seed")->capture_default_str();
  b->add_option("--draws", bench.draws, "Kept draws summed over chains")->capture_default_str();
  b->add_option("--chains", bench.chains, "Number of chains")->capture_default_str();
  b->add_option("--burn-in", bench.burn_in, "Warm-up iterations per chain")->capture_default_str();
  b->add_option("--splits", bench.splits, "Random half splits for the split study")->capture_default_str();
  b->add_option("--out", bench.output, "Output directory")->capture_default_str();

  struct ConfigCommand {
    std::string config;
    std::optional<std::string> output;
  } cal_args, screen_args, sobol_args;
  auto add_config_command = [&](const char* name, const char* help, ConfigCommand& args) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("config", args.config, "Config document (JSON)")->required();
    s->add_option("--out", args.output, "Output directory (overrides the config)");
    return s;
  };
  auto* c = add_config_command("calibrate", "Surrogate, sampling, population and predictive-check pipeline", cal_args);
  auto* sc = add_config_command("screen", "One-at-a-time variance screening", screen_args);
  auto* so = add_config_command("sobol", "First-order and total Sobol indices", sobol_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kConfig;
  }

  auto opt_path = [](const std::optional<std::string>& s) -> std::optional<fs::path> {
    if (s) return fs::path(*s);
    return std::nullopt;
  };
  try {
    if (b->parsed()) {
      if (const char* env = std::getenv("HBIUQ_SEED"); env && *env && b->count("--seed") == 0) {
        RunConfig probe;
        apply_seed_override(probe);
        bench.seed = probe.seed;
      }
      return benchmark_toy(bench, err);
    }
    if (c->parsed()) return calibrate(cal_args.config, opt_path(cal_args.output), err);
    if (sc->parsed()) return screen(screen_args.config, opt_path(screen_args.output), err);
    if (so->parsed()) return sobol(sobol_args.config, opt_path(sobol_args.output), err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const ConvergenceError& e) {
    err << "convergence failure: " << e.what() << "\n";
    return kConvergence;
  } catch (const ZeroVarianceError& e) {
    err << "zero-variance output: " << e.what() << "\n";
    return kZeroVariance;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace hbiuq::cli
