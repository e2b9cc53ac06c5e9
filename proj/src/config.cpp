#include <charconv>
#include <cstdlib>
#include <set>

#include "hbiuq/config.hpp"
#include "hbiuq/error.hpp"
#include "hbiuq/io.hpp"

namespace hbiuq {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "must be an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config " + (path.empty() ? std::string("document") : path) + ": " + what);
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = get(key);
    if (!v) fail(at(key), "is required");
    return *v;
  }

  double number(const std::string& key, double def) {
    const json* v = get(key);
    return v ? as_number(*v, at(key)) : def;
  }

  std::size_t count(const std::string& key, std::size_t def, std::size_t min = 0) {
    const json* v = get(key);
    if (!v) return def;
    const std::size_t n = as_count(*v, at(key));
    if (n < min) fail(at(key), "must be at least " + std::to_string(min));
    return n;
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_boolean()) fail(at(key), "must be true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& def, std::initializer_list<const char*> allowed = {}) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_string()) fail(at(key), "must be a string");
    std::string s = v->get<std::string>();
    if (allowed.size()) {
      bool ok = false;
      std::string list;
      for (const char* a : allowed) {
        ok = ok || s == a;
        list += list.empty() ? a : std::string(", ") + a;
      }
      if (!ok) fail(at(key), "must be one of " + list + " (got '" + s + "')");
    }
    return s;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(at(k), "unknown key");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "must be a number");
    return v.get<double>();
  }

  static std::size_t as_count(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_number_integer()) {
      if (v.get<long long>() < 0) fail(path, "must be non-negative");
      return static_cast<std::size_t>(v.get<long long>());
    }
    fail(path, "must be a non-negative integer");
  }

  static std::vector<double> numbers(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "must be an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Distribution parse_distribution(const json& j, const std::string& path) {
  Reader r(j, path);
  const std::string law = r.string("law", "", {"uniform", "normal"});
  if (law.empty()) Reader::fail(r.at("law"), "is required");
  try {
    if (law == "uniform") {
      const double lo = Reader::as_number(r.require("lo"), r.at("lo"));
      const double hi = Reader::as_number(r.require("hi"), r.at("hi"));
      r.finish();
      return Distribution::uniform(lo, hi);
    }
    const double mean = Reader::as_number(r.require("mean"), r.at("mean"));
    const double sd = Reader::as_number(r.require("sd"), r.at("sd"));
    r.finish();
    return Distribution::normal(mean, sd);
  } catch (const ConfigError& e) {
    if (std::string(e.what()).rfind("config ", 0) == 0) throw;
    Reader::fail(path, e.what());
  }
}

json distribution_json(const Distribution& d) {
  if (d.is_uniform()) return {{"law", "uniform"}, {"lo", d.as_uniform().lo}, {"hi", d.as_uniform().hi}};
  return {{"law", "normal"}, {"mean", d.as_normal().mean}, {"sd", d.as_normal().sd}};
}

Transform parse_scale_transform(const std::string& s) { return s == "log" ? Transform::LogForPositive : Transform::LogitForBounded; }
const char* scale_transform_name(Transform t) { return t == Transform::LogForPositive ? "log" : "logit"; }

}  // namespace

ForwardModel ForwardSpec::build() const {
  if (model == "quadratic") return quadratic_forward();
  if (model == "additive") return additive_forward(weights);
  if (model == "product") return product_forward(inputs);
  throw ConfigError("unknown forward model '" + model + "'");
}

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig c;
  Reader top(doc, "");
  if (const json* v = top.get("seed")) c.seed = Reader::as_count(*v, "seed");
  if (const json* v = top.get("data")) {
    if (!v->is_string() || v->get<std::string>().empty()) Reader::fail("data", "must be a non-empty path");
    std::filesystem::path p = v->get<std::string>();
    c.data = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
  if (const json* v = top.get("output")) {
    if (!v->is_string() || v->get<std::string>().empty()) Reader::fail("output", "must be a non-empty path");
    std::filesystem::path p = v->get<std::string>();
    c.output = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
  c.hierarchical = top.boolean("hierarchical", true);

  {
    Reader r(top.require("forward"), "forward");
    c.forward.model = r.string("model", "", {"quadratic", "additive", "product"});
    if (c.forward.model.empty()) Reader::fail("forward.model", "is required");
    if (const json* w = r.get("weights")) c.forward.weights = Reader::numbers(*w, "forward.weights");
    c.forward.inputs = r.count("inputs", 0);
    r.finish();
    if (c.forward.model == "additive" && c.forward.weights.empty()) {
      Reader::fail("forward.weights", "the additive model needs at least one weight");
    }
    if (c.forward.model != "additive" && !c.forward.weights.empty()) {
      Reader::fail("forward.weights", "only the additive model takes weights");
    }
    if (c.forward.model == "product" && c.forward.inputs == 0) Reader::fail("forward.inputs", "must be at least 1");
    if (c.forward.model != "product" && c.forward.inputs != 0) {
      Reader::fail("forward.inputs", "only the product model takes an input count");
    }
    c.problem.forward = c.forward.build();
  }

  {
    const json& params = top.require("parameters");
    if (!params.is_array() || params.empty()) Reader::fail("parameters", "must be a non-empty array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string path = "parameters[" + std::to_string(i) + "]";
      Reader r(params[i], path);
      CalibrationParameter p;
      p.name = r.string("name", "");
      if (p.name.empty()) Reader::fail(r.at("name"), "is required");
      if (p.name.find_first_of(",\"[] \r\n") != std::string::npos) {
        Reader::fail(r.at("name"), "may not contain commas, quotes, brackets or whitespace");
      }
      if (!names.insert(p.name).second) Reader::fail(r.at("name"), "duplicate parameter '" + p.name + "'");
      p.per_group = r.boolean("per_group", false);
      if (const json* v = r.get("prior")) p.prior = parse_distribution(*v, r.at("prior"));
      else if (!p.per_group) Reader::fail(r.at("prior"), "is required for a shared parameter");
      if (const json* v = r.get("mean_prior")) p.mean_prior = parse_distribution(*v, r.at("mean_prior"));
      else if (p.per_group) Reader::fail(r.at("mean_prior"), "is required for a per-group parameter");
      if (const json* v = r.get("sd_prior")) {
        p.sd_prior = parse_distribution(*v, r.at("sd_prior"));
        if (!p.sd_prior.is_uniform() || p.sd_prior.as_uniform().lo < 0.0) {
          Reader::fail(r.at("sd_prior"), "must be a uniform law on a non-negative range");
        }
      } else if (p.per_group) {
        Reader::fail(r.at("sd_prior"), "is required for a per-group parameter");
      }
      // A per-group parameter in a non-hierarchical run falls back to its mean prior.
      if (!params[i].contains("prior") && p.per_group) p.prior = p.mean_prior;
      if (const json* v = r.get("range")) {
        const auto b = Reader::numbers(*v, r.at("range"));
        if (b.size() != 2 || !(b[0] < b[1])) Reader::fail(r.at("range"), "must be [lo, hi] with lo < hi");
        p.range = Bounds{b[0], b[1]};
      }
      if (const json* v = r.get("nominal")) p.nominal = Reader::as_number(*v, r.at("nominal"));
      r.finish();
      c.problem.parameters.push_back(std::move(p));
    }
    if (c.problem.parameters.size() != c.problem.forward.param_dim) {
      Reader::fail("parameters", "the " + c.forward.model + " model takes " +
                                     std::to_string(c.problem.forward.param_dim) + " inputs but " +
                                     std::to_string(c.problem.parameters.size()) + " parameters are declared");
    }
  }

  if (const json* v = top.get("noise")) {
    Reader r(*v, "noise");
    const std::string kind = r.string("kind", "inferred", {"inferred", "known"});
    if (kind == "known") {
      const json& s = r.require("sigma");
      std::vector<double> sigma = s.is_number() ? std::vector<double>{s.get<double>()} : Reader::numbers(s, "noise.sigma");
      for (double x : sigma) {
        if (!(x > 0.0)) Reader::fail("noise.sigma", "must be positive");
      }
      c.problem.noise = NoiseModel::known(std::move(sigma));
    } else {
      const Distribution prior = parse_distribution(r.require("prior"), "noise.prior");
      if (!prior.is_uniform() || prior.as_uniform().lo < 0.0) {
        Reader::fail("noise.prior", "must be a uniform law on a non-negative range");
      }
      c.problem.noise = NoiseModel::inferred(prior);
    }
    r.finish();
  }
  c.problem.scale_transform = parse_scale_transform(top.string("scale_transform", "logit", {"log", "logit"}));
  c.problem.graph.parameterization = top.string("parameterization", "centered", {"centered", "noncentered"}) == "centered"
                                         ? Parameterization::Centered
                                         : Parameterization::NonCentered;

  if (const json* v = top.get("surrogate")) {
    Reader r(*v, "surrogate");
    const std::string kind = r.string("kind", "none", {"none", "poly", "gp"});
    c.problem.surrogate.policy = kind == "poly" ? SurrogatePolicy::FitPoly
                                 : kind == "gp" ? SurrogatePolicy::FitGp
                                                : SurrogatePolicy::DirectForward;
    c.problem.surrogate.degree = r.count("degree", 2, 1);
    c.problem.surrogate.design_size = r.count("lhs", 100, 2);
    c.problem.graph.finite_difference_fallback = r.boolean("finite_difference_fallback", false);
    r.finish();
  }

  {
    auto& s = c.problem.sampler;
    if (const json* v = top.get("sampler")) {
      Reader r(*v, "sampler");
      s.chains = r.count("chains", 4, 1);
      c.kept_per_chain = r.count("draws", 1000, 1);
      s.burn_in = r.count("burn_in", 1000, 1);
      s.target_accept = r.number("target_accept", 0.8);
      s.max_tree_depth = r.count("max_tree_depth", 10, 1);
      s.adapt_mass_matrix = r.boolean("adapt_mass_matrix", true);
      s.parallel = r.boolean("parallel", true);
      r.finish();
    } else {
      s.chains = 4;
      s.burn_in = 1000;
    }
    s.draws = s.burn_in + c.kept_per_chain;
    s.seed = c.seed;
    try {
      s.validate();
    } catch (const ConfigError& e) {
      Reader::fail("sampler", e.what());
    }
  }

  if (const json* v = top.get("prior_extension")) {
    Reader r(*v, "prior_extension");
    c.extend_priors = r.boolean("enabled", true);
    c.extension.factor = r.number("factor", 1.5);
    c.extension.mass_fraction = r.number("mass_fraction", 0.02);
    c.extension.top_fraction = r.number("top_fraction", 0.05);
    c.extension.max_rounds = r.count("max_rounds", 5);
    r.finish();
    if (!(c.extension.factor > 1.0)) Reader::fail("prior_extension.factor", "must exceed 1");
    if (!(c.extension.top_fraction > 0.0 && c.extension.top_fraction < 1.0)) {
      Reader::fail("prior_extension.top_fraction", "must lie in (0, 1)");
    }
    if (!(c.extension.mass_fraction >= 0.0 && c.extension.mass_fraction < 1.0)) {
      Reader::fail("prior_extension.mass_fraction", "must lie in [0, 1)");
    }
  }
  if (const json* v = top.get("population")) {
    Reader r(*v, "population");
    c.population_draws = r.count("draws", 4000, 2);
    r.finish();
  }
  if (const json* v = top.get("ppc")) {
    Reader r(*v, "ppc");
    c.ppc.draws = r.count("draws", 1000, 1);
    c.ppc.include_noise = r.boolean("include_noise", true);
    r.finish();
  }
  if (const json* v = top.get("split_study")) {
    Reader r(*v, "split_study");
    c.splits = r.count("splits", 0);
    r.finish();
  }
  if (const json* v = top.get("sensitivity")) {
    Reader r(*v, "sensitivity");
    auto& s = c.sensitivity;
    if (const json* ctl = r.get("controls")) {
      if (!ctl->is_array()) Reader::fail("sensitivity.controls", "must be an array of control vectors");
      for (std::size_t i = 0; i < ctl->size(); ++i) {
        const std::string path = "sensitivity.controls[" + std::to_string(i) + "]";
        auto x = Reader::numbers((*ctl)[i], path);
        if (x.size() != c.forward.control_dim()) {
          Reader::fail(path, "the " + c.forward.model + " model takes " + std::to_string(c.forward.control_dim()) +
                                 " control values");
        }
        s.controls.push_back(std::move(x));
      }
    }
    s.screen_samples = r.count("screen_samples", 50, 2);
    s.threshold = r.number("threshold", 1e-3);
    s.sobol_n = r.count("sobol_n", 4096, 100);
    s.bootstrap = r.count("bootstrap", 200);
    if (const json* k = r.get("top_k"); k && !k->is_null()) s.top_k = Reader::as_count(*k, "sensitivity.top_k");
    r.finish();
    if (!(s.threshold >= 0.0)) Reader::fail("sensitivity.threshold", "must be non-negative");
  }
  top.finish();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  const json doc = io::read_json(path);
  return parse_config(doc, path.parent_path());
}

json resolved_config(const RunConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  if (c.data) {
    doc["data"] = c.data->is_relative() && !c.data->has_parent_path()
                      ? c.data->generic_string()
                      : std::filesystem::absolute(*c.data).lexically_normal().generic_string();
  }
  doc["hierarchical"] = c.hierarchical;
  json fwd = {{"model", c.forward.model}};
  if (c.forward.model == "additive") fwd["weights"] = c.forward.weights;
  if (c.forward.model == "product") fwd["inputs"] = c.forward.inputs;
  doc["forward"] = fwd;
  json params = json::array();
  for (const auto& p : c.problem.parameters) {
    json j = {{"name", p.name}, {"per_group", p.per_group}, {"prior", distribution_json(p.prior)}};
    if (p.per_group) {
      j["mean_prior"] = distribution_json(p.mean_prior);
      j["sd_prior"] = distribution_json(p.sd_prior);
    }
    if (p.range) j["range"] = {p.range->lo, p.range->hi};
    if (p.nominal) j["nominal"] = *p.nominal;
    params.push_back(std::move(j));
  }
  doc["parameters"] = params;
  if (const auto* inf = std::get_if<NoiseModel::Inferred>(&c.problem.noise.sigma)) {
    doc["noise"] = {{"kind", "inferred"}, {"prior", distribution_json(inf->prior)}};
  } else {
    doc["noise"] = {{"kind", "known"}, {"sigma", std::get<NoiseModel::Known>(c.problem.noise.sigma).sigma}};
  }
  doc["scale_transform"] = scale_transform_name(c.problem.scale_transform);
  doc["parameterization"] =
      c.problem.graph.parameterization == Parameterization::Centered ? "centered" : "noncentered";
  const auto& sur = c.problem.surrogate;
  doc["surrogate"] = {{"kind", sur.policy == SurrogatePolicy::FitPoly ? "poly"
                               : sur.policy == SurrogatePolicy::FitGp ? "gp"
                                                                      : "none"},
                      {"degree", sur.degree},
                      {"lhs", sur.design_size},
                      {"finite_difference_fallback", c.problem.graph.finite_difference_fallback}};
  const auto& s = c.problem.sampler;
  doc["sampler"] = {{"chains", s.chains},
                    {"draws", c.kept_per_chain},
                    {"burn_in", s.burn_in},
                    {"target_accept", s.target_accept},
                    {"max_tree_depth", s.max_tree_depth},
                    {"adapt_mass_matrix", s.adapt_mass_matrix},
                    {"parallel", s.parallel}};
  doc["prior_extension"] = {{"enabled", c.extend_priors},
                            {"factor", c.extension.factor},
                            {"mass_fraction", c.extension.mass_fraction},
                            {"top_fraction", c.extension.top_fraction},
                            {"max_rounds", c.extension.max_rounds}};
  doc["population"] = {{"draws", c.population_draws}};
  doc["ppc"] = {{"draws", c.ppc.draws}, {"include_noise", c.ppc.include_noise}};
  doc["split_study"] = {{"splits", c.splits}};
  const auto& sens = c.sensitivity;
  doc["sensitivity"] = {{"controls", sens.controls},
                        {"screen_samples", sens.screen_samples},
                        {"threshold", sens.threshold},
                        {"sobol_n", sens.sobol_n},
                        {"bootstrap", sens.bootstrap},
                        {"top_k", sens.top_k ? json(*sens.top_k) : json(nullptr)}};
  return doc;
}

void apply_seed_override(RunConfig& c) {
  const char* env = std::getenv("HBIUQ_SEED");
  if (!env || !*env) return;
  const std::string_view s(env);
  std::uint64_t seed = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("HBIUQ_SEED must be a non-negative integer (got '" + std::string(s) + "')");
  }
  c.seed = seed;
  c.problem.sampler.seed = seed;
}

RunConfig toy_config(std::uint64_t seed, std::size_t kept_per_chain, std::size_t chains, std::size_t burn_in) {
  RunConfig c;
  c.seed = seed;
  c.hierarchical = true;
  c.forward.model = "quadratic";
  NutsConfig s;
  s.chains = chains;
  s.burn_in = burn_in;
  s.draws = burn_in + kept_per_chain;
  s.seed = seed;
  s.validate();
  c.kept_per_chain = kept_per_chain;
  c.problem = toy_problem(s);
  return c;
}

}  // namespace hbiuq
