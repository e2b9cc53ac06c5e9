#include <cmath>
#include <fstream>

#include "hbiuq/error.hpp"
#include "hbiuq/io.hpp"

namespace hbiuq::io {

namespace {

// Non-finite numbers become null; JSON has no spelling for them.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void write_json(const json& doc, const std::filesystem::path& path) { write_text(doc.dump(2) + "\n", path); }

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json to_json(const ChainStats& s) {
  return {{"mean_accept", number(s.mean_accept)},
          {"divergences", s.divergences},
          {"step_size", number(s.step_size)},
          {"max_depth_hits", s.max_depth_hits},
          {"mean_tree_depth", number(s.mean_tree_depth)},
          {"gradient_evaluations", s.gradient_evaluations}};
}

json to_json(const DiagnosticsReport& report) {
  json params = json::array();
  for (const auto& p : report.parameters) {
    params.push_back({{"name", p.name},
                      {"mean", number(p.mean)},
                      {"sd", number(p.sd)},
                      {"q2.5", number(p.q025)},
                      {"q5", number(p.q05)},
                      {"q25", number(p.q25)},
                      {"q50", number(p.q50)},
                      {"q75", number(p.q75)},
                      {"q95", number(p.q95)},
                      {"q97.5", number(p.q975)},
                      {"rhat", p.rhat ? number(*p.rhat) : json(nullptr)},
                      {"ess_bulk", number(p.ess_bulk)}});
  }
  return {{"chains", report.chains},
          {"draws_per_chain", report.draws_per_chain},
          {"acceptance_rate", number(report.acceptance_rate)},
          {"divergences", report.divergences},
          {"warnings", report.warnings},
          {"parameters", std::move(params)}};
}

json population_json(const PopulationPosterior& pop, const std::string& draws_file) {
  json families = json::object();
  for (std::size_t k = 0; k < pop.families.size(); ++k) {
    families[pop.families[k]] = {
        {"law", "normal"}, {"mean", number(pop.fitted[k].mean)}, {"sd", number(pop.fitted[k].sd)}};
  }
  json matrix = json::array();
  for (Eigen::Index i = 0; i < pop.correlation.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < pop.correlation.cols(); ++j) row.push_back(number(pop.correlation(i, j)));
    matrix.push_back(std::move(row));
  }
  return {{"families", std::move(families)},
          {"draws_file", draws_file},
          {"n", pop.draws.rows()},
          {"correlation", {{"names", pop.families}, {"matrix", std::move(matrix)}}}};
}

json ppc_json(const PpcReport& report) {
  return {{"draws", report.draws},
          {"records", report.records.size()},
          {"coverage_95", number(report.coverage)},
          {"mse_calibrated", number(report.mse_calibrated)},
          {"mae_calibrated", number(report.mae_calibrated)},
          {"mse_nominal", number(report.mse_nominal)},
          {"mae_nominal", number(report.mae_nominal)},
          {"flagged_records", report.flagged_records}};
}

json split_json(const SplitReport& report) {
  json splits = json::array();
  for (const auto& s : report.splits) {
    json dist = json::object();
    for (const auto& c : s.comparisons) dist[c.parameter] = number(c.normalized_distance);
    splits.push_back({{"first_half", s.first_half}, {"normalized_distance", std::move(dist)}});
  }
  return {{"hierarchical", report.hierarchical},
          {"max_distance", number(report.max_distance())},
          {"splits", std::move(splits)}};
}

}  // namespace hbiuq::io
