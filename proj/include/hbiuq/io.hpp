#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hbiuq/engine.hpp"
#include "hbiuq/sampler.hpp"
#include "hbiuq/sensitivity.hpp"

namespace hbiuq::io {

using nlohmann::json;

// CSV --------------------------------------------------------------------------

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// RFC 4180 table: header row plus records of equal width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);
std::string to_csv(const CsvTable& table);
void write_csv(const CsvTable& table, const std::filesystem::path& path);

struct ObservationFile {
  ObservationSet observations;
  /// Original group_id labels, indexed by the dense group number.
  std::vector<std::string> group_labels;
};

/// Columns group_id, control_1..control_k, observed_1..observed_j. Group
/// labels are numbered in order of first appearance.
ObservationFile read_observations(const std::filesystem::path& path);
CsvTable observations_table(const ObservationSet& obs, std::span<const std::string> labels = {});

/// chain, draw, then one column per coordinate.
CsvTable draws_table(const ChainSet& chains);
CsvTable population_draws_table(const PopulationPosterior& pop);
/// parameter, output, S1, ST, S1_se, ST_se.
CsvTable sobol_table(const SobolResult& result, std::span<const std::size_t> order);
CsvTable screening_table(const ScreeningResult& result);
CsvTable ppc_table(const PpcReport& report, std::span<const std::string> labels = {});

// JSON -------------------------------------------------------------------------

/// Two-space indented, trailing newline.
void write_json(const json& doc, const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);

json to_json(const DiagnosticsReport& report);
json to_json(const ChainStats& stats);
json population_json(const PopulationPosterior& pop, const std::string& draws_file);
json ppc_json(const PpcReport& report);
json split_json(const SplitReport& report);

// SVG --------------------------------------------------------------------------

/// Draw index against value, one polyline per chain.
std::string trace_svg(const ChainSet& chains, std::size_t param);
/// Gaussian kernel density of the pooled draws (Silverman bandwidth).
std::string density_svg(std::span<const double> draws, const std::string& name);
/// Grouped S1/ST bars for the first output, in the given order.
std::string sobol_bar_svg(const SobolResult& result, std::span<const std::size_t> order);
std::string screening_bar_svg(const ScreeningResult& result);

void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace hbiuq::io
