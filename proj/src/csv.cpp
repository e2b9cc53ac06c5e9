#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hbiuq/error.hpp"
#include "hbiuq/io.hpp"

namespace hbiuq::io {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

namespace {

bool needs_quotes(std::string_view s) { return s.find_first_of(",\"\r\n") != std::string_view::npos; }

void append_field(std::string& out, std::string_view s) {
  if (!needs_quotes(s)) {
    out.append(s);
    return;
  }
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

double parse_number(const std::string& s, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first < last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || first == last) {
    throw IoError("line " + std::to_string(line) + ": column '" + column + "' is not a number: '" + s + "'");
  }
  return v;
}

}  // namespace

CsvTable parse_csv(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A bare trailing line break does not make an empty record.
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) throw IoError("line " + std::to_string(line) + ": stray quote inside a field");
        quoted = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        ++line;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (quoted) throw IoError("unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  if (records.empty()) throw IoError("CSV has no header row");

  CsvTable t;
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      throw IoError("record " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                    " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_csv(ss.str());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto row = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out.push_back(',');
      append_field(out, fields[i]);
    }
    out.append("\r\n");
  };
  row(table.header);
  for (const auto& r : table.rows) row(r);
  return out;
}

void write_csv(const CsvTable& table, const std::filesystem::path& path) { write_text(to_csv(table), path); }

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

ObservationFile read_observations(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.empty() || t.header[0] != "group_id") {
    throw IoError(path.string() + ": first column must be group_id");
  }
  std::size_t k = 0, j = 0;
  std::size_t col = 1;
  while (col < t.header.size() && t.header[col] == "control_" + std::to_string(k + 1)) {
    ++k;
    ++col;
  }
  while (col < t.header.size() && t.header[col] == "observed_" + std::to_string(j + 1)) {
    ++j;
    ++col;
  }
  if (col != t.header.size()) {
    throw IoError(path.string() + ": unexpected column '" + t.header[col] +
                  "'; expected group_id,control_1..control_k,observed_1..observed_j");
  }
  if (j == 0) throw IoError(path.string() + ": no observed_ columns");
  if (t.rows.empty()) throw IoError(path.string() + ": no records");

  ObservationFile f{ObservationSet(k, j), {}};
  std::map<std::string, std::size_t> ids;
  std::vector<double> control(k), observed(j);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line = r + 2;
    if (row[0].empty()) throw IoError(path.string() + ": line " + std::to_string(line) + ": empty group_id");
    auto [it, inserted] = ids.try_emplace(row[0], f.group_labels.size());
    if (inserted) f.group_labels.push_back(row[0]);
    try {
      for (std::size_t c = 0; c < k; ++c) control[c] = parse_number(row[1 + c], line, t.header[1 + c]);
      for (std::size_t c = 0; c < j; ++c) {
        observed[c] = parse_number(row[1 + k + c], line, t.header[1 + k + c]);
        if (!std::isfinite(observed[c])) {
          throw IoError("line " + std::to_string(line) + ": observation is not finite");
        }
      }
    } catch (const IoError& e) {
      throw IoError(path.string() + ": " + e.what());
    }
    f.observations.add(it->second, control, observed);
  }
  return f;
}

CsvTable observations_table(const ObservationSet& obs, std::span<const std::string> labels) {
  CsvTable t;
  t.header.push_back("group_id");
  for (std::size_t c = 0; c < obs.control_dim(); ++c) t.header.push_back("control_" + std::to_string(c + 1));
  for (std::size_t c = 0; c < obs.output_dim(); ++c) t.header.push_back("observed_" + std::to_string(c + 1));
  for (std::size_t r = 0; r < obs.size(); ++r) {
    std::vector<std::string> row;
    const std::size_t g = obs.group(r);
    row.push_back(g < labels.size() ? labels[g] : std::to_string(g));
    for (double v : obs.control(r)) row.push_back(format_double(v));
    for (double v : obs.observed(r)) row.push_back(format_double(v));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable draws_table(const ChainSet& chains) {
  CsvTable t;
  t.header = {"chain", "draw"};
  t.header.insert(t.header.end(), chains.names.begin(), chains.names.end());
  for (std::size_t c = 0; c < chains.chains(); ++c) {
    const auto& m = chains.draws[c];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<std::string> row{std::to_string(c), std::to_string(r)};
      for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(format_double(m(r, k)));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

CsvTable population_draws_table(const PopulationPosterior& pop) {
  CsvTable t;
  t.header = {"draw"};
  t.header.insert(t.header.end(), pop.families.begin(), pop.families.end());
  for (Eigen::Index r = 0; r < pop.draws.rows(); ++r) {
    std::vector<std::string> row{std::to_string(r)};
    for (Eigen::Index k = 0; k < pop.draws.cols(); ++k) row.push_back(format_double(pop.draws(r, k)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable sobol_table(const SobolResult& result, std::span<const std::size_t> order) {
  CsvTable t;
  t.header = {"parameter", "output", "S1", "ST", "S1_se", "ST_se"};
  for (std::size_t i : order) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index k = 0; k < result.s1.cols(); ++k) {
      t.rows.push_back({result.names[i], std::to_string(k + 1), format_double(result.s1(r, k)),
                        format_double(result.st(r, k)), format_double(result.s1_se(r, k)),
                        format_double(result.st_se(r, k))});
    }
  }
  return t;
}

CsvTable screening_table(const ScreeningResult& result) {
  CsvTable t;
  t.header = {"parameter", "variance", "selected"};
  for (std::size_t i = 0; i < result.names.size(); ++i) {
    t.rows.push_back({result.names[i], format_double(result.variance[i]), result.selected[i] ? "true" : "false"});
  }
  return t;
}

CsvTable ppc_table(const PpcReport& report, std::span<const std::string> labels) {
  CsvTable t;
  t.header = {"record", "group_id", "output", "observed", "mean", "lower", "upper", "nominal", "failures"};
  for (const auto& r : report.records) {
    t.rows.push_back({std::to_string(r.record), r.group < labels.size() ? labels[r.group] : std::to_string(r.group),
                      std::to_string(r.output + 1), format_double(r.observed), format_double(r.mean),
                      format_double(r.lower), format_double(r.upper), format_double(r.nominal),
                      std::to_string(r.failures)});
  }
  return t;
}

}  // namespace hbiuq::io
