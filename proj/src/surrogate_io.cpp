#include <fstream>
#include <nlohmann/json.hpp>

#include "hbiuq/error.hpp"
#include "hbiuq/surrogate.hpp"

namespace hbiuq {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != cols) throw IoError("ragged matrix in surrogate file");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

}  // namespace

void save_surrogate(const SurrogateTable& table, const std::filesystem::path& path) {
  json doc;
  doc["format"] = "hbiuq-surrogate";
  doc["version"] = kFormatVersion;
  doc["controls"] = table.controls;
  doc["outputs_per_control"] = table.outputs_per_control;
  doc["design_points"] = table.design.rows();
  doc["design"] = matrix_to_json(table.design);
  if (const auto* poly = std::get_if<PolySurrogate>(&table.surrogate)) {
    doc["kind"] = "poly";
    doc["degree"] = poly->degree();
    json scaling = json::array();
    for (const auto& b : poly->scaling()) scaling.push_back({b.lo, b.hi});
    doc["scaling"] = scaling;
    json basis = json::array();
    for (const auto& m : poly->basis()) basis.push_back(m);
    doc["basis"] = basis;
    doc["weights"] = matrix_to_json(poly->weights());
  } else {
    const auto& gp = std::get<GpSurrogate>(table.surrogate);
    doc["kind"] = "gp";
    doc["train_x"] = matrix_to_json(gp.train_x());
    doc["train_y"] = matrix_to_json(gp.train_y());
    json outs = json::array();
    for (const auto& o : gp.outputs()) {
      outs.push_back({{"signal_variance", o.kernel.signal_variance},
                      {"length_scales", o.kernel.length_scales},
                      {"jitter", o.kernel.jitter},
                      {"prior_mean", o.prior_mean},
                      {"log_marginal_likelihood", o.log_marginal_likelihood}});
    }
    doc["outputs"] = outs;
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write surrogate file " + path.string());
  f << doc.dump(2) << '\n';
  if (!f) throw IoError("failed writing surrogate file " + path.string());
}

SurrogateTable load_surrogate(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read surrogate file " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw IoError("surrogate file " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (doc.at("format") != "hbiuq-surrogate") throw IoError("not a surrogate document");
    if (doc.at("version").get<int>() > kFormatVersion) {
      throw IoError("surrogate format version " + doc.at("version").dump() + " is newer than supported");
    }
    SurrogateTable table{doc.at("controls").get<std::vector<std::vector<double>>>(),
                         doc.at("outputs_per_control").get<std::size_t>(),
                         PolySurrogate(0, {Bounds{0.0, 1.0}}, Eigen::MatrixXd::Zero(1, 1)),
                         matrix_from_json(doc.at("design"))};
    const std::string kind = doc.at("kind");
    if (kind == "poly") {
      std::vector<Bounds> scaling;
      for (const auto& b : doc.at("scaling")) scaling.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
      table.surrogate = PolySurrogate(doc.at("degree").get<std::size_t>(), std::move(scaling),
                                      matrix_from_json(doc.at("weights")));
    } else if (kind == "gp") {
      Eigen::MatrixXd x = matrix_from_json(doc.at("train_x"));
      Eigen::MatrixXd y = matrix_from_json(doc.at("train_y"));
      // Refit with the stored hyperparameters: recompute the factorization.
      std::vector<GpSurrogate::Output> outs;
      const auto& jouts = doc.at("outputs");
      if (static_cast<Eigen::Index>(jouts.size()) != y.cols()) throw IoError("GP output count mismatch");
      for (std::size_t k = 0; k < jouts.size(); ++k) {
        SeKernel kern{jouts[k].at("signal_variance").get<double>(),
                      jouts[k].at("length_scales").get<std::vector<double>>(),
                      jouts[k].at("jitter").get<double>()};
        GpOptions opt;
        opt.init = kern;
        opt.optimize = false;
        opt.min_relative_jitter = kern.jitter / kern.signal_variance;
        opt.max_relative_jitter = opt.min_relative_jitter;
        Eigen::MatrixXd yk = y.col(static_cast<Eigen::Index>(k));
        auto single = fit_gp(x, yk, opt);
        outs.push_back(single.outputs().front());
      }
      table.surrogate = GpSurrogate(std::move(x), std::move(y), std::move(outs));
    } else {
      throw IoError("unknown surrogate kind '" + kind + "'");
    }
    return table;
  } catch (const json::exception& e) {
    throw IoError("malformed surrogate file " + path.string() + ": " + e.what());
  }
}

}  // namespace hbiuq
