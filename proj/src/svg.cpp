#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "hbiuq/error.hpp"
#include "hbiuq/io.hpp"
#include "hbiuq/stats.hpp"

namespace hbiuq::io {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

// Axis frame mapping data coordinates onto the plot area.
class Frame {
 public:
  Frame(double x0, double x1, double y0, double y1) : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    if (!(x1_ > x0_)) x1_ = x0_ + 1.0;
    if (!(y1_ > y0_)) {
      y0_ -= 0.5;
      y1_ += 0.5;
    }
  }
  double x(double v) const { return kLeft + (v - x0_) / (x1_ - x0_) * (kWidth - kLeft - kRight); }
  double y(double v) const { return kHeight - kBottom - (v - y0_) / (y1_ - y0_) * (kHeight - kTop - kBottom); }

  void axes(std::ostringstream& os, const std::string& title, const std::string& xlabel,
            const std::string& ylabel, bool x_ticks = true) const {
    os << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << escape(title)
       << "</text>\n";
    os << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kHeight - kBottom) << "\" x2=\"" << fmt(kWidth - kRight)
       << "\" y2=\"" << fmt(kHeight - kBottom) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop) << "\" x2=\"" << fmt(kLeft) << "\" y2=\""
       << fmt(kHeight - kBottom) << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double yv = y0_ + (y1_ - y0_) * i / 4.0;
      os << "<text x=\"" << fmt(kLeft - 6) << "\" y=\"" << fmt(y(yv) + 4)
         << "\" text-anchor=\"end\" font-size=\"11\">" << tick_label(yv) << "</text>\n";
      if (x_ticks) {
        const double xv = x0_ + (x1_ - x0_) * i / 4.0;
        os << "<text x=\"" << fmt(x(xv)) << "\" y=\"" << fmt(kHeight - kBottom + 16)
           << "\" text-anchor=\"middle\" font-size=\"11\">" << tick_label(xv) << "</text>\n";
      }
    }
    os << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"" << fmt(kHeight - 10)
       << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(xlabel) << "</text>\n";
    os << "<text x=\"16\" y=\"" << fmt(kHeight / 2) << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
       << fmt(kHeight / 2) << ")\">" << escape(ylabel) << "</text>\n";
  }

 private:
  double x0_, x1_, y0_, y1_;
};

std::string open_svg() {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return os.str();
}

std::string bars(const std::vector<std::string>& names, const std::vector<std::vector<double>>& series,
                 const std::vector<std::string>& legend, const std::string& title, const std::string& ylabel) {
  double top = 0.0;
  for (const auto& s : series) {
    for (double v : s) {
      if (std::isfinite(v)) top = std::max(top, v);
    }
  }
  if (top <= 0.0) top = 1.0;
  const Frame f(0.0, static_cast<double>(std::max<std::size_t>(names.size(), 1)), 0.0, top * 1.05);
  std::ostringstream os;
  os << open_svg();
  f.axes(os, title, "parameter", ylabel, false);
  const double slot = f.x(1.0) - f.x(0.0);
  const double bw = slot * 0.8 / static_cast<double>(series.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = std::isfinite(series[s][i]) ? std::max(series[s][i], 0.0) : 0.0;
      const double x = f.x(static_cast<double>(i)) + slot * 0.1 + bw * static_cast<double>(s);
      os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(f.y(v)) << "\" width=\"" << fmt(bw) << "\" height=\""
         << fmt(f.y(0.0) - f.y(v)) << "\" fill=\"" << kPalette[s % 6] << "\"/>\n";
    }
    os << "<text x=\"" << fmt(f.x(i + 0.5)) << "\" y=\"" << fmt(kHeight - kBottom + 16)
       << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(names[i]) << "</text>\n";
  }
  for (std::size_t s = 0; s < legend.size(); ++s) {
    const double y = kTop + 14.0 * static_cast<double>(s);
    os << "<rect x=\"" << fmt(kWidth - kRight - 60) << "\" y=\"" << fmt(y - 9) << "\" width=\"10\" height=\"10\" fill=\""
       << kPalette[s % 6] << "\"/>\n";
    os << "<text x=\"" << fmt(kWidth - kRight - 45) << "\" y=\"" << fmt(y) << "\" font-size=\"11\">"
       << escape(legend[s]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace

std::string trace_svg(const ChainSet& chains, std::size_t param) {
  if (param >= chains.dim()) throw ConfigError("trace plot: parameter index out of range");
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& m : chains.draws) {
    lo = std::min(lo, m.col(static_cast<Eigen::Index>(param)).minCoeff());
    hi = std::max(hi, m.col(static_cast<Eigen::Index>(param)).maxCoeff());
  }
  const std::size_t n = chains.kept();
  const Frame f(0.0, static_cast<double>(n > 1 ? n - 1 : 1), lo, hi);
  std::ostringstream os;
  os << open_svg();
  f.axes(os, "trace: " + chains.names[param], "draw", chains.names[param]);
  // Thin long chains to at most 2000 vertices per polyline.
  const std::size_t stride = std::max<std::size_t>(1, n / 2000);
  for (std::size_t c = 0; c < chains.chains(); ++c) {
    const auto& m = chains.draws[c];
    os << "<polyline fill=\"none\" stroke-width=\"0.6\" stroke-opacity=\"0.8\" stroke=\"" << kPalette[c % 6]
       << "\" points=\"";
    for (std::size_t r = 0; r < n; r += stride) {
      if (r) os << ' ';
      os << fmt(f.x(static_cast<double>(r))) << ',' << fmt(f.y(m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(param))));
    }
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string density_svg(std::span<const double> draws, const std::string& name) {
  if (draws.size() < 2) throw ConfigError("density plot needs at least two draws");
  const double sd = stats::sd(draws);
  const double iqr = stats::quantile(draws, 0.75) - stats::quantile(draws, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd > 0.0 ? sd : 1.0;
  const double h = 0.9 * spread * std::pow(static_cast<double>(draws.size()), -0.2);
  const auto [mn, mx] = std::minmax_element(draws.begin(), draws.end());
  const double lo = *mn - 3.0 * h, hi = *mx + 3.0 * h;
  constexpr int kGrid = 200;
  std::vector<double> xs(kGrid), ys(kGrid);
  const double norm = 1.0 / (static_cast<double>(draws.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  for (int i = 0; i < kGrid; ++i) {
    xs[i] = lo + (hi - lo) * i / (kGrid - 1);
    double s = 0.0;
    for (double d : draws) {
      const double z = (xs[i] - d) / h;
      s += std::exp(-0.5 * z * z);
    }
    ys[i] = s * norm;
  }
  const Frame f(lo, hi, 0.0, *std::max_element(ys.begin(), ys.end()) * 1.05);
  std::ostringstream os;
  os << open_svg();
  f.axes(os, "posterior: " + name, name, "density");
  os << "<polyline fill=\"none\" stroke=\"" << kPalette[0] << "\" stroke-width=\"1.5\" points=\"";
  for (int i = 0; i < kGrid; ++i) {
    if (i) os << ' ';
    os << fmt(f.x(xs[i])) << ',' << fmt(f.y(ys[i]));
  }
  os << "\"/>\n</svg>\n";
  return os.str();
}

std::string sobol_bar_svg(const SobolResult& result, std::span<const std::size_t> order) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> series(2);
  for (std::size_t i : order) {
    names.push_back(result.names[i]);
    series[0].push_back(result.s1(static_cast<Eigen::Index>(i), 0));
    series[1].push_back(result.st(static_cast<Eigen::Index>(i), 0));
  }
  return bars(names, series, {"S1", "ST"}, "Sobol indices (output 1)", "index");
}

std::string screening_bar_svg(const ScreeningResult& result) {
  return bars(result.names, {result.variance}, {"variance"}, "one-at-a-time screening", "output variance");
}

}  // namespace hbiuq::io
