#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctrlbench/curves.hpp"

namespace ctrlbench {

inline constexpr const char* kCurveCsvHeader =
    "run_id,algo,env,hidden,env_steps,wall_ms,eval_return";

namespace detail {

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace detail

inline std::string curve_to_csv(const LearningCurve& curve) {
  std::ostringstream os;
  os << kCurveCsvHeader << "\n";
  std::vector<CurvePoint> pts = curve.points;
  std::stable_sort(pts.begin(), pts.end(),
                   [](const CurvePoint& a, const CurvePoint& b) {
                     return a.env_steps < b.env_steps;
                   });
  for (const auto& p : pts)
    os << curve.run_id << ',' << curve.algo << ',' << curve.env << ','
       << curve.hidden << ',' << p.env_steps << ',' << p.wall_ms << ','
       << detail::format_g17(p.eval_return) << "\n";
  return os.str();
}

inline void write_curve_csv(const std::string& path,
                            const LearningCurve& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write curve file: " + path);
  out << curve_to_csv(curve);
}

inline LearningCurve curve_from_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(name + ": empty curve file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCurveCsvHeader)
    throw std::runtime_error(name + ": bad curve header '" + line +
                             "', expected '" + kCurveCsvHeader + "'");
  LearningCurve curve;
  bool first = true;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 7)
      throw std::runtime_error(name + ":" + std::to_string(lineno) +
                               ": expected 7 fields");
    if (first) {
      curve.run_id = fields[0];
      curve.algo = fields[1];
      curve.env = fields[2];
      curve.hidden = std::stoi(fields[3]);
      first = false;
    }
    CurvePoint p;
    p.env_steps = std::stoll(fields[4]);
    p.wall_ms = std::stoll(fields[5]);
    p.eval_return = std::stod(fields[6]);
    curve.points.push_back(p);
  }
  return curve;
}

inline LearningCurve read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open curve file: " + path);
  return curve_from_csv(in, path);
}

inline std::string aggregate_to_csv(const AggregateCurve& agg) {
  std::ostringstream os;
  os << "grid,mean,std\n";
  for (std::size_t i = 0; i < agg.grid.size(); ++i)
    os << detail::format_g17(agg.grid[i]) << ','
       << detail::format_g17(agg.mean[i]) << ','
       << detail::format_g17(agg.stddev[i]) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// SVG learning-curve rendering. Vector output with no dependencies; the
// wall-time axis is drawn in log scale, the env-steps axis linear. Small
// networks (hidden 16) are dashed, large ones solid.
// ---------------------------------------------------------------------------

struct SvgSeries {
  std::string label;
  int hidden = 64;
  AggregateCurve aggregate;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* series_color(std::size_t i) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
}

}  // namespace detail

inline std::string render_svg(const std::vector<SvgSeries>& series,
                              CurveAxis axis, const std::string& title) {
  if (series.empty()) throw std::invalid_argument("render_svg: no series");
  const double width = 880, height = 560;
  const double ml = 80, mr = 180, mt = 50, mb = 60;
  const double pw = width - ml - mr, ph = height - mt - mb;
  const bool log_x = axis == CurveAxis::kWallMs;

  auto xval = [&](double x) { return log_x ? std::log10(std::max(x, 1.0)) : x; };

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.aggregate.grid.size(); ++i) {
      double x = xval(s.aggregate.grid[i]);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, s.aggregate.mean[i] - s.aggregate.stddev[i]);
      ymax = std::max(ymax, s.aggregate.mean[i] + s.aggregate.stddev[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return ml + (xval(x) - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + (ymax - y) / (ymax - ymin) * ph; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
     << height << "\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << ml << "\" y=\"" << mt - 20
     << "\" font-family=\"sans-serif\" font-size=\"16\">"
     << detail::xml_escape(title) << "</text>\n";

  // axes
  os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
     << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";

  const int ticks = 6;
  for (int i = 0; i <= ticks; ++i) {
    double fx = xmin + (xmax - xmin) * i / ticks;
    double raw = log_x ? std::pow(10.0, fx) : fx;
    double x = ml + pw * i / ticks;
    os << "<line x1=\"" << x << "\" y1=\"" << mt + ph << "\" x2=\"" << x
       << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3g", raw);
    os << "<text x=\"" << x << "\" y=\"" << mt + ph + 20
       << "\" font-family=\"sans-serif\" font-size=\"11\" "
          "text-anchor=\"middle\">"
       << buf << "</text>\n";
    double fy = ymin + (ymax - ymin) * i / ticks;
    double y = py(fy);
    os << "<line x1=\"" << ml - 5 << "\" y1=\"" << y << "\" x2=\"" << ml
       << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
    std::snprintf(buf, sizeof buf, "%.4g", fy);
    os << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\" "
          "text-anchor=\"end\">"
       << buf << "</text>\n";
  }
  std::string xlabel = axis == CurveAxis::kWallMs
                           ? "wall time (ms, log scale)"
                           : "environment steps";
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 15
     << "\" font-family=\"sans-serif\" font-size=\"13\" "
        "text-anchor=\"middle\">"
     << xlabel << "</text>\n";
  os << "<text x=\"18\" y=\"" << mt + ph / 2
     << "\" font-family=\"sans-serif\" font-size=\"13\" "
        "transform=\"rotate(-90 18 "
     << mt + ph / 2 << ")\" text-anchor=\"middle\">average return</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& agg = series[k].aggregate;
    // std band
    std::ostringstream band;
    for (std::size_t i = 0; i < agg.grid.size(); ++i)
      band << px(agg.grid[i]) << "," << py(agg.mean[i] + agg.stddev[i]) << " ";
    for (std::size_t i = agg.grid.size(); i-- > 0;)
      band << px(agg.grid[i]) << "," << py(agg.mean[i] - agg.stddev[i]) << " ";
    os << "<polygon points=\"" << band.str() << "\" fill=\""
       << detail::series_color(k) << "\" fill-opacity=\"0.12\" "
       << "stroke=\"none\"/>\n";
    // mean line
    std::ostringstream pts;
    for (std::size_t i = 0; i < agg.grid.size(); ++i)
      pts << px(agg.grid[i]) << "," << py(agg.mean[i]) << " ";
    os << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\""
       << detail::series_color(k) << "\" stroke-width=\"1.8\"";
    if (series[k].hidden == 16) os << " stroke-dasharray=\"6,4\"";
    os << "/>\n";
    // legend
    double ly = mt + 18 * static_cast<double>(k);
    os << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly << "\" x2=\""
       << ml + pw + 40 << "\" y2=\"" << ly << "\" stroke=\""
       << detail::series_color(k) << "\" stroke-width=\"1.8\"";
    if (series[k].hidden == 16) os << " stroke-dasharray=\"6,4\"";
    os << "/>\n";
    os << "<text x=\"" << ml + pw + 46 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"12\">"
       << detail::xml_escape(series[k].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ctrlbench
