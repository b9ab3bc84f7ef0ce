#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctrlbench {

// One deterministic-evaluation measurement. env_steps and wall_ms are
// non-decreasing within a curve.
struct CurvePoint {
  long long env_steps = 0;
  long long wall_ms = 0;
  double eval_return = 0.0;
};

struct LearningCurve {
  std::string run_id;
  std::string algo;
  std::string env;
  int hidden = 0;
  std::vector<CurvePoint> points;
};

// Trailing moving average over eval_return; a shorter prefix averages what
// exists.
inline LearningCurve smooth(const LearningCurve& curve, int window) {
  if (window < 1) throw std::invalid_argument("smooth: window must be >= 1");
  LearningCurve out = curve;
  double acc = 0.0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    acc += curve.points[i].eval_return;
    if (i >= static_cast<std::size_t>(window))
      acc -= curve.points[i - window].eval_return;
    double n = static_cast<double>(std::min<std::size_t>(i + 1, window));
    out.points[i].eval_return = acc / n;
  }
  return out;
}

enum class CurveAxis { kEnvSteps, kWallMs };

inline const char* axis_name(CurveAxis a) {
  return a == CurveAxis::kEnvSteps ? "env_steps" : "wall_ms";
}

struct AggregateCurve {
  CurveAxis axis = CurveAxis::kEnvSteps;
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<double> stddev;
};

namespace detail {

inline double axis_value(const CurvePoint& p, CurveAxis axis) {
  return axis == CurveAxis::kEnvSteps ? static_cast<double>(p.env_steps)
                                      : static_cast<double>(p.wall_ms);
}

inline double interpolate_at(const std::vector<double>& xs,
                             const std::vector<double>& ys, double x) {
  // xs non-decreasing; x within [xs.front(), xs.back()]
  auto it = std::lower_bound(xs.begin(), xs.end(), x);
  if (it == xs.begin()) return ys.front();
  std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  if (hi >= xs.size()) return ys.back();
  std::size_t lo = hi - 1;
  if (xs[hi] == xs[lo]) return ys[hi];
  double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

}  // namespace detail

// Linear interpolation of K curves onto a common grid spanning
// [max of per-curve minima, min of per-curve maxima] on the chosen axis,
// then the pointwise mean and (population) standard deviation.
inline AggregateCurve interpolate_average(
    const std::vector<LearningCurve>& curves, CurveAxis axis, int grid_size) {
  if (curves.empty())
    throw std::invalid_argument("interpolate_average: no curves");
  if (grid_size < 2)
    throw std::invalid_argument("interpolate_average: grid_size must be >= 2");
  for (const auto& c : curves)
    if (c.points.size() < 2)
      throw std::invalid_argument(
          "interpolate_average: every curve needs at least 2 points (" +
          c.run_id + " has " + std::to_string(c.points.size()) + ")");

  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (const auto& c : curves) {
    lo = std::max(lo, detail::axis_value(c.points.front(), axis));
    hi = std::min(hi, detail::axis_value(c.points.back(), axis));
  }
  if (!(lo <= hi)) {
    std::ostringstream msg;
    msg << "interpolate_average: curves have no common " << axis_name(axis)
        << " range; per-curve ranges:";
    for (const auto& c : curves)
      msg << " " << c.run_id << "=[" << detail::axis_value(c.points.front(), axis)
          << ", " << detail::axis_value(c.points.back(), axis) << "]";
    throw std::runtime_error(msg.str());
  }

  AggregateCurve out;
  out.axis = axis;
  out.grid.resize(grid_size);
  out.mean.assign(grid_size, 0.0);
  out.stddev.assign(grid_size, 0.0);
  for (int i = 0; i < grid_size; ++i)
    out.grid[i] = lo + (hi - lo) * static_cast<double>(i) /
                           static_cast<double>(grid_size - 1);

  std::vector<std::vector<double>> interpolated;
  for (const auto& c : curves) {
    std::vector<double> xs, ys;
    xs.reserve(c.points.size());
    ys.reserve(c.points.size());
    for (const auto& p : c.points) {
      xs.push_back(detail::axis_value(p, axis));
      ys.push_back(p.eval_return);
    }
    std::vector<double> vals(grid_size);
    for (int i = 0; i < grid_size; ++i)
      vals[i] = detail::interpolate_at(xs, ys, out.grid[i]);
    interpolated.push_back(std::move(vals));
  }
  const double k = static_cast<double>(curves.size());
  for (int i = 0; i < grid_size; ++i) {
    double m = 0.0;
    for (const auto& vals : interpolated) m += vals[i];
    m /= k;
    double var = 0.0;
    for (const auto& vals : interpolated) var += (vals[i] - m) * (vals[i] - m);
    out.mean[i] = m;
    out.stddev[i] = std::sqrt(var / k);
  }
  return out;
}

}  // namespace ctrlbench
