#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ctrlbench/net.hpp"

namespace ctrlbench {

// Welford single-pass mean/variance. Shared across workers; the harness
// serializes all updates and reads through its lock.
struct RunningStats {
  long long count = 0;
  Vec mean;
  Vec m2;  // sum of squared deviations

  explicit RunningStats(int dim = 1)
      : mean(Vec::Zero(dim)), m2(Vec::Zero(dim)) {}

  int dim() const { return static_cast<int>(mean.size()); }

  void update(const Vec& x) {
    if (x.size() != mean.size())
      throw std::invalid_argument("RunningStats::update: dimension mismatch");
    count += 1;
    Vec delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2.array() += delta.array() * (x - mean).array();
  }

  void update(double x) { update(Vec::Constant(1, x)); }

  Vec variance() const {
    return m2 / static_cast<double>(std::max<long long>(count - 1, 1));
  }

  Vec stddev() const { return variance().array().sqrt(); }
};

// (x - mean)/std clipped to [-10, 10]. With fewer than two observations the
// std is undefined and is guarded to 1; with none the input passes through
// (clipped).
inline Vec normalize_state(const RunningStats& st, const Vec& x) {
  if (st.count == 0) return x.cwiseMin(10.0).cwiseMax(-10.0);
  Vec sd = st.count > 1 ? Vec(st.stddev().cwiseMax(1e-8))
                        : Vec(Vec::Ones(st.dim()));
  Vec out = (x - st.mean).cwiseQuotient(sd);
  return out.cwiseMin(10.0).cwiseMax(-10.0);
}

// Scale-only reward normalization: r/std. The mean is not subtracted so the
// sign of rewards (and the optimal policy) is unchanged.
inline double normalize_reward(const RunningStats& st, double r) {
  double sd = st.count > 1 ? std::max(st.stddev()(0), 1e-8) : 1.0;
  return r / sd;
}

// Rank-based fitness shaping: each value is replaced by rank/(n-1) - 0.5
// with ascending ranks. Exactly tied values share their midrank, so equal
// fitness contributes equally (mirrored ES pairs cancel exactly).
inline std::vector<double> centered_ranks(const std::vector<double>& f) {
  const std::size_t n = f.size();
  if (n < 2)
    throw std::invalid_argument("centered_ranks: need at least 2 values");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&f](std::size_t a, std::size_t b) {
    if (f[a] != f[b]) return f[a] < f[b];
    return a < b;
  });
  std::vector<double> shaped(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && f[order[j + 1]] == f[order[i]]) ++j;
    double midrank = 0.5 * (static_cast<double>(i) + static_cast<double>(j));
    double value = midrank / static_cast<double>(n - 1) - 0.5;
    for (std::size_t k = i; k <= j; ++k) shaped[order[k]] = value;
    i = j + 1;
  }
  return shaped;
}

}  // namespace ctrlbench
