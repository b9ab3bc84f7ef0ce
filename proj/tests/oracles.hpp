#pragma once

// Test-only oracles, kept independent of the implementation paths they
// check: central finite differences and brute-force reference sums.

#include <functional>

#include "ctrlbench/net.hpp"

namespace oracles {

using ctrlbench::FlatParams;
using ctrlbench::Vec;

inline FlatParams finite_difference(
    const std::function<double(const FlatParams&)>& f, const FlatParams& at,
    double h = 1e-5) {
  FlatParams g(at.size());
  FlatParams x = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    double keep = x(i);
    x(i) = keep + h;
    double up = f(x);
    x(i) = keep - h;
    double down = f(x);
    x(i) = keep;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

// max coordinate error relative to max(1, ||fd||_inf)
inline double gradient_error(const FlatParams& analytic, const FlatParams& fd) {
  double scale = 1.0;
  if (fd.size() > 0) scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
  if (analytic.size() != fd.size()) return 1e300;
  if (analytic.size() == 0) return 0.0;
  return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

// O(T^2) double sum A_t = sum_k (gamma lambda)^k delta_{t+k}, with delta
// recomputed here from first principles.
inline Vec brute_force_gae(const Vec& rewards, const Vec& values,
                           const std::vector<unsigned char>& dones,
                           double gamma, double lambda) {
  const Eigen::Index T = rewards.size();
  Vec delta(T);
  for (Eigen::Index t = 0; t < T; ++t)
    delta(t) = rewards(t) + gamma * values(t + 1) * (dones[t] ? 0.0 : 1.0) -
               values(t);
  Vec adv(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    double sum = 0.0;
    for (Eigen::Index k = 0; t + k < T; ++k)
      sum += std::pow(gamma * lambda, static_cast<double>(k)) * delta(t + k);
    adv(t) = sum;
  }
  return adv;
}

}  // namespace oracles
