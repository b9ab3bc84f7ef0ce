#pragma once

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ctrlbench/util.hpp"

namespace ctrlbench {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Flat view of network weights; the unit every optimizer manipulates.
using FlatParams = Eigen::VectorXd;

// Two-hidden-layer tanh MLP with linear outputs.
struct MlpSpec {
  int in_dim = 1;
  int hidden = 16;
  int out_dim = 1;

  int flat_size() const {
    return hidden * in_dim + hidden + hidden * hidden + hidden +
           out_dim * hidden + out_dim;
  }

  bool operator==(const MlpSpec&) const = default;
};

struct MlpParams {
  MlpSpec spec;
  Mat w1, w2, w3;
  Vec b1, b2, b3;
};

inline MlpParams zero_mlp(const MlpSpec& s) {
  if (s.in_dim < 1 || s.hidden < 1 || s.out_dim < 1)
    throw std::invalid_argument("MlpSpec: dimensions must be >= 1");
  MlpParams p;
  p.spec = s;
  p.w1 = Mat::Zero(s.hidden, s.in_dim);
  p.b1 = Vec::Zero(s.hidden);
  p.w2 = Mat::Zero(s.hidden, s.hidden);
  p.b2 = Vec::Zero(s.hidden);
  p.w3 = Mat::Zero(s.out_dim, s.hidden);
  p.b3 = Vec::Zero(s.out_dim);
  return p;
}

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; biases zero.
inline MlpParams init_mlp(const MlpSpec& s, Rng& rng) {
  MlpParams p = zero_mlp(s);
  auto fill = [&rng](Mat& w) {
    double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        w(i, j) = uniform(rng, -bound, bound);
  };
  fill(p.w1);
  fill(p.w2);
  fill(p.w3);
  return p;
}

struct ForwardCache {
  Vec x;   // input
  Vec a1;  // tanh(w1 x + b1)
  Vec a2;  // tanh(w2 a1 + b2)
  Vec y;   // w3 a2 + b3
};

inline ForwardCache forward_cached(const MlpParams& p, const Vec& x) {
  if (x.size() != p.spec.in_dim)
    throw std::invalid_argument("forward: input size " +
                                std::to_string(x.size()) + " != in_dim " +
                                std::to_string(p.spec.in_dim));
  ForwardCache c;
  c.x = x;
  c.a1 = (p.w1 * x + p.b1).array().tanh();
  c.a2 = (p.w2 * c.a1 + p.b2).array().tanh();
  c.y = p.w3 * c.a2 + p.b3;
  return c;
}

inline Vec forward(const MlpParams& p, const Vec& x) {
  return forward_cached(p, x).y;
}

// Deterministic flattening order: w1, b1, w2, b2, w3, b3 (column-major
// within each matrix). flatten/unflatten is an exact bijection.
inline FlatParams flatten(const MlpParams& p) {
  FlatParams out(p.spec.flat_size());
  Eigen::Index at = 0;
  auto put = [&](const auto& block) {
    out.segment(at, block.size()) =
        Eigen::Map<const Vec>(block.data(), block.size());
    at += block.size();
  };
  put(p.w1);
  put(p.b1);
  put(p.w2);
  put(p.b2);
  put(p.w3);
  put(p.b3);
  return out;
}

inline MlpParams unflatten(const MlpSpec& s, const FlatParams& flat) {
  if (flat.size() != s.flat_size())
    throw std::invalid_argument("unflatten: flat length " +
                                std::to_string(flat.size()) + " != expected " +
                                std::to_string(s.flat_size()));
  MlpParams p = zero_mlp(s);
  Eigen::Index at = 0;
  auto take = [&](auto& block) {
    Eigen::Map<Vec>(block.data(), block.size()) =
        flat.segment(at, block.size());
    at += block.size();
  };
  take(p.w1);
  take(p.b1);
  take(p.w2);
  take(p.b2);
  take(p.w3);
  take(p.b3);
  return p;
}

struct BackwardResult {
  FlatParams param_grad;  // d(upstream . y)/d theta, flattened
  Vec input_grad;         // d(upstream . y)/d x
};

// Backprop of the scalar (upstream . y) through the cached forward pass.
inline BackwardResult backward(const MlpParams& p, const ForwardCache& c,
                               const Vec& upstream) {
  if (upstream.size() != p.spec.out_dim)
    throw std::invalid_argument("backward: upstream size mismatch");
  MlpParams g = zero_mlp(p.spec);
  const Vec& dz3 = upstream;  // linear output layer
  g.w3 = dz3 * c.a2.transpose();
  g.b3 = dz3;
  Vec dz2 =
      (p.w3.transpose() * dz3).cwiseProduct(Vec::Ones(c.a2.size()) - c.a2.cwiseProduct(c.a2));
  g.w2 = dz2 * c.a1.transpose();
  g.b2 = dz2;
  Vec dz1 =
      (p.w2.transpose() * dz2).cwiseProduct(Vec::Ones(c.a1.size()) - c.a1.cwiseProduct(c.a1));
  g.w1 = dz1 * c.x.transpose();
  g.b1 = dz1;
  return {flatten(g), p.w1.transpose() * dz1};
}

// Adam (with bias correction). This op minimizes; callers negate the
// gradient for ascent.
struct AdamState {
  Vec m, v;
  long long t = 0;
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(int n, double alpha_)
      : m(Vec::Zero(n)), v(Vec::Zero(n)), alpha(alpha_) {}
};

inline void adam_step(AdamState& st, FlatParams& params, const FlatParams& grad) {
  if (params.size() != grad.size() || params.size() != st.m.size())
    throw std::invalid_argument("adam_step: length mismatch");
  if (!grad.allFinite())
    throw std::runtime_error("adam_step: non-finite gradient");
  st.t += 1;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
  double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  params.array() -= st.alpha * (st.m.array() / bc1) /
                    ((st.v.array() / bc2).sqrt() + st.eps);
}

// Gaussian policy with identity covariance: pi(a|s) = N(mu(s), I).
// The covariance is never learned.
struct GaussianPolicy {
  MlpParams mean_net;
};

inline double gaussian_log_prob(const Vec& action, const Vec& mean) {
  if (action.size() != mean.size())
    throw std::invalid_argument("gaussian_log_prob: dimension mismatch");
  double d = static_cast<double>(action.size());
  return -0.5 * (action - mean).squaredNorm() -
         0.5 * d * std::log(2.0 * std::numbers::pi);
}

// d log pi / d mean
inline Vec gaussian_log_prob_grad_mean(const Vec& action, const Vec& mean) {
  return action - mean;
}

inline Vec deterministic_action(const GaussianPolicy& p, const Vec& s) {
  return forward(p.mean_net, s);
}

// mu(s) + z, z ~ N(0, I). Returned unclipped; envs clip at their boundary
// and the unclipped value is what log-prob is computed on.
inline Vec sample_action(const GaussianPolicy& p, const Vec& s, Rng& rng) {
  Vec a = forward(p.mean_net, s);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += gaussian(rng);
  return a;
}

}  // namespace ctrlbench
