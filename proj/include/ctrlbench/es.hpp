#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctrlbench/net.hpp"
#include "ctrlbench/normalize.hpp"
#include "ctrlbench/util.hpp"

namespace ctrlbench {

// Evaluates a whole population at once so the harness can fan the work out
// to parallel workers and wait on the generation barrier.
using PopulationEval =
    std::function<std::vector<double>(const std::vector<FlatParams>&)>;

inline PopulationEval sequential_eval(
    const std::function<double(const FlatParams&)>& fitness_fn) {
  return [fitness_fn](const std::vector<FlatParams>& pop) {
    std::vector<double> f;
    f.reserve(pop.size());
    for (const auto& p : pop) f.push_back(fitness_fn(p));
    return f;
  };
}

struct NesConfig {
  double sigma = 0.1;  // perturbation scale
  double alpha = 0.1;  // step size
  int population = 50;
  bool mirrored = true;
};

struct NesReport {
  std::vector<FlatParams> population;
  std::vector<double> fitness;  // raw, before shaping
  int best_index = -1;
};

// One NES generation: draw eps_i ~ N(0, I) (mirrored: population/2 pairs
// +-eps), evaluate F_i = fitness(theta + sigma*eps_i), shape by centered
// ranks, and step
//   theta <- theta + alpha * 1/(n*sigma) * sum_i Fhat_i eps_i.
inline FlatParams nes_generation(const FlatParams& theta, const NesConfig& cfg,
                                 const PopulationEval& eval, Rng& rng,
                                 NesReport* report = nullptr) {
  if (cfg.sigma <= 0.0 || cfg.alpha <= 0.0)
    throw std::invalid_argument("nes_generation: sigma and alpha must be > 0");
  if (cfg.population < 2)
    throw std::invalid_argument("nes_generation: population must be >= 2");
  if (cfg.mirrored && cfg.population % 2 != 0)
    throw std::invalid_argument(
        "nes_generation: mirrored sampling needs an even population");

  const int n = cfg.population;
  const Eigen::Index d = theta.size();
  std::vector<Vec> eps;
  eps.reserve(n);
  if (cfg.mirrored) {
    for (int i = 0; i < n / 2; ++i) {
      Vec e(d);
      for (Eigen::Index j = 0; j < d; ++j) e(j) = gaussian(rng);
      eps.push_back(e);
      eps.push_back(-e);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      Vec e(d);
      for (Eigen::Index j = 0; j < d; ++j) e(j) = gaussian(rng);
      eps.push_back(e);
    }
  }

  std::vector<FlatParams> population;
  population.reserve(n);
  for (int i = 0; i < n; ++i) population.push_back(theta + cfg.sigma * eps[i]);

  std::vector<double> fitness = eval(population);
  if (static_cast<int>(fitness.size()) != n)
    throw std::runtime_error("nes_generation: evaluator returned wrong count");
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(fitness[i]))
      throw std::runtime_error("nes_generation: non-finite fitness for individual " +
                               std::to_string(i));

  std::vector<double> shaped = centered_ranks(fitness);
  Vec update = Vec::Zero(d);
  for (int i = 0; i < n; ++i) update += shaped[i] * eps[i];

  if (report) {
    report->population = population;
    report->fitness = fitness;
    report->best_index = 0;
    for (int i = 1; i < n; ++i)
      if (fitness[i] > fitness[report->best_index]) report->best_index = i;
  }
  return theta + cfg.alpha / (static_cast<double>(n) * cfg.sigma) * update;
}

// (mu_w, lambda)-CMA-ES over FlatParams, maximizing fitness. Strategy
// parameters are the standard tutorial defaults as functions of the
// dimension; the covariance eigendecomposition is recomputed every
// generation.
class Cmaes {
 public:
  Cmaes(const FlatParams& mean0, double sigma0, int lambda = 0)
      : dim_(static_cast<int>(mean0.size())), mean_(mean0), sigma_(sigma0) {
    if (dim_ < 1) throw std::invalid_argument("Cmaes: empty mean");
    if (sigma0 <= 0.0) throw std::invalid_argument("Cmaes: sigma0 must be > 0");
    double d = static_cast<double>(dim_);
    lambda_ = lambda > 0 ? lambda
                         : 4 + static_cast<int>(std::floor(3.0 * std::log(d)));
    if (lambda_ < 2) lambda_ = 2;
    mu_ = lambda_ / 2;
    weights_ = Vec(mu_);
    for (int i = 0; i < mu_; ++i)
      weights_(i) = std::log(mu_ + 0.5) - std::log(static_cast<double>(i + 1));
    weights_ /= weights_.sum();
    mu_eff_ = 1.0 / weights_.squaredNorm();

    c_sigma_ = (mu_eff_ + 2.0) / (d + mu_eff_ + 5.0);
    d_sigma_ = 1.0 +
               2.0 * std::max(0.0, std::sqrt((mu_eff_ - 1.0) / (d + 1.0)) - 1.0) +
               c_sigma_;
    c_c_ = (4.0 + mu_eff_ / d) / (d + 4.0 + 2.0 * mu_eff_ / d);
    c_1_ = 2.0 / ((d + 1.3) * (d + 1.3) + mu_eff_);
    c_mu_ = std::min(1.0 - c_1_, 2.0 * (mu_eff_ - 2.0 + 1.0 / mu_eff_) /
                                     ((d + 2.0) * (d + 2.0) + mu_eff_));
    chi_n_ = std::sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));

    p_sigma_ = Vec::Zero(dim_);
    p_c_ = Vec::Zero(dim_);
    cov_ = Mat::Identity(dim_, dim_);
    basis_ = Mat::Identity(dim_, dim_);
    scales_ = Vec::Ones(dim_);
    inv_sqrt_cov_ = Mat::Identity(dim_, dim_);
    decomposed_ = true;
  }

  int lambda() const { return lambda_; }
  int mu() const { return mu_; }
  const FlatParams& mean() const { return mean_; }
  double sigma() const { return sigma_; }
  const Mat& covariance() const { return cov_; }
  long long generation() const { return generation_; }
  long long eigenvalue_repairs() const { return repairs_; }

  // lambda samples from N(mean, sigma^2 C), via the eigendecomposition of C.
  std::vector<FlatParams> ask(Rng& rng) {
    decompose();
    std::vector<FlatParams> pop;
    pop.reserve(lambda_);
    for (int k = 0; k < lambda_; ++k) {
      Vec z(dim_);
      for (int i = 0; i < dim_; ++i) z(i) = gaussian(rng);
      pop.push_back(mean_ + sigma_ * (basis_ * scales_.cwiseProduct(z)));
    }
    return pop;
  }

  // Weighted recombination of the best mu candidates (higher fitness is
  // better), cumulative step-size adaptation, rank-one plus rank-mu
  // covariance update.
  void tell(const std::vector<FlatParams>& population,
            const std::vector<double>& fitness) {
    if (population.size() != fitness.size() ||
        static_cast<int>(population.size()) != lambda_)
      throw std::invalid_argument("Cmaes::tell: population/fitness mismatch");
    decompose();

    std::vector<int> order(lambda_);
    for (int i = 0; i < lambda_; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&fitness](int a, int b) {
      if (fitness[a] != fitness[b]) return fitness[a] > fitness[b];
      return a < b;
    });

    std::vector<Vec> ys(mu_);
    Vec y_w = Vec::Zero(dim_);
    for (int i = 0; i < mu_; ++i) {
      ys[i] = (population[order[i]] - mean_) / sigma_;
      y_w += weights_(i) * ys[i];
    }

    mean_ += sigma_ * y_w;
    generation_ += 1;

    p_sigma_ = (1.0 - c_sigma_) * p_sigma_ +
               std::sqrt(c_sigma_ * (2.0 - c_sigma_) * mu_eff_) *
                   (inv_sqrt_cov_ * y_w);
    double expected_decay =
        std::sqrt(1.0 - std::pow(1.0 - c_sigma_, 2.0 * generation_));
    bool h_sigma = p_sigma_.norm() / expected_decay / chi_n_ <
                   1.4 + 2.0 / (dim_ + 1.0);

    p_c_ = (1.0 - c_c_) * p_c_;
    if (h_sigma)
      p_c_ += std::sqrt(c_c_ * (2.0 - c_c_) * mu_eff_) * y_w;

    Mat rank_mu = Mat::Zero(dim_, dim_);
    for (int i = 0; i < mu_; ++i)
      rank_mu += weights_(i) * (ys[i] * ys[i].transpose());
    double delta_h = h_sigma ? 0.0 : c_c_ * (2.0 - c_c_);
    cov_ = (1.0 - c_1_ - c_mu_) * cov_ +
           c_1_ * (p_c_ * p_c_.transpose() + delta_h * cov_) + c_mu_ * rank_mu;
    cov_ = 0.5 * (cov_ + cov_.transpose().eval());

    sigma_ *= std::exp(c_sigma_ / d_sigma_ * (p_sigma_.norm() / chi_n_ - 1.0));
    decomposed_ = false;
  }

 private:
  void decompose() {
    if (decomposed_) return;
    Eigen::SelfAdjointEigenSolver<Mat> solver(cov_);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("Cmaes: eigendecomposition failed");
    Vec evals = solver.eigenvalues();
    bool repaired = false;
    for (int i = 0; i < dim_; ++i)
      if (evals(i) < kEigenFloor) {
        evals(i) = kEigenFloor;
        repaired = true;
      }
    if (repaired) {
      ++repairs_;
      std::fprintf(stderr,
                   "ctrlbench: cmaes covariance repaired by eigenvalue "
                   "flooring (generation %lld)\n",
                   generation_);
      cov_ = solver.eigenvectors() * evals.asDiagonal() *
             solver.eigenvectors().transpose();
    }
    basis_ = solver.eigenvectors();
    scales_ = evals.cwiseSqrt();
    inv_sqrt_cov_ =
        basis_ * scales_.cwiseInverse().asDiagonal() * basis_.transpose();
    decomposed_ = true;
  }

  static constexpr double kEigenFloor = 1e-14;

  int dim_;
  int lambda_ = 0;
  int mu_ = 0;
  Vec weights_;
  double mu_eff_ = 0.0;
  double c_sigma_ = 0.0, d_sigma_ = 0.0, c_c_ = 0.0, c_1_ = 0.0, c_mu_ = 0.0;
  double chi_n_ = 0.0;

  FlatParams mean_;
  double sigma_;
  Vec p_sigma_, p_c_;
  Mat cov_;
  long long generation_ = 0;
  long long repairs_ = 0;

  Mat basis_;          // eigenvectors of C
  Vec scales_;         // sqrt of eigenvalues
  Mat inv_sqrt_cov_;   // C^{-1/2}
  bool decomposed_ = false;
};

}  // namespace ctrlbench
