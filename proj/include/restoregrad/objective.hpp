#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "restoregrad/autodiff.hpp"
#include "restoregrad/nets.hpp"
#include "restoregrad/params.hpp"
#include "restoregrad/rng.hpp"
#include "restoregrad/schedule.hpp"

namespace restoregrad {

// Batch means of the three loss terms and their weighted total.
struct LossBreakdown {
  double lr = 0.0;
  double dm = 0.0;
  double pm = 0.0;
  double total = 0.0;
  double eta = 0.0;
  double lambda = 0.0;
};

// eta * lr + dm + lambda * pm.
LossBreakdown combine_terms(double lr, double dm, double pm, double eta, double lambda);

// ---- value-level terms (single signal) ----

// sum_i x_i^2 / v_i.
double weighted_norm(std::span<const double> x, std::span<const double> variances);
// abar_T * ||x0||^2_{post^-1} + log|post|.
double lr_loss(std::span<const double> x0, const DiagGaussian& post, double alpha_bar_T);
// ||eps - eps_hat||^2_{post^-1}.
double dm_loss(std::span<const double> eps, std::span<const double> eps_hat, const DiagGaussian& post);
// log(|prior| / |post|) + tr(prior^-1 post); equals d at prior == post.
double pm_loss(const DiagGaussian& post, const DiagGaussian& prior);
// KL(post || prior) = (pm_loss - d) / 2.
double gaussian_kl(const DiagGaussian& post, const DiagGaussian& prior);

// ---- tape-level terms, summed over every element of the batch ----

ad::Tensor weighted_norm(const ad::Tensor& x, const ad::Tensor& variances);
ad::Tensor lr_loss(const ad::Tensor& x0, const ad::Tensor& post_var, double alpha_bar_T);
ad::Tensor dm_loss(const ad::Tensor& eps, const ad::Tensor& eps_hat, const ad::Tensor& post_var);
ad::Tensor pm_loss(const ad::Tensor& post_var, const ad::Tensor& prior_var);

// A batch of clean/degraded pairs, row-major [batch, length].
struct Batch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<double> x0;
  std::vector<double> y;
};

// Random inputs of one loss evaluation: a timestep per row and standard
// normal noise u of the batch shape. eps = std * u.
struct LossDraws {
  std::vector<std::size_t> t;
  std::vector<double> u;
};

LossDraws draw_loss_inputs(std::size_t batch, std::size_t length, std::size_t steps, Rng& rng);

// Scalar loss nodes of one evaluation plus their values.
struct LossGraph {
  ad::Tensor total;
  ad::Tensor lr;
  ad::Tensor dm;
  ad::Tensor pm;
  LossBreakdown values;
};

struct Networks {
  const NoiseEstimator* theta = nullptr;
  const PriorNet* psi = nullptr;
  const PosteriorNet* phi = nullptr;
};

// Binds each present network on the tape (trainable or frozen) under its prefix.
struct BoundNetworks {
  BoundNetworks(ad::Tape& tape, const Networks& nets, bool trainable);
  Networks nets;
  std::optional<ParamBinding> theta, psi, phi;
};

// Joint objective: eps ~ N(0, Sigma_post), LR and DM weighted by Sigma_post^-1,
// PM pulling Sigma_prior toward Sigma_post.
LossGraph simplified_loss(BoundNetworks& nets, const Batch& batch, const NoiseSchedule& sched,
                          double eta, double lambda, const LossDraws& draws);
LossGraph simplified_loss(BoundNetworks& nets, const Batch& batch, const NoiseSchedule& sched,
                          double eta, double lambda, Rng& rng);

// Posterior Net removed: eps ~ N(0, Sigma_prior), norms weighted by
// Sigma_prior^-1, pm = 0.
LossGraph no_posterior_loss(BoundNetworks& nets, const Batch& batch, const NoiseSchedule& sched,
                            double eta, const LossDraws& draws);

// Conditional DDPM baseline: eps ~ N(0, I), loss ||eps - eps_hat||^2.
LossGraph standard_prior_loss(BoundNetworks& nets, const Batch& batch, const NoiseSchedule& sched,
                              const LossDraws& draws);

// Fixed data-dependent prior: eps ~ N(0, diag(prior_std^2)), DM weighted by
// its inverse. prior_std is [batch, length].
LossGraph fixed_prior_loss(BoundNetworks& nets, const Batch& batch, const NoiseSchedule& sched,
                           std::span<const double> prior_std, const LossDraws& draws);

/// Full modified ELBO for one pair (lower is better), with the
/// parameter-free remainder that has no closed form dropped.
///
///   lt        = abar_T/2 ||x0||^2_{post^-1} - d/2 (abar_T + log(1 - abar_T))
///   log_det   = 1/2 log|post|
///   dm_sum    = sum_t gamma_t E||eps - eps_theta(x_t, y, t)||^2_{post^-1}
///   pm_half   = 1/2 (log(|prior|/|post|) + tr(prior^-1 post))
///   l0_const  = d/2 log(2 pi beta_1)
struct ElboBreakdown {
  double lt = 0.0;
  double log_det = 0.0;
  double dm_sum = 0.0;
  double pm_half = 0.0;
  double l0_const = 0.0;
  double total = 0.0;
};

double elbo_lt_term(std::span<const double> x0, const DiagGaussian& post, const NoiseSchedule& sched);

// Assembles the breakdown from precomputed per-timestep DM norms
// (dm_per_t[t-1] = mean over draws of ||eps - eps_hat_t||^2_{post^-1}).
ElboBreakdown assemble_elbo(std::span<const double> x0, const DiagGaussian& post,
                            const DiagGaussian& prior, std::span<const double> dm_per_t,
                            const NoiseSchedule& sched);

// Monte-Carlo estimate over n_mc posterior draws; each draw evaluates all T
// timesteps with the same eps.
ElboBreakdown exact_elbo(const NoiseEstimator& theta, const PosteriorNet& phi, const PriorNet& psi,
                         std::span<const double> x0, std::span<const double> y,
                         const NoiseSchedule& sched, std::size_t n_mc, Rng& rng);

}  // namespace restoregrad
