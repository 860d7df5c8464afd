#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "restoregrad/nets.hpp"
#include "restoregrad/priors.hpp"
#include "restoregrad/rng.hpp"
#include "restoregrad/schedule.hpp"

namespace restoregrad {

// eps_hat for a row-major [batch, length] state, one t_hat per row.
using EpsilonFn = std::function<std::vector<double>(
    std::span<const double> x_t, std::span<const double> y, std::span<const double> t_hat,
    std::size_t batch)>;

EpsilonFn estimator_fn(const NoiseEstimator& theta);

enum class PriorSource { kStandard, kHandcrafted, kLearned };

std::string to_string(PriorSource s);
PriorSource parse_prior_source(const std::string& s);

// Resolves the sampling prior of one conditioner. psi is needed for kLearned.
DiagGaussian resolve_prior(PriorSource source, std::span<const double> y, const PriorNet* psi,
                           const EnergyPriorConfig& energy = {});

// State x_s after each reverse step; the first row is the initial draw.
struct TrajectoryRow {
  std::size_t step = 0;  // s of x_s
  double t_hat = 0.0;    // timestep fed to the estimator to leave x_s (0 for x_0)
  std::vector<double> x;
};
using Trajectory = std::vector<TrajectoryRow>;

// CSV with header step,t_hat,x0,...,x{d-1}; one row per state.
void write_trajectory_csv(std::ostream& out, const Trajectory& trace);

/// Reverse process over `sched` for a batch of conditioners.
///
/// x_S = std * u; for s = S..1:
///   x <- (x - beta_s / sqrt(1 - abar_s) * eps_hat(x, y, t_hat_s)) / sqrt(alpha_s)
///   and, for s > 1, x <- x + sqrt(post_var_s) * std * u.
/// Row b draws every u from rngs[b], so a row's result does not depend on
/// the rest of the batch. prior_std and y are [batch, length]. Throws
/// SamplingError naming the step if the state becomes non-finite.
std::vector<double> reverse_sample_batch(const EpsilonFn& eps, std::span<const double> prior_std,
                                         std::span<const double> y, std::size_t batch,
                                         const InferenceSchedule& sched, std::vector<Rng>& rngs,
                                         Trajectory* trace = nullptr);

// Full-length sampling over the training schedule.
std::vector<double> reverse_sample(const NoiseEstimator& theta, const DiagGaussian& prior,
                                   std::span<const double> y, const NoiseSchedule& sched, Rng& rng,
                                   Trajectory* trace = nullptr);

// Sampling over a short aligned schedule.
std::vector<double> fast_reverse_sample(const NoiseEstimator& theta, const DiagGaussian& prior,
                                        std::span<const double> y, const InferenceSchedule& sched,
                                        Rng& rng, Trajectory* trace = nullptr);

}  // namespace restoregrad
