#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace restoregrad {

/// Per-timestep diffusion constants, precomputed once in 64-bit.
///
/// Vectors are stored 0-based; timestep t (1-based, as in the diffusion
/// literature) lives at index t-1. The accessors take the 1-based t.
/// The convention alpha_bar_0 = 1 makes post_var(1) exactly zero.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  std::vector<double> post_vars;  // (1 - abar_{t-1}) / (1 - abar_t) * beta_t
  std::vector<double> gammas;     // DM weighting of the full ELBO

  std::size_t steps() const { return betas.size(); }
  double beta(std::size_t t) const { return betas[t - 1]; }
  double alpha(std::size_t t) const { return alphas[t - 1]; }
  double alpha_bar(std::size_t t) const { return alpha_bars[t - 1]; }
  double alpha_bar_prev(std::size_t t) const { return t == 1 ? 1.0 : alpha_bars[t - 2]; }
  double post_var(std::size_t t) const { return post_vars[t - 1]; }
  double gamma(std::size_t t) const { return gammas[t - 1]; }
  double alpha_bar_final() const { return alpha_bars.back(); }
};

/// Builds every derived quantity from an explicit beta sequence.
/// Throws ScheduleError on an empty sequence or any beta outside (0, 1).
NoiseSchedule schedule_from_betas(std::vector<double> betas);

/// Linearly spaced betas from beta_min to beta_max inclusive.
NoiseSchedule linear_schedule(std::size_t steps, double beta_min, double beta_max);

/// A sampling schedule together with the continuous training timestep fed
/// to the noise estimator's time embedding at each sampling step.
struct InferenceSchedule {
  NoiseSchedule schedule;
  std::vector<double> t_hat;  // t_hat[s-1] for sampling step s

  std::size_t steps() const { return schedule.steps(); }
};

/// Aligns a short beta schedule to a training schedule: each sampling step's
/// sqrt(alpha_bar) is located between adjacent training sqrt(alpha_bar)
/// values and the timestep is interpolated linearly between them.
/// Throws ScheduleError if any alpha_bar falls outside the training range.
InferenceSchedule inference_schedule(const NoiseSchedule& train, std::vector<double> betas_infer);

/// The training schedule itself, t_hat = 1..T.
InferenceSchedule full_inference_schedule(const NoiseSchedule& train);

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
std::vector<double> forward_sample(std::span<const double> x0, std::span<const double> eps,
                                   std::size_t t, const NoiseSchedule& sched);

inline constexpr std::array<double, 6> kFastBetas6 = {1e-4, 1e-3, 0.01, 0.05, 0.2, 0.35};
inline constexpr std::array<double, 3> kFastBetas3 = {0.05, 0.2, 0.35};

}  // namespace restoregrad
