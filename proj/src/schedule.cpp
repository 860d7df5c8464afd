#include "restoregrad/schedule.hpp"

#include <cmath>
#include <string>

#include "restoregrad/error.hpp"

namespace restoregrad {

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ScheduleError("schedule needs at least one step");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const double b = betas[i];
    if (!std::isfinite(b) || b <= 0.0 || b >= 1.0)
      throw ScheduleError("beta[" + std::to_string(i + 1) + "] = " + std::to_string(b) +
                          " is outside (0, 1)");
  }
  const std::size_t steps = betas.size();
  NoiseSchedule s;
  s.betas = std::move(betas);
  s.alphas.resize(steps);
  s.alpha_bars.resize(steps);
  s.post_vars.resize(steps);
  s.gammas.resize(steps);

  double abar = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double beta = s.betas[i];
    const double alpha = 1.0 - beta;
    const double abar_prev = abar;
    abar *= alpha;
    s.alphas[i] = alpha;
    s.alpha_bars[i] = abar;
    s.post_vars[i] = (1.0 - abar_prev) / (1.0 - abar) * beta;
    if (i == 0) {
      s.gammas[i] = 1.0 / (2.0 * alpha);
    } else {
      s.gammas[i] = beta * beta / (2.0 * s.post_vars[i] * alpha * (1.0 - abar));
    }
  }
  return s;
}

NoiseSchedule linear_schedule(std::size_t steps, double beta_min, double beta_max) {
  if (steps == 0) throw ScheduleError("schedule needs at least one step");
  if (!std::isfinite(beta_min) || !std::isfinite(beta_max) || beta_min <= 0.0 ||
      beta_max >= 1.0 || beta_min > beta_max)
    throw ScheduleError("need 0 < beta_min <= beta_max < 1");
  std::vector<double> betas(steps);
  if (steps == 1) {
    betas[0] = beta_min;
  } else {
    const double step = (beta_max - beta_min) / static_cast<double>(steps - 1);
    for (std::size_t i = 0; i < steps; ++i) betas[i] = beta_min + step * static_cast<double>(i);
    betas.back() = beta_max;
  }
  return schedule_from_betas(std::move(betas));
}

InferenceSchedule inference_schedule(const NoiseSchedule& train, std::vector<double> betas_infer) {
  if (betas_infer.size() > train.steps())
    throw ScheduleError("inference schedule is longer than the training schedule");
  InferenceSchedule out{schedule_from_betas(std::move(betas_infer)), {}};
  const std::size_t T = train.steps();
  out.t_hat.reserve(out.steps());
  for (std::size_t s = 1; s <= out.steps(); ++s) {
    const double abar = out.schedule.alpha_bar(s);
    bool found = false;
    double t_hat = 0.0;
    if (abar == train.alpha_bar(1)) {
      t_hat = 1.0;
      found = true;
    }
    for (std::size_t t = 1; !found && t < T; ++t) {
      const double hi = train.alpha_bar(t);
      const double lo = train.alpha_bar(t + 1);
      if (lo <= abar && abar <= hi) {
        const double r_hi = std::sqrt(hi);
        const double frac = (r_hi - std::sqrt(abar)) / (r_hi - std::sqrt(lo));
        t_hat = static_cast<double>(t) + frac;
        found = true;
      }
    }
    if (!found)
      throw ScheduleError("inference step " + std::to_string(s) + " has alpha_bar " +
                          std::to_string(abar) + " outside the training range [" +
                          std::to_string(train.alpha_bar_final()) + ", " +
                          std::to_string(train.alpha_bar(1)) + "]");
    out.t_hat.push_back(t_hat);
  }
  return out;
}

InferenceSchedule full_inference_schedule(const NoiseSchedule& train) {
  InferenceSchedule out{train, {}};
  for (std::size_t t = 1; t <= train.steps(); ++t) out.t_hat.push_back(static_cast<double>(t));
  return out;
}

std::vector<double> forward_sample(std::span<const double> x0, std::span<const double> eps,
                                   std::size_t t, const NoiseSchedule& sched) {
  if (x0.size() != eps.size()) throw ShapeError("forward_sample: x0 and eps lengths differ");
  if (t < 1 || t > sched.steps()) throw ScheduleError("forward_sample: timestep out of range");
  const double a = std::sqrt(sched.alpha_bar(t));
  const double b = std::sqrt(1.0 - sched.alpha_bar(t));
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

}  // namespace restoregrad
