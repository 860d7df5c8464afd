#include "restoregrad/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "restoregrad/error.hpp"

namespace restoregrad {

EpsilonFn estimator_fn(const NoiseEstimator& theta) {
  return [&theta](std::span<const double> x_t, std::span<const double> y,
                  std::span<const double> t_hat, std::size_t batch) {
    return theta.evaluate(x_t, y, t_hat, batch);
  };
}

std::string to_string(PriorSource s) {
  switch (s) {
    case PriorSource::kStandard: return "standard";
    case PriorSource::kHandcrafted: return "handcrafted";
    case PriorSource::kLearned: return "learned";
  }
  return "unknown";
}

PriorSource parse_prior_source(const std::string& s) {
  if (s == "standard") return PriorSource::kStandard;
  if (s == "handcrafted") return PriorSource::kHandcrafted;
  if (s == "learned") return PriorSource::kLearned;
  throw ConfigError("prior source must be standard, handcrafted or learned, got '" + s + "'");
}

DiagGaussian resolve_prior(PriorSource source, std::span<const double> y, const PriorNet* psi,
                           const EnergyPriorConfig& energy) {
  switch (source) {
    case PriorSource::kStandard: return standard_prior(y.size());
    case PriorSource::kHandcrafted: return energy_prior(y, energy);
    case PriorSource::kLearned:
      if (!psi) throw Error("learned prior requested without a prior net");
      return encode_prior(*psi, y);
  }
  throw Error("unknown prior source");
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trace) {
  out << "step,t_hat";
  const std::size_t d = trace.empty() ? 0 : trace.front().x.size();
  for (std::size_t i = 0; i < d; ++i) out << ",x" << i;
  out << "\n";
  char buf[32];
  for (const TrajectoryRow& r : trace) {
    out << r.step;
    std::snprintf(buf, sizeof buf, ",%.9g", r.t_hat);
    out << buf;
    for (double v : r.x) {
      std::snprintf(buf, sizeof buf, ",%.9g", v);
      out << buf;
    }
    out << "\n";
  }
}

std::vector<double> reverse_sample_batch(const EpsilonFn& eps, std::span<const double> prior_std,
                                         std::span<const double> y, std::size_t batch,
                                         const InferenceSchedule& sched, std::vector<Rng>& rngs,
                                         Trajectory* trace) {
  if (batch == 0 || y.size() % batch != 0) throw ShapeError("sampler: bad batch shape");
  if (prior_std.size() != y.size()) throw ShapeError("sampler: prior dimension differs from y");
  if (rngs.size() != batch) throw ShapeError("sampler: need one random stream per row");
  if (sched.t_hat.size() != sched.steps()) throw ScheduleError("sampler: schedule has no alignment");
  const std::size_t d = y.size() / batch;
  const std::size_t S = sched.steps();
  const NoiseSchedule& ns = sched.schedule;

  std::vector<double> x(y.size()), u(d);
  for (std::size_t b = 0; b < batch; ++b) {
    rngs[b].fill_normal(u);
    for (std::size_t i = 0; i < d; ++i) x[b * d + i] = prior_std[b * d + i] * u[i];
  }
  auto record = [&](std::size_t s, double t_hat) {
    if (trace) trace->push_back({s, t_hat, {x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d)}});
  };
  record(S, sched.t_hat[S - 1]);

  std::vector<double> t_hat(batch);
  for (std::size_t s = S; s >= 1; --s) {
    std::fill(t_hat.begin(), t_hat.end(), sched.t_hat[s - 1]);
    const std::vector<double> e = eps(x, y, t_hat, batch);
    if (e.size() != x.size()) throw ShapeError("sampler: estimator output has the wrong length");
    const double c_eps = ns.beta(s) / std::sqrt(1.0 - ns.alpha_bar(s));
    const double c_x = 1.0 / std::sqrt(ns.alpha(s));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = c_x * (x[i] - c_eps * e[i]);
    if (s > 1) {
      const double sigma = std::sqrt(ns.post_var(s));
      for (std::size_t b = 0; b < batch; ++b) {
        rngs[b].fill_normal(u);
        for (std::size_t i = 0; i < d; ++i) x[b * d + i] += sigma * prior_std[b * d + i] * u[i];
      }
    }
    for (double v : x)
      if (!std::isfinite(v))
        throw SamplingError("sampler: non-finite state after reverse step " + std::to_string(s));
    record(s - 1, s > 1 ? sched.t_hat[s - 2] : 0.0);
  }
  return x;
}

std::vector<double> fast_reverse_sample(const NoiseEstimator& theta, const DiagGaussian& prior,
                                        std::span<const double> y, const InferenceSchedule& sched,
                                        Rng& rng, Trajectory* trace) {
  if (prior.dim() != y.size()) throw ShapeError("sampler: prior dimension differs from y");
  std::vector<Rng> rngs{rng};
  const std::vector<double> std = prior.stddev();
  auto out = reverse_sample_batch(estimator_fn(theta), std, y, 1, sched, rngs, trace);
  rng = rngs[0];
  return out;
}

std::vector<double> reverse_sample(const NoiseEstimator& theta, const DiagGaussian& prior,
                                   std::span<const double> y, const NoiseSchedule& sched, Rng& rng,
                                   Trajectory* trace) {
  return fast_reverse_sample(theta, prior, y, full_inference_schedule(sched), rng, trace);
}

}  // namespace restoregrad
