#include "restoregrad/adam.hpp"

#include <cmath>

#include "restoregrad/error.hpp"

namespace restoregrad {

void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               std::uint64_t step, const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw ShapeError("adam: gradient size differs from parameters");
  if (step == 0) throw Error("adam: step count starts at 1");
  if (moments.m.empty()) moments.m.assign(params.size(), 0.0);
  if (moments.v.empty()) moments.v.assign(params.size(), 0.0);
  if (moments.m.size() != params.size() || moments.v.size() != params.size())
    throw ShapeError("adam: moment size differs from parameters");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
    moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = moments.m[i] / c1;
    const double v_hat = moments.v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

AdamMoments& AdamState::moments(const std::string& key, std::size_t size) {
  AdamMoments& m = moments_[key];
  if (m.m.empty()) {
    m.m.assign(size, 0.0);
    m.v.assign(size, 0.0);
  }
  return m;
}

void adam_update(ParamStore& store, const std::string& prefix, const ad::Gradients& grads,
                 AdamState& state, std::uint64_t step, const AdamConfig& cfg) {
  for (ParamArray& a : store.arrays()) {
    const std::string key = prefix + "/" + a.name;
    const auto it = grads.find(key);
    if (it == grads.end()) continue;
    adam_step(a.values, it->second, state.moments(key, a.values.size()), step, cfg);
  }
}

void ema_update(ParamStore& shadow, const ParamStore& params, double decay) {
  auto& dst = shadow.arrays();
  const auto& src = params.arrays();
  if (dst.size() != src.size()) throw ShapeError("ema: store layouts differ");
  for (std::size_t k = 0; k < dst.size(); ++k) {
    if (dst[k].values.size() != src[k].values.size()) throw ShapeError("ema: array sizes differ");
    for (std::size_t i = 0; i < dst[k].values.size(); ++i)
      dst[k].values[i] = decay * dst[k].values[i] + (1.0 - decay) * src[k].values[i];
  }
}

}  // namespace restoregrad
