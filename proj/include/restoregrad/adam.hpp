#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "restoregrad/autodiff.hpp"
#include "restoregrad/params.hpp"

namespace restoregrad {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moments of one parameter array.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update of a flat array; `step` is the 1-based
/// count of updates including this one.
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * (m / (1 - b1^step)) / (sqrt(v / (1 - b2^step)) + eps)
void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               std::uint64_t step, const AdamConfig& cfg);

// Adam state for a set of stores, keyed "<prefix>/<array name>".
class AdamState {
 public:
  AdamMoments& moments(const std::string& key, std::size_t size);
  const std::map<std::string, AdamMoments>& all() const { return moments_; }
  std::map<std::string, AdamMoments>& all() { return moments_; }

 private:
  std::map<std::string, AdamMoments> moments_;
};

// Applies adam_step to every array of `store` whose gradient is present
// under "<prefix>/<name>".
void adam_update(ParamStore& store, const std::string& prefix, const ad::Gradients& grads,
                 AdamState& state, std::uint64_t step, const AdamConfig& cfg);

// shadow <- decay * shadow + (1 - decay) * params, array by array.
void ema_update(ParamStore& shadow, const ParamStore& params, double decay);

}  // namespace restoregrad
