#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "restoregrad/autodiff.hpp"
#include "restoregrad/rng.hpp"

namespace rgtest {

inline std::vector<double> randn(std::size_t n, std::uint64_t counter, double scale = 1.0) {
  restoregrad::Rng rng(12345, restoregrad::Stream::kTest, counter);
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline std::vector<double> uniform(std::size_t n, std::uint64_t counter, double lo, double hi) {
  restoregrad::Rng rng(54321, restoregrad::Stream::kTest, counter);
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_error(double a, double n, double floor = 1e-8) {
  const double scale = std::max(std::abs(a), std::abs(n));
  return scale < floor ? std::abs(a - n) : std::abs(a - n) / scale;
}

// Worst relative error between the tape gradient of f with respect to one
// input and central differences with step h.
using TapeFn = std::function<restoregrad::ad::Tensor(restoregrad::ad::Tape&,
                                                     const std::vector<restoregrad::ad::Tensor>&)>;

inline double vjp_error(const TapeFn& f, const std::vector<restoregrad::ad::Shape>& shapes,
                        std::vector<std::vector<double>> inputs, double h = 1e-5) {
  using namespace restoregrad::ad;
  auto eval = [&](const std::vector<std::vector<double>>& vals, Gradients* grads) {
    Tape tape;
    std::vector<Tensor> leaves;
    for (std::size_t i = 0; i < vals.size(); ++i)
      leaves.push_back(tape.variable("in" + std::to_string(i), shapes[i], vals[i]));
    Tensor out = f(tape, leaves);
    // Random projection turns any output into a scalar.
    const std::vector<double> proj = randn(out.size(), 999);
    Tensor loss = sum(mul(out, tape.constant(out.shape(), proj)));
    if (grads) *grads = tape.backward(loss);
    return loss.item();
  };
  Gradients grads;
  eval(inputs, &grads);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& g = grads.at("in" + std::to_string(i));
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double keep = inputs[i][j];
      inputs[i][j] = keep + h;
      const double fp = eval(inputs, nullptr);
      inputs[i][j] = keep - h;
      const double fm = eval(inputs, nullptr);
      inputs[i][j] = keep;
      worst = std::max(worst, rel_error(g[j], (fp - fm) / (2 * h), 1e-6));
    }
  }
  return worst;
}

}  // namespace rgtest
