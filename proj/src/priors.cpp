#include "restoregrad/priors.hpp"

#include <algorithm>
#include <cmath>

#include "restoregrad/error.hpp"

namespace restoregrad {

DiagGaussian standard_prior(std::size_t d) {
  if (d == 0) throw ShapeError("standard prior needs d >= 1");
  return DiagGaussian{std::vector<double>(d, 1.0)};
}

std::vector<double> frame_rms(std::span<const double> y, std::size_t frame_len, std::size_t hop) {
  if (hop == 0 || frame_len < hop) throw Error("energy prior needs frame_len >= hop >= 1");
  if (y.size() < frame_len) throw ShapeError("signal is shorter than one frame");
  const std::size_t frames = (y.size() - frame_len) / hop + 1;
  std::vector<double> rms(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double e = 0.0;
    for (std::size_t i = f * hop; i < f * hop + frame_len; ++i) e += y[i] * y[i];
    rms[f] = std::sqrt(e / static_cast<double>(frame_len));
  }
  return rms;
}

DiagGaussian energy_prior(std::span<const double> y, const EnergyPriorConfig& cfg) {
  if (!(cfg.floor > 0.0 && cfg.floor < 1.0)) throw Error("energy prior floor must lie in (0, 1)");
  const std::vector<double> rms = frame_rms(y, cfg.frame_len, cfg.hop);
  const double peak = *std::max_element(rms.begin(), rms.end());
  DiagGaussian g{std::vector<double>(y.size(), 1.0)};
  if (peak == 0.0) return g;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t f = std::min(i / cfg.hop, rms.size() - 1);
    const double s = std::max(rms[f] / peak, cfg.floor);
    g.variances[i] = s * s;
  }
  return g;
}

}  // namespace restoregrad
