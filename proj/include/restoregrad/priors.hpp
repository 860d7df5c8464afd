#pragma once

#include <cstddef>
#include <span>

#include "restoregrad/nets.hpp"

namespace restoregrad {

// N(0, I) in d dimensions.
DiagGaussian standard_prior(std::size_t d);

struct EnergyPriorConfig {
  std::size_t frame_len = 32;
  std::size_t hop = 16;
  double floor = 0.1;
};

/// Handcrafted prior from the conditioner's level envelope.
///
/// Frame f covers samples [f*hop, f*hop + frame_len); frames start while
/// they fit entirely in y. Each frame's RMS is divided by the largest frame
/// RMS and clipped below at `floor`; sample i takes the std of the last
/// frame starting at or before i. An all-zero y gives unit variances.
DiagGaussian energy_prior(std::span<const double> y, const EnergyPriorConfig& cfg = {});

// Per-frame RMS of y with the framing above, before normalization.
std::vector<double> frame_rms(std::span<const double> y, std::size_t frame_len, std::size_t hop);

}  // namespace restoregrad
