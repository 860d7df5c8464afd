#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "restoregrad/autodiff.hpp"
#include "restoregrad/params.hpp"

namespace restoregrad {

// Builds a scalar loss on `tape`. Stores must be bound through ParamBinding
// with the prefixes given to finite_diff_check and with `trainable` passed on.
using StoreLoss = std::function<ad::Tensor(ad::Tape& tape, bool trainable)>;

struct FdOptions {
  double step = 1e-4;
  // Arrays larger than this are checked on a random subset of coordinates.
  std::size_t max_coords_per_array = 12;
  std::uint64_t seed = 1;
  // Below this gradient magnitude the absolute error is reported instead.
  double abs_floor = 1e-8;
};

struct FdReport {
  std::string name;
  double max_error = 0.0;
  std::string worst;  // "<prefix>/<array>[<index>]"
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients with central differences
/// (f(p + h) - f(p - h)) / 2h. The error of a coordinate is
/// |a - n| / max(|a|, |n|), or |a - n| when both are below abs_floor.
/// Throws if two evaluations at the same point differ.
FdReport finite_diff_check(const std::vector<std::pair<std::string, ParamStore*>>& stores,
                           const StoreLoss& loss, const FdOptions& opts = {});

/// Every loss of the objective module on a small random instance with
/// randomized parameters (including the estimator head): the latent
/// regularization, denoising and prior matching terms, the joint total and
/// the no-posterior ablation total.
std::vector<FdReport> run_gradcheck_suite(std::size_t d, std::size_t T, std::uint64_t seed = 1,
                                          const FdOptions& opts = {});

}  // namespace restoregrad
