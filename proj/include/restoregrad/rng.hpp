#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace restoregrad {

// Purpose tags for derived random streams. The numeric values are part of
// the reproducibility contract: changing one changes every run.
enum class Stream : std::uint64_t {
  kInit = 1,
  kPermutation = 2,
  kTrainNoise = 3,
  kTrainTime = 4,
  kDataTrain = 5,
  kDataTest = 6,
  kSampling = 7,
  kElbo = 8,
  kTest = 9,
};

// 64-bit key of the stream (seed, purpose, counter). Distinct triples map to
// distinct keys with overwhelming probability (splitmix64 finalizer chain).
std::uint64_t stream_key(std::uint64_t seed, Stream stream, std::uint64_t counter);

// Counter-addressed random stream: the state is fully determined by
// (seed, purpose, counter), so any draw can be replayed without history.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, Stream stream, std::uint64_t counter);

  double normal();
  double uniform();
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  void fill_normal(std::span<double> out);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace restoregrad
