#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace restoregrad {

enum class NoiseKind { kWhite, kPink };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& s);

struct DatasetSpec {
  std::size_t d = 256;
  std::size_t n_train = 2048;
  std::size_t n_test = 256;
  std::vector<double> train_snrs = {0.0, 5.0, 10.0, 15.0};
  std::vector<double> test_snrs = {2.5, 7.5, 12.5, 17.5};
  NoiseKind noise_kind = NoiseKind::kWhite;
  std::uint64_t seed = 1;

  std::size_t size() const { return n_train + n_test; }
};

// Parameters the generator drew for one pair.
struct SignalMeta {
  std::vector<double> frequencies;  // cycles per sample
  std::vector<double> amplitudes;
  std::vector<double> phases;
  std::vector<double> knots;        // envelope level at each knot
  std::size_t knot_spacing = 0;
};

struct SignalPair {
  std::vector<double> x0;
  std::vector<double> y;
  double snr_db = 0.0;
  std::uint64_t seed = 0;  // stream key the pair was drawn from
  std::size_t index = 0;
  bool test = false;
  SignalMeta meta;
};

inline constexpr double kNoiselessSnr = std::numeric_limits<double>::infinity();

/// Pair `index` of the dataset: indices [0, n_train) form the training
/// split and [n_train, n_train + n_test) the test split, drawn from separate
/// random streams. SNRs cycle through the split's list by position.
SignalPair generate_pair(const DatasetSpec& spec, std::size_t index);

/// Same generator with an explicit SNR; kNoiselessSnr gives y == x0.
SignalPair generate_pair(const DatasetSpec& spec, std::size_t index, double snr_db);

// Stream keys of every pair; train and test keys never coincide.
std::vector<std::uint64_t> split_keys(const DatasetSpec& spec, bool test);

struct Dataset {
  DatasetSpec spec;
  std::vector<SignalPair> train;
  std::vector<SignalPair> test;
};

Dataset generate_dataset(const DatasetSpec& spec);

// 10 log10(|x|^2 / |n|^2).
double snr_db(std::span<const double> clean, std::span<const double> noise);

/// Scale-invariant SNR in dB (no mean removal), capped at kSiSnrCap.
/// Throws on a zero reference or length mismatch.
double si_snr(std::span<const double> estimate, std::span<const double> reference);
inline constexpr double kSiSnrCap = 100.0;

struct SsnrConfig {
  std::size_t seg_len = 32;
  double overlap = 0.75;
  double lo_db = -10.0;
  double hi_db = 35.0;
};

/// Mean segmental SNR. Segments of seg_len samples start every
/// round(seg_len * (1 - overlap)) samples while they fit; each segment's
/// 10 log10(|s|^2 / (|e|^2 + eps) + eps) is clipped to [lo_db, hi_db].
double ssnr(std::span<const double> estimate, std::span<const double> reference,
            const SsnrConfig& cfg = {});

double mse(std::span<const double> estimate, std::span<const double> reference);

// Centered moving average of |x| over `window` samples (truncated at edges).
std::vector<double> smoothed_envelope(std::span<const double> x, std::size_t window);

double pearson(std::span<const double> a, std::span<const double> b);

/// Dataset dump: a text header echoing the DatasetSpec fields, one "index snr_db" row per
/// pair, an "end" line, then for each pair x0 and y as little-endian
/// float32.
void write_dataset(std::ostream& out, const Dataset& ds);

}  // namespace restoregrad
