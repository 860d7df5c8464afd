#include "restoregrad/signals.hpp"

#include <algorithm>
#include <bit>
#include <cfloat>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <ostream>

#include "restoregrad/error.hpp"
#include "restoregrad/rng.hpp"

namespace restoregrad {

namespace {

constexpr std::size_t kKnotSpacing = 32;
constexpr double kSilentProbability = 0.35;

void require_equal(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": length mismatch");
}

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

// Envelope through the knots with raised-cosine interpolation between them.
std::vector<double> envelope(const std::vector<double>& knots, std::size_t spacing, std::size_t d) {
  std::vector<double> env(d);
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t k = i / spacing;
    const double frac = static_cast<double>(i % spacing) / static_cast<double>(spacing);
    const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * frac);
    const double a = knots[k];
    const double b = knots[std::min(k + 1, knots.size() - 1)];
    env[i] = (1.0 - w) * a + w * b;
  }
  return env;
}

// Pink-ish noise from white noise through a three-pole 1/f approximation.
std::vector<double> pink_filter(const std::vector<double>& white) {
  std::vector<double> out(white.size());
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < white.size(); ++i) {
    const double w = white[i];
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    out[i] = b0 + b1 + b2 + w * 0.1848;
  }
  return out;
}

void put_f32(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
  out.write(bytes, 4);
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    s += buf;
  }
  return s;
}

}  // namespace

std::string to_string(NoiseKind kind) { return kind == NoiseKind::kPink ? "pink" : "white"; }

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "white") return NoiseKind::kWhite;
  if (s == "pink") return NoiseKind::kPink;
  throw ConfigError("noise_kind must be white or pink, got '" + s + "'");
}

std::vector<std::uint64_t> split_keys(const DatasetSpec& spec, bool test) {
  const std::size_t n = test ? spec.n_test : spec.n_train;
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i)
    keys[i] = stream_key(spec.seed, test ? Stream::kDataTest : Stream::kDataTrain, i);
  return keys;
}

SignalPair generate_pair(const DatasetSpec& spec, std::size_t index) {
  if (index >= spec.size()) throw Error("pair index " + std::to_string(index) + " out of range");
  const bool test = index >= spec.n_train;
  const auto& snrs = test ? spec.test_snrs : spec.train_snrs;
  if (snrs.empty()) throw ConfigError("SNR list is empty");
  const std::size_t local = test ? index - spec.n_train : index;
  return generate_pair(spec, index, snrs[local % snrs.size()]);
}

SignalPair generate_pair(const DatasetSpec& spec, std::size_t index, double snr) {
  if (index >= spec.size()) throw Error("pair index " + std::to_string(index) + " out of range");
  if (spec.d < 2) throw ShapeError("signal length must be at least 2");
  const bool test = index >= spec.n_train;
  const std::size_t local = test ? index - spec.n_train : index;
  const Stream stream = test ? Stream::kDataTest : Stream::kDataTrain;

  SignalPair p;
  p.index = index;
  p.test = test;
  p.snr_db = snr;
  p.seed = stream_key(spec.seed, stream, local);
  Rng rng(spec.seed, stream, local);
  const std::size_t d = spec.d;

  SignalMeta& m = p.meta;
  const std::size_t tones = 2 + rng.index(3);
  for (std::size_t k = 0; k < tones; ++k) {
    m.frequencies.push_back(0.01 + 0.14 * rng.uniform());
    m.amplitudes.push_back(0.3 + 0.7 * rng.uniform());
    m.phases.push_back(2.0 * std::numbers::pi * rng.uniform());
  }
  m.knot_spacing = kKnotSpacing;
  const std::size_t n_knots = (d + kKnotSpacing - 1) / kKnotSpacing + 1;
  for (std::size_t k = 0; k < n_knots; ++k) {
    const bool silent = rng.uniform() < kSilentProbability;
    m.knots.push_back(silent ? 0.02 * rng.uniform() : 0.3 + 0.7 * rng.uniform());
  }
  const std::vector<double> env = envelope(m.knots, m.knot_spacing, d);

  p.x0.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double v = 0.0;
    for (std::size_t k = 0; k < tones; ++k)
      v += m.amplitudes[k] *
           std::sin(2.0 * std::numbers::pi * m.frequencies[k] * static_cast<double>(i) + m.phases[k]);
    p.x0[i] = env[i] * v;
  }
  double peak = 0.0;
  for (double v : p.x0) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : p.x0) v /= peak;

  std::vector<double> noise(d);
  rng.fill_normal(noise);
  if (spec.noise_kind == NoiseKind::kPink) noise = pink_filter(noise);
  p.y = p.x0;
  if (std::isinf(snr) && snr > 0.0) return p;
  const double scale = std::sqrt(energy(p.x0) / (energy(noise) * std::pow(10.0, snr / 10.0)));
  for (std::size_t i = 0; i < d; ++i) p.y[i] += scale * noise[i];
  return p;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  Dataset ds;
  ds.spec = spec;
  ds.train.reserve(spec.n_train);
  ds.test.reserve(spec.n_test);
  for (std::size_t i = 0; i < spec.n_train; ++i) ds.train.push_back(generate_pair(spec, i));
  for (std::size_t i = 0; i < spec.n_test; ++i) ds.test.push_back(generate_pair(spec, spec.n_train + i));
  return ds;
}

double snr_db(std::span<const double> clean, std::span<const double> noise) {
  require_equal(clean, noise, "snr_db");
  return 10.0 * std::log10(energy(clean) / energy(noise));
}

double si_snr(std::span<const double> estimate, std::span<const double> reference) {
  require_equal(estimate, reference, "si_snr");
  const double ref_energy = energy(reference);
  if (ref_energy == 0.0) throw Error("si_snr: zero reference");
  double dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) dot += estimate[i] * reference[i];
  const double a = dot / ref_energy;
  double s2 = 0.0, e2 = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = a * reference[i];
    const double e = estimate[i] - s;
    s2 += s * s;
    e2 += e * e;
  }
  if (e2 == 0.0) return kSiSnrCap;
  if (s2 == 0.0) return -kSiSnrCap;
  return std::clamp(10.0 * std::log10(s2 / e2), -kSiSnrCap, kSiSnrCap);
}

double ssnr(std::span<const double> estimate, std::span<const double> reference, const SsnrConfig& cfg) {
  require_equal(estimate, reference, "ssnr");
  if (cfg.seg_len < 2) throw Error("ssnr: segment length must be at least 2");
  if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0)) throw Error("ssnr: overlap must lie in [0, 1)");
  if (reference.size() < cfg.seg_len) throw ShapeError("ssnr: signal shorter than one segment");
  const auto hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(cfg.seg_len) * (1.0 - cfg.overlap))));
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start + cfg.seg_len <= reference.size(); start += hop) {
    double s2 = 0.0, e2 = 0.0;
    for (std::size_t i = start; i < start + cfg.seg_len; ++i) {
      const double e = estimate[i] - reference[i];
      s2 += reference[i] * reference[i];
      e2 += e * e;
    }
    const double seg = 10.0 * std::log10(s2 / (e2 + DBL_EPSILON) + DBL_EPSILON);
    total += std::clamp(seg, cfg.lo_db, cfg.hi_db);
    ++count;
  }
  return total / static_cast<double>(count);
}

double mse(std::span<const double> estimate, std::span<const double> reference) {
  require_equal(estimate, reference, "mse");
  if (reference.empty()) throw ShapeError("mse: empty signal");
  double s = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double e = estimate[i] - reference[i];
    s += e * e;
  }
  return s / static_cast<double>(reference.size());
}

std::vector<double> smoothed_envelope(std::span<const double> x, std::size_t window) {
  if (window == 0) throw Error("smoothing window must be positive");
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + std::abs(x[i]);
  std::vector<double> out(n);
  const std::size_t left = window / 2, right = window - left - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= left ? i - left : 0;
    const std::size_t hi = std::min(n - 1, i + right);
    out[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi + 1 - lo);
  }
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require_equal(a, b, "pearson");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  const DatasetSpec& s = ds.spec;
  out << "restoregrad-dataset 1\n"
      << "d = " << s.d << "\n"
      << "n_train = " << s.n_train << "\n"
      << "n_test = " << s.n_test << "\n"
      << "train_snrs = " << join(s.train_snrs) << "\n"
      << "test_snrs = " << join(s.test_snrs) << "\n"
      << "noise_kind = " << to_string(s.noise_kind) << "\n"
      << "seed = " << s.seed << "\n";
  char buf[64];
  for (const auto* split : {&ds.train, &ds.test})
    for (const SignalPair& p : *split) {
      std::snprintf(buf, sizeof buf, "%zu %.17g\n", p.index, p.snr_db);
      out << buf;
    }
  out << "end\n";
  for (const auto* split : {&ds.train, &ds.test})
    for (const SignalPair& p : *split) {
      for (double v : p.x0) put_f32(out, v);
      for (double v : p.y) put_f32(out, v);
    }
}

}  // namespace restoregrad
