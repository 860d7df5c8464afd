#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "restoregrad/autodiff.hpp"
#include "restoregrad/params.hpp"
#include "restoregrad/rng.hpp"

namespace restoregrad {

struct NetConfig {
  std::size_t estimator_channels = 32;
  std::size_t estimator_blocks = 4;
  std::size_t encoder_channels = 16;
  std::size_t encoder_blocks = 3;
  std::size_t kernel = 3;
  std::size_t time_embed_dim = 64;
  std::size_t time_hidden = 256;
  // Added to exp(v) on the standard-deviation scale.
  double sigma_min = 0.1;
  double init_std = 0.02;
};

// Zero-mean Gaussian with diagonal covariance.
struct DiagGaussian {
  std::vector<double> variances;

  std::size_t dim() const { return variances.size(); }
  std::vector<double> stddev() const;
  static DiagGaussian from_stddev(std::span<const double> std);
};

// Sinusoidal embedding of continuous timesteps: [sin(t f_k), cos(t f_k)]
// with f_k geometric from 1 to 1e4. Returns [batch, dim] row-major.
std::vector<double> time_embedding(std::span<const double> t_hat, std::size_t dim);

/// Conditional noise estimator eps_theta(x_t, y, t).
///
/// A residual 1-D conv net over concat(x_t, y). Block i uses dilation 2^i,
/// receives a per-block projection of the time MLP output and a 1x1
/// projection of y. The 1x1 output head starts at zero.
class NoiseEstimator {
 public:
  static constexpr const char* kPrefix = "theta";

  NoiseEstimator(const NetConfig& cfg, std::uint64_t seed);
  NoiseEstimator(const NetConfig& cfg, ParamStore params);

  // x_t, y: [batch, length]; t_hat: one entry per batch row.
  ad::Tensor forward(ParamBinding& p, const ad::Tensor& x_t, const ad::Tensor& y,
                     std::span<const double> t_hat) const;

  // Gradient-free evaluation on row-major [batch, length] buffers.
  std::vector<double> evaluate(std::span<const double> x_t, std::span<const double> y,
                               std::span<const double> t_hat, std::size_t batch) const;

  const NetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  NetConfig cfg_;
  ParamStore params_;
};

// Prior Net psi: y -> per-element std of the zero-mean prior.
class PriorNet {
 public:
  static constexpr const char* kPrefix = "psi";

  PriorNet(const NetConfig& cfg, std::uint64_t seed);
  PriorNet(const NetConfig& cfg, ParamStore params);

  // y: [batch, length] -> std: [batch, length], every entry >= sigma_min.
  ad::Tensor stddev(ParamBinding& p, const ad::Tensor& y) const;
  std::vector<double> evaluate_stddev(std::span<const double> y, std::size_t batch) const;

  const NetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  NetConfig cfg_;
  ParamStore params_;
};

// Posterior Net phi: (x0, y), stacked on the channel axis -> std.
class PosteriorNet {
 public:
  static constexpr const char* kPrefix = "phi";

  PosteriorNet(const NetConfig& cfg, std::uint64_t seed);
  PosteriorNet(const NetConfig& cfg, ParamStore params);

  ad::Tensor stddev(ParamBinding& p, const ad::Tensor& x0, const ad::Tensor& y) const;
  std::vector<double> evaluate_stddev(std::span<const double> x0, std::span<const double> y,
                                      std::size_t batch) const;

  const NetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  NetConfig cfg_;
  ParamStore params_;
};

std::vector<double> estimate_noise(const NoiseEstimator& theta, std::span<const double> x_t,
                                   std::span<const double> y, double t_hat);
DiagGaussian encode_prior(const PriorNet& psi, std::span<const double> y);
DiagGaussian encode_posterior(const PosteriorNet& phi, std::span<const double> x0,
                              std::span<const double> y);

// Reparameterized draw std * u with u ~ N(0, I).
std::vector<double> sample_diag(const DiagGaussian& g, Rng& rng);

// Fills every array of a store with zeros.
void zero_params(ParamStore& store);

}  // namespace restoregrad
