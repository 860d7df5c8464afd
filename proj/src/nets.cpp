#include "restoregrad/nets.hpp"

#include <cmath>
#include <string>

#include "restoregrad/error.hpp"

namespace restoregrad {

namespace {

using ad::Shape;
using ad::Tensor;

constexpr std::uint64_t kThetaInit = 0;
constexpr std::uint64_t kPsiInit = 1;
constexpr std::uint64_t kPhiInit = 2;
constexpr double kVarianceLogClamp = 30.0;

std::vector<double> truncated_normal(std::size_t n, double std, Rng& rng) {
  std::vector<double> out(n);
  for (double& v : out) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 2.0);
    v = std * z;
  }
  return out;
}

void add_weight(ParamStore& s, const std::string& name, Shape shape, double std, Rng& rng) {
  const std::size_t n = ad::numel(shape);
  s.add(name, std::move(shape), truncated_normal(n, std, rng));
}

void add_zeros(ParamStore& s, const std::string& name, Shape shape) {
  const std::size_t n = ad::numel(shape);
  s.add(name, std::move(shape), std::vector<double>(n, 0.0));
}

void add_conv(ParamStore& s, const std::string& name, std::size_t out, std::size_t in,
              std::size_t kernel, double std, Rng& rng) {
  add_weight(s, name + ".w", {out, in, kernel}, std, rng);
  add_zeros(s, name + ".b", {out});
}

void add_linear(ParamStore& s, const std::string& name, std::size_t in, std::size_t out, double std,
                Rng& rng) {
  add_weight(s, name + ".w", {in, out}, std, rng);
  add_zeros(s, name + ".b", {out});
}

Tensor linear(ParamBinding& p, const std::string& name, const Tensor& x) {
  const Tensor w = p(name + ".w");
  const Tensor y = ad::matmul(x, w);
  const Tensor b = ad::reshape(p(name + ".b"), {1, w.dim(1)});
  return ad::add(y, ad::broadcast(b, y.shape()));
}

Tensor conv(ParamBinding& p, const std::string& name, const Tensor& x, std::size_t dilation = 1) {
  return ad::conv1d(x, p(name + ".w"), p(name + ".b"), dilation);
}

std::string block(std::size_t i) { return "block" + std::to_string(i); }

ParamStore init_encoder(const NetConfig& cfg, std::size_t in_channels, std::uint64_t seed,
                        std::uint64_t which) {
  Rng rng(seed, Stream::kInit, which);
  const std::size_t C = cfg.encoder_channels;
  ParamStore s;
  add_conv(s, "in", C, in_channels, cfg.kernel, cfg.init_std, rng);
  for (std::size_t i = 0; i < cfg.encoder_blocks; ++i) {
    add_conv(s, block(i) + ".conv_a", C, C, cfg.kernel, cfg.init_std, rng);
    add_conv(s, block(i) + ".conv_b", C, C, cfg.kernel, cfg.init_std, rng);
  }
  add_conv(s, "out", 1, C, 1, cfg.init_std, rng);
  return s;
}

// input [B, Cin, L] -> std [B, L] = exp(clamp(v)) + sigma_min.
Tensor encoder_stddev(const NetConfig& cfg, ParamBinding& p, const Tensor& input) {
  const std::size_t B = input.dim(0), L = input.dim(2);
  Tensor h = conv(p, "in", input);
  for (std::size_t i = 0; i < cfg.encoder_blocks; ++i) {
    const std::size_t dil = std::size_t{1} << i;
    Tensor z = conv(p, block(i) + ".conv_a", ad::silu(h), dil);
    z = conv(p, block(i) + ".conv_b", ad::silu(z), dil);
    h = ad::add(h, z);
  }
  Tensor v = ad::reshape(conv(p, "out", ad::silu(h)), {B, L});
  v = ad::clamp(v, -kVarianceLogClamp, kVarianceLogClamp);
  return ad::add_scalar(ad::exp(v), cfg.sigma_min);
}

void require_rows(std::span<const double> a, std::size_t batch, const char* what) {
  if (batch == 0 || a.size() % batch != 0)
    throw ShapeError(std::string(what) + ": buffer length is not a multiple of the batch size");
}

}  // namespace

std::vector<double> DiagGaussian::stddev() const {
  std::vector<double> s(variances.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sqrt(variances[i]);
  return s;
}

DiagGaussian DiagGaussian::from_stddev(std::span<const double> std) {
  DiagGaussian g;
  g.variances.resize(std.size());
  for (std::size_t i = 0; i < std.size(); ++i) g.variances[i] = std[i] * std[i];
  return g;
}

std::vector<double> time_embedding(std::span<const double> t_hat, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> out(t_hat.size() * dim, 0.0);
  for (std::size_t b = 0; b < t_hat.size(); ++b) {
    for (std::size_t k = 0; k < half; ++k) {
      const double expo = half > 1 ? 4.0 * static_cast<double>(k) / static_cast<double>(half - 1) : 0.0;
      const double arg = t_hat[b] * std::pow(10.0, expo);
      out[b * dim + k] = std::sin(arg);
      out[b * dim + half + k] = std::cos(arg);
    }
  }
  return out;
}

// ------------------------------------------------------------ estimator

NoiseEstimator::NoiseEstimator(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(seed, Stream::kInit, kThetaInit);
  const std::size_t C = cfg.estimator_channels, H = cfg.time_hidden;
  const double sd = cfg.init_std;
  add_conv(params_, "in", C, 2, cfg.kernel, sd, rng);
  add_linear(params_, "time.fc1", cfg.time_embed_dim, H, sd, rng);
  add_linear(params_, "time.fc2", H, H, sd, rng);
  for (std::size_t i = 0; i < cfg.estimator_blocks; ++i) {
    add_linear(params_, block(i) + ".time", H, C, sd, rng);
    add_conv(params_, block(i) + ".conv_a", C, C, cfg.kernel, sd, rng);
    add_conv(params_, block(i) + ".cond", C, 1, 1, sd, rng);
    add_conv(params_, block(i) + ".conv_b", C, C, cfg.kernel, sd, rng);
  }
  add_zeros(params_, "out.w", {1, C, 1});
  add_zeros(params_, "out.b", {1});
}

NoiseEstimator::NoiseEstimator(const NetConfig& cfg, ParamStore params)
    : cfg_(cfg), params_(std::move(params)) {}

Tensor NoiseEstimator::forward(ParamBinding& p, const Tensor& x_t, const Tensor& y,
                               std::span<const double> t_hat) const {
  if (x_t.rank() != 2 || x_t.shape() != y.shape())
    throw ShapeError("noise estimator: x_t " + ad::shape_string(x_t.shape()) + " vs y " +
                     ad::shape_string(y.shape()));
  const std::size_t B = x_t.dim(0), L = x_t.dim(1), C = cfg_.estimator_channels;
  if (t_hat.size() != B) throw ShapeError("noise estimator: need one t_hat per batch row");
  ad::Tape& tape = p.tape();

  const Tensor x3 = ad::reshape(x_t, {B, 1, L});
  const Tensor y3 = ad::reshape(y, {B, 1, L});
  Tensor h = conv(p, "in", ad::concat({x3, y3}, 1));

  const Tensor emb = tape.constant({B, cfg_.time_embed_dim}, time_embedding(t_hat, cfg_.time_embed_dim));
  Tensor e = ad::silu(linear(p, "time.fc1", emb));
  e = ad::silu(linear(p, "time.fc2", e));

  for (std::size_t i = 0; i < cfg_.estimator_blocks; ++i) {
    const std::size_t dil = std::size_t{1} << i;
    const Tensor tp = ad::broadcast(ad::reshape(linear(p, block(i) + ".time", e), {B, C, 1}), {B, C, L});
    Tensor z = conv(p, block(i) + ".conv_a", ad::silu(ad::add(h, tp)), dil);
    z = ad::add(z, conv(p, block(i) + ".cond", y3));
    z = conv(p, block(i) + ".conv_b", ad::silu(z), dil);
    h = ad::add(h, z);
  }
  return ad::reshape(conv(p, "out", ad::silu(h)), {B, L});
}

std::vector<double> NoiseEstimator::evaluate(std::span<const double> x_t, std::span<const double> y,
                                             std::span<const double> t_hat, std::size_t batch) const {
  require_rows(x_t, batch, "noise estimator");
  if (x_t.size() != y.size()) throw ShapeError("noise estimator: x_t and y lengths differ");
  const std::size_t L = x_t.size() / batch;
  ad::Tape tape;
  ParamBinding p(tape, params_, kPrefix, false);
  const Tensor xt = tape.constant({batch, L}, {x_t.begin(), x_t.end()});
  const Tensor yt = tape.constant({batch, L}, {y.begin(), y.end()});
  const auto out = forward(p, xt, yt, t_hat).data();
  return {out.begin(), out.end()};
}

// -------------------------------------------------------------- encoders

PriorNet::PriorNet(const NetConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), params_(init_encoder(cfg, 1, seed, kPsiInit)) {}

PriorNet::PriorNet(const NetConfig& cfg, ParamStore params) : cfg_(cfg), params_(std::move(params)) {}

Tensor PriorNet::stddev(ParamBinding& p, const Tensor& y) const {
  if (y.rank() != 2) throw ShapeError("prior net: y must be [batch, length]");
  return encoder_stddev(cfg_, p, ad::reshape(y, {y.dim(0), 1, y.dim(1)}));
}

std::vector<double> PriorNet::evaluate_stddev(std::span<const double> y, std::size_t batch) const {
  require_rows(y, batch, "prior net");
  ad::Tape tape;
  ParamBinding p(tape, params_, kPrefix, false);
  const auto out = stddev(p, tape.constant({batch, y.size() / batch}, {y.begin(), y.end()})).data();
  return {out.begin(), out.end()};
}

PosteriorNet::PosteriorNet(const NetConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), params_(init_encoder(cfg, 2, seed, kPhiInit)) {}

PosteriorNet::PosteriorNet(const NetConfig& cfg, ParamStore params)
    : cfg_(cfg), params_(std::move(params)) {}

Tensor PosteriorNet::stddev(ParamBinding& p, const Tensor& x0, const Tensor& y) const {
  if (x0.rank() != 2 || x0.shape() != y.shape())
    throw ShapeError("posterior net: x0 and y must both be [batch, length]");
  const std::size_t B = x0.dim(0), L = x0.dim(1);
  const Tensor in = ad::concat({ad::reshape(x0, {B, 1, L}), ad::reshape(y, {B, 1, L})}, 1);
  return encoder_stddev(cfg_, p, in);
}

std::vector<double> PosteriorNet::evaluate_stddev(std::span<const double> x0, std::span<const double> y,
                                                  std::size_t batch) const {
  require_rows(x0, batch, "posterior net");
  if (x0.size() != y.size()) throw ShapeError("posterior net: x0 and y lengths differ");
  const std::size_t L = x0.size() / batch;
  ad::Tape tape;
  ParamBinding p(tape, params_, kPrefix, false);
  const Tensor a = tape.constant({batch, L}, {x0.begin(), x0.end()});
  const Tensor b = tape.constant({batch, L}, {y.begin(), y.end()});
  const auto out = stddev(p, a, b).data();
  return {out.begin(), out.end()};
}

// ------------------------------------------------------------- helpers

std::vector<double> estimate_noise(const NoiseEstimator& theta, std::span<const double> x_t,
                                   std::span<const double> y, double t_hat) {
  const double t[1] = {t_hat};
  return theta.evaluate(x_t, y, t, 1);
}

DiagGaussian encode_prior(const PriorNet& psi, std::span<const double> y) {
  return DiagGaussian::from_stddev(psi.evaluate_stddev(y, 1));
}

DiagGaussian encode_posterior(const PosteriorNet& phi, std::span<const double> x0,
                              std::span<const double> y) {
  return DiagGaussian::from_stddev(phi.evaluate_stddev(x0, y, 1));
}

std::vector<double> sample_diag(const DiagGaussian& g, Rng& rng) {
  std::vector<double> out(g.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(g.variances[i]) * rng.normal();
  return out;
}

void zero_params(ParamStore& store) {
  for (auto& a : store.arrays()) std::fill(a.values.begin(), a.values.end(), 0.0);
}

}  // namespace restoregrad
