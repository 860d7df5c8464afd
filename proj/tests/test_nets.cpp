#include <doctest.h>

#include <cmath>

#include "restoregrad/error.hpp"
#include "restoregrad/gradcheck.hpp"
#include "restoregrad/nets.hpp"
#include "restoregrad/objective.hpp"
#include "test_util.hpp"

using namespace restoregrad;

namespace {

void randomize(ParamStore& store, double scale, std::uint64_t counter) {
  Rng rng(77, Stream::kTest, counter);
  for (ParamArray& a : store.arrays())
    for (double& v : a.values) v = scale * rng.normal();
}

std::vector<double> row(const std::vector<double>& v, std::size_t b, std::size_t d) {
  return {v.begin() + static_cast<std::ptrdiff_t>(b * d), v.begin() + static_cast<std::ptrdiff_t>((b + 1) * d)};
}

}  // namespace

TEST_CASE("encoders stay under five percent of the estimator") {
  const NetConfig cfg;
  const NoiseEstimator theta(cfg, 1);
  const PriorNet psi(cfg, 1);
  const PosteriorNet phi(cfg, 1);
  const double n = static_cast<double>(theta.params().count());
  CHECK(static_cast<double>(psi.params().count()) <= 0.05 * n);
  CHECK(static_cast<double>(phi.params().count()) <= 0.05 * n);
  CHECK(cfg.estimator_channels == 32);
  CHECK(cfg.estimator_blocks == 4);
  CHECK(cfg.encoder_channels == 16);
  CHECK(cfg.encoder_blocks == 3);
  CHECK(cfg.time_embed_dim == 64);
}

TEST_CASE("initialization: zero head, zero biases, small weights") {
  const NoiseEstimator theta(NetConfig{}, 3);
  for (const ParamArray& a : theta.params().arrays()) {
    const bool bias = a.name.size() > 2 && a.name.substr(a.name.size() - 2) == ".b";
    const bool head = a.name.rfind("out.", 0) == 0;
    for (double v : a.values) {
      if (bias || head) CHECK(v == 0.0);
      else CHECK(std::abs(v) <= 0.04 + 1e-12);  // truncated at two standard deviations
    }
  }
  const auto x = rgtest::randn(3 * 32, 1), y = rgtest::randn(3 * 32, 2);
  const std::vector<double> t{1.0, 17.5, 50.0};
  const auto out = theta.evaluate(x, y, t, 3);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("estimator output shape and determinism") {
  NoiseEstimator theta(NetConfig{}, 5);
  randomize(theta.params(), 0.05, 1);
  const std::size_t d = 40;
  const auto x = rgtest::randn(2 * d, 3), y = rgtest::randn(2 * d, 4);
  const std::vector<double> t{3.0, 44.97};
  const auto a = theta.evaluate(x, y, t, 2);
  const auto b = theta.evaluate(x, y, t, 2);
  CHECK(a.size() == 2 * d);
  CHECK(a == b);
  const auto single = estimate_noise(theta, row(x, 1, d), row(y, 1, d), 44.97);
  CHECK(single == row(a, 1, d));

  ad::Tape tape;
  ParamBinding p(tape, theta.params(), NoiseEstimator::kPrefix, true);
  const ad::Tensor out = theta.forward(p, tape.constant({2, d}, x), tape.constant({2, d}, y), t);
  CHECK(out.shape() == ad::Shape{2, d});
  CHECK(std::vector<double>(out.data().begin(), out.data().end()) == a);
  CHECK_THROWS_AS(theta.evaluate(x, std::vector<double>(d), t, 2), ShapeError);
}

TEST_CASE("zero parameters give zero noise estimate and 1 + sigma_min std") {
  NetConfig cfg;
  NoiseEstimator theta(cfg, 1);
  PriorNet psi(cfg, 1);
  PosteriorNet phi(cfg, 1);
  zero_params(theta.params());
  zero_params(psi.params());
  zero_params(phi.params());
  const auto x = rgtest::randn(16, 5), y = rgtest::randn(16, 6);
  for (double v : estimate_noise(theta, x, y, 7.0)) CHECK(v == 0.0);
  for (double s : encode_prior(psi, y).stddev()) CHECK(s == doctest::Approx(1.1).epsilon(1e-15));
  for (double s : encode_posterior(phi, x, y).stddev()) CHECK(s == doctest::Approx(1.1).epsilon(1e-15));
}

TEST_CASE("encoder std never drops below sigma_min") {
  NetConfig cfg;
  PriorNet psi(cfg, 2);
  PosteriorNet phi(cfg, 2);
  for (std::uint64_t k = 0; k < 5; ++k) {
    randomize(psi.params(), 0.5 + k, 10 + k);
    randomize(phi.params(), 0.5 + k, 20 + k);
    const auto x = rgtest::randn(64, 30 + k, 3.0), y = rgtest::randn(64, 40 + k, 3.0);
    for (double s : encode_prior(psi, y).stddev()) CHECK(s >= 0.1);
    for (double s : encode_posterior(phi, x, y).stddev()) CHECK(s >= 0.1);
    const DiagGaussian g = encode_prior(psi, y);
    for (double v : g.variances) CHECK(v >= 0.01 - 1e-15);
    CHECK(g.dim() == 64);
  }
}

TEST_CASE("no cross-sample leakage across the batch") {
  NetConfig cfg;
  NoiseEstimator theta(cfg, 4);
  PriorNet psi(cfg, 4);
  PosteriorNet phi(cfg, 4);
  randomize(theta.params(), 0.05, 31);
  randomize(psi.params(), 0.2, 32);
  randomize(phi.params(), 0.2, 33);
  const std::size_t d = 48, B = 4;
  const auto x = rgtest::randn(B * d, 7), y = rgtest::randn(B * d, 8);
  const std::vector<double> t{1.0, 9.5, 23.0, 50.0};
  const auto eps = theta.evaluate(x, y, t, B);
  const auto ps = psi.evaluate_stddev(y, B);
  const auto qs = phi.evaluate_stddev(x, y, B);
  for (std::size_t b = 0; b < B; ++b) {
    CHECK(estimate_noise(theta, row(x, b, d), row(y, b, d), t[b]) == row(eps, b, d));
    CHECK(encode_prior(psi, row(y, b, d)).stddev() == row(ps, b, d));
    CHECK(encode_posterior(phi, row(x, b, d), row(y, b, d)).stddev() == row(qs, b, d));
  }
  // Reversing the batch order permutes the rows and nothing else.
  std::vector<double> xr, yr, tr;
  for (std::size_t b = B; b-- > 0;) {
    const auto xb = row(x, b, d), yb = row(y, b, d);
    xr.insert(xr.end(), xb.begin(), xb.end());
    yr.insert(yr.end(), yb.begin(), yb.end());
    tr.push_back(t[b]);
  }
  const auto rev = psi.evaluate_stddev(yr, B);
  for (std::size_t b = 0; b < B; ++b) CHECK(row(rev, B - 1 - b, d) == row(ps, b, d));
}

TEST_CASE("estimator gradients match finite differences") {
  NetConfig cfg;
  NoiseEstimator theta(cfg, 6);
  randomize(theta.params(), 0.1, 41);
  const std::size_t d = 8;
  const auto x = rgtest::randn(2 * d, 9), y = rgtest::randn(2 * d, 10), w = rgtest::randn(2 * d, 11);
  const std::vector<double> t{2.0, 4.5};
  StoreLoss loss = [&](ad::Tape& tape, bool trainable) {
    ParamBinding p(tape, theta.params(), NoiseEstimator::kPrefix, trainable);
    const ad::Tensor out = theta.forward(p, tape.constant({2, d}, x), tape.constant({2, d}, y), t);
    return ad::sum(ad::mul(out, tape.constant({2, d}, w)));
  };
  const FdReport r = finite_diff_check({{NoiseEstimator::kPrefix, &theta.params()}}, loss);
  CHECK(r.max_error < 1e-3);
  CHECK(r.checked > 100);

  // And with respect to the noisy input itself.
  auto vals = x;
  auto eval = [&](const std::vector<double>& xv, ad::Gradients* g) {
    ad::Tape tape;
    ParamBinding p(tape, theta.params(), NoiseEstimator::kPrefix, false);
    const ad::Tensor xt = tape.variable("x_t", {2, d}, xv);
    const ad::Tensor l = ad::sum(ad::mul(theta.forward(p, xt, tape.constant({2, d}, y), t), tape.constant({2, d}, w)));
    if (g) *g = tape.backward(l);
    return l.item();
  };
  ad::Gradients g;
  eval(vals, &g);
  double worst = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double keep = vals[i];
    vals[i] = keep + 1e-5;
    const double up = eval(vals, nullptr);
    vals[i] = keep - 1e-5;
    const double down = eval(vals, nullptr);
    vals[i] = keep;
    worst = std::max(worst, rgtest::rel_error(g.at("x_t")[i], (up - down) / 2e-5));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("mean log variance gradient of the encoders matches finite differences") {
  NetConfig cfg;
  PriorNet psi(cfg, 7);
  PosteriorNet phi(cfg, 7);
  randomize(psi.params(), 0.2, 51);
  randomize(phi.params(), 0.2, 52);
  const std::size_t d = 8;
  const auto x = rgtest::randn(2 * d, 12), y = rgtest::randn(2 * d, 13);
  StoreLoss prior_loss = [&](ad::Tape& tape, bool trainable) {
    ParamBinding p(tape, psi.params(), PriorNet::kPrefix, trainable);
    return ad::mean(ad::log(ad::square(psi.stddev(p, tape.constant({2, d}, y)))));
  };
  StoreLoss post_loss = [&](ad::Tape& tape, bool trainable) {
    ParamBinding p(tape, phi.params(), PosteriorNet::kPrefix, trainable);
    return ad::mean(ad::log(ad::square(phi.stddev(p, tape.constant({2, d}, x), tape.constant({2, d}, y)))));
  };
  CHECK(finite_diff_check({{PriorNet::kPrefix, &psi.params()}}, prior_loss).max_error < 1e-3);
  CHECK(finite_diff_check({{PosteriorNet::kPrefix, &phi.params()}}, post_loss).max_error < 1e-3);
}

TEST_CASE("time embedding layout") {
  const std::vector<double> t{0.0, 3.5};
  const auto e = time_embedding(t, 8);
  REQUIRE(e.size() == 16);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(e[k] == 0.0);      // sin(0)
    CHECK(e[4 + k] == 1.0);  // cos(0)
  }
  const double f3 = 1e4;  // last frequency
  CHECK(e[8 + 3] == doctest::Approx(std::sin(3.5 * f3)).epsilon(1e-9));
  CHECK(e[8 + 0] == doctest::Approx(std::sin(3.5)).epsilon(1e-12));
  CHECK(e[12 + 0] == doctest::Approx(std::cos(3.5)).epsilon(1e-12));
}

TEST_CASE("sample_diag moments over 1e5 draws") {
  const std::size_t d = 8, n = 100000;
  DiagGaussian g;
  for (std::size_t i = 0; i < d; ++i) g.variances.push_back(i == 0 ? 0.01 : 0.25 * double(i + 1));
  Rng rng(9, Stream::kTest, 0);
  std::vector<double> sum(d, 0.0), sq(d, 0.0), cross(d * d, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto s = sample_diag(g, rng);
    for (std::size_t i = 0; i < d; ++i) {
      sum[i] += s[i];
      sq[i] += s[i] * s[i];
      for (std::size_t j = 0; j < i; ++j) cross[i * d + j] += s[i] * s[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    const double mean = sum[i] / n, var = sq[i] / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 * std::sqrt(g.variances[i] / n));
    CHECK(std::abs(var / g.variances[i] - 1.0) < 0.03);
    for (std::size_t j = 0; j < i; ++j) {
      const double corr = (cross[i * d + j] / n) / std::sqrt(g.variances[i] * g.variances[j]);
      CHECK(std::abs(corr) < 4.0 / std::sqrt(double(n)));
    }
  }
  // Floor case: std equals sigma_min.
  const DiagGaussian floor = DiagGaussian::from_stddev(std::vector<double>(4, 0.1));
  double acc = 0.0;
  for (std::size_t k = 0; k < n / 4; ++k)
    for (double v : sample_diag(floor, rng)) acc += v * v;
  CHECK(std::sqrt(acc / double(n)) == doctest::Approx(0.1).epsilon(0.02));
}
