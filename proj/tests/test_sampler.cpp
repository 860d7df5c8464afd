#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "restoregrad/error.hpp"
#include "restoregrad/priors.hpp"
#include "restoregrad/sampler.hpp"
#include "test_util.hpp"

using namespace restoregrad;

namespace {

void randomize(ParamStore& store, double scale, std::uint64_t counter) {
  Rng rng(79, Stream::kTest, counter);
  for (ParamArray& a : store.arrays())
    for (double& v : a.values) v = scale * rng.normal();
}

NoiseEstimator small_estimator() {
  NoiseEstimator theta(NetConfig{}, 11);
  randomize(theta.params(), 0.03, 1);
  return theta;
}

}  // namespace

TEST_CASE("single-step sampling is the closed-form update without noise") {
  const NoiseSchedule one = linear_schedule(1, 0.02, 0.02);
  const InferenceSchedule sched = full_inference_schedule(one);
  const auto y = rgtest::randn(6, 1);
  const auto prior_std = rgtest::uniform(6, 2, 0.2, 1.5);
  EpsilonFn eps = [](std::span<const double> x, std::span<const double>, std::span<const double> t,
                     std::size_t) {
    CHECK(t[0] == 1.0);
    std::vector<double> e(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) e[i] = 0.5 * x[i] + 0.1;
    return e;
  };
  std::vector<Rng> rngs{Rng(3, Stream::kTest, 0)};
  const auto out = reverse_sample_batch(eps, prior_std, y, 1, sched, rngs);
  Rng replay(3, Stream::kTest, 0);
  std::vector<double> u(6);
  replay.fill_normal(u);
  for (std::size_t i = 0; i < 6; ++i) {
    const double x1 = prior_std[i] * u[i];
    const double expect = (x1 - 0.02 / std::sqrt(0.02) * (0.5 * x1 + 0.1)) / std::sqrt(0.98);
    CHECK(std::abs(out[i] - expect) < 1e-14);
  }
}

TEST_CASE("unit prior reproduces a reference conditional DDPM sampler bit for bit") {
  const NoiseEstimator theta = small_estimator();
  const NoiseSchedule train = linear_schedule(50, 1e-4, 0.035);
  const std::size_t d = 24;
  const auto y = rgtest::randn(d, 3);
  Rng rng(4, Stream::kSampling, 9);
  const auto ours = reverse_sample(theta, standard_prior(d), y, train, rng);

  // Reference: x_T ~ N(0, I); x <- (x - beta/sqrt(1-abar) eps_hat)/sqrt(alpha) + sigma z.
  Rng ref(4, Stream::kSampling, 9);
  std::vector<double> x(d);
  ref.fill_normal(x);
  for (std::size_t t = 50; t >= 1; --t) {
    const auto e = estimate_noise(theta, x, y, static_cast<double>(t));
    for (std::size_t i = 0; i < d; ++i)
      x[i] = 1.0 / std::sqrt(train.alpha(t)) * (x[i] - train.beta(t) / std::sqrt(1.0 - train.alpha_bar(t)) * e[i]);
    if (t > 1) {
      std::vector<double> z(d);
      ref.fill_normal(z);
      for (std::size_t i = 0; i < d; ++i) x[i] += std::sqrt(train.post_var(t)) * 1.0 * z[i];
    }
  }
  CHECK(ours == x);
}

TEST_CASE("self-aligned fast sampling equals full sampling") {
  const NoiseEstimator theta = small_estimator();
  const NoiseSchedule train = linear_schedule(50, 1e-4, 0.035);
  const auto y = rgtest::randn(16, 5);
  const DiagGaussian prior{rgtest::uniform(16, 6, 0.05, 1.0)};
  Rng a(7, Stream::kSampling, 0), b(7, Stream::kSampling, 0);
  const auto full = reverse_sample(theta, prior, y, train, a);
  const auto fast = fast_reverse_sample(theta, prior, y, inference_schedule(train, train.betas), b);
  CHECK(full == fast);
}

TEST_CASE("sampling is deterministic and batch invariant") {
  const NoiseEstimator theta = small_estimator();
  const NoiseSchedule train = linear_schedule(50, 1e-4, 0.035);
  const InferenceSchedule six = inference_schedule(train, {kFastBetas6.begin(), kFastBetas6.end()});
  const std::size_t d = 20, B = 3;
  const auto y = rgtest::randn(B * d, 8);
  const auto std_ = rgtest::uniform(B * d, 9, 0.1, 1.2);
  std::vector<Rng> rngs;
  for (std::size_t b = 0; b < B; ++b) rngs.emplace_back(1, Stream::kSampling, b);
  const auto batch = reverse_sample_batch(estimator_fn(theta), std_, y, B, six, rngs);
  CHECK(batch.size() == B * d);
  for (std::size_t b = 0; b < B; ++b) {
    Rng r(1, Stream::kSampling, b);
    const DiagGaussian prior = DiagGaussian::from_stddev(std::span(std_).subspan(b * d, d));
    const auto single = fast_reverse_sample(theta, prior, std::span(y).subspan(b * d, d), six, r);
    CHECK(std::equal(single.begin(), single.end(), batch.begin() + static_cast<std::ptrdiff_t>(b * d)));
    CHECK(r.normal() == rngs[b].normal());  // both streams advanced by the same draws
  }
}

TEST_CASE("oracle estimator: sampled moments match the exact linear-Gaussian recursion") {
  // Data x0_i ~ N(mu_i, s_i^2) independently, prior eps_i ~ N(0, p_i^2). With
  // x_t = sqrt(abar) x0 + sqrt(1 - abar) eps the optimal estimate is
  // E[eps | x_t] = sqrt(1-abar) p^2 (x_t - sqrt(abar) mu) / (abar s^2 + (1-abar) p^2).
  // Every reverse step is then affine plus Gaussian noise, so the output mean
  // and variance follow a scalar recursion that the Monte Carlo run must hit.
  const NoiseSchedule train = linear_schedule(100, 1e-4, 0.2);
  REQUIRE(train.alpha_bar_final() < 1e-4);
  const std::vector<double> mu{0.5, -1.0, 2.0, 0.0}, s{0.3, 1.0, 0.5, 0.1}, p{1.0, 0.5, 2.0, 0.2};
  const std::size_t d = 4, N = 10000;
  auto data_var = [&](std::size_t t, std::size_t i) {
    const double abar = train.alpha_bar(t);
    return abar * s[i] * s[i] + (1 - abar) * p[i] * p[i];
  };
  EpsilonFn oracle = [&](std::span<const double> x, std::span<const double>, std::span<const double> t_hat,
                         std::size_t batch) {
    std::vector<double> e(x.size());
    for (std::size_t b = 0; b < batch; ++b) {
      const auto t = static_cast<std::size_t>(t_hat[b]);
      const double abar = train.alpha_bar(t);
      for (std::size_t i = 0; i < d; ++i)
        e[b * d + i] = std::sqrt(1 - abar) * p[i] * p[i] * (x[b * d + i] - std::sqrt(abar) * mu[i]) / data_var(t, i);
    }
    return e;
  };
  std::vector<double> prior_std, y(N * d, 0.0);
  for (std::size_t n = 0; n < N; ++n) prior_std.insert(prior_std.end(), p.begin(), p.end());
  std::vector<Rng> rngs;
  for (std::size_t n = 0; n < N; ++n) rngs.emplace_back(2, Stream::kTest, n);
  const auto out = reverse_sample_batch(oracle, prior_std, y, N, full_inference_schedule(train), rngs);
  for (std::size_t i = 0; i < d; ++i) {
    double em = 0.0, ev = p[i] * p[i];
    for (std::size_t t = 100; t >= 1; --t) {
      const double k = train.beta(t) * p[i] * p[i] / data_var(t, i);
      const double a = (1 - k) / std::sqrt(train.alpha(t));
      em = a * em + k * std::sqrt(train.alpha_bar(t)) * mu[i] / std::sqrt(train.alpha(t));
      ev = a * a * ev + train.post_var(t) * p[i] * p[i];
    }
    double m = 0.0, v = 0.0;
    for (std::size_t n = 0; n < N; ++n) m += out[n * d + i];
    m /= double(N);
    for (std::size_t n = 0; n < N; ++n) v += (out[n * d + i] - m) * (out[n * d + i] - m);
    v /= double(N - 1);
    INFO("element " << i << " mean " << m << " (" << em << ") var " << v << " (" << ev << ")");
    CHECK(std::abs(em - mu[i]) < 1e-3);
    CHECK(std::abs(m - em) < 4.0 * std::sqrt(ev / double(N)));
    CHECK(std::abs(v / ev - 1.0) < 4.0 * std::sqrt(2.0 / double(N)));
    // The posterior-variance choice shrinks the spread a little but keeps it near the data.
    CHECK(v / (s[i] * s[i]) > 0.7);
    CHECK(v / (s[i] * s[i]) < 1.05);
  }
}

TEST_CASE("trajectory rows and CSV") {
  const NoiseEstimator theta = small_estimator();
  const NoiseSchedule train = linear_schedule(50, 1e-4, 0.035);
  const InferenceSchedule three = inference_schedule(train, {kFastBetas3.begin(), kFastBetas3.end()});
  const auto y = rgtest::randn(8, 10);
  Rng rng(3, Stream::kSampling, 0);
  Trajectory trace;
  const auto out = fast_reverse_sample(theta, standard_prior(8), y, three, rng, &trace);
  REQUIRE(trace.size() == 4);
  CHECK(trace[0].step == 3);
  CHECK(trace[0].t_hat == three.t_hat[2]);
  CHECK(trace[3].step == 0);
  CHECK(trace[3].t_hat == 0.0);
  CHECK(trace[3].x == out);
  std::ostringstream csv;
  write_trajectory_csv(csv, trace);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,t_hat,x0,x1,x2,x3,x4,x5,x6,x7");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
  CHECK(out.size() == y.size());
}

TEST_CASE("sampler errors") {
  const NoiseSchedule train = linear_schedule(10, 1e-4, 0.035);
  const InferenceSchedule full = full_inference_schedule(train);
  EpsilonFn bad = [](std::span<const double> x, std::span<const double>, std::span<const double> t,
                     std::size_t) {
    return std::vector<double>(x.size(), t[0] < 5 ? NAN : 0.0);
  };
  std::vector<Rng> rngs{Rng(1)};
  const std::vector<double> y(4, 0.0), std_(4, 1.0);
  try {
    reverse_sample_batch(bad, std_, y, 1, full, rngs);
    FAIL("expected a sampling error");
  } catch (const SamplingError& e) {
    CHECK(std::string(e.what()).find("step 4") != std::string::npos);
  }
  CHECK_THROWS_AS(reverse_sample_batch(bad, std::vector<double>(3, 1.0), y, 1, full, rngs), ShapeError);
  std::vector<Rng> two{Rng(1), Rng(2)};
  CHECK_THROWS_AS(reverse_sample_batch(bad, std_, y, 1, full, two), ShapeError);
  CHECK_THROWS(resolve_prior(PriorSource::kLearned, y, nullptr));
}

TEST_CASE("prior sources resolve") {
  const auto y = rgtest::randn(64, 11);
  CHECK(resolve_prior(PriorSource::kStandard, y, nullptr).variances == std::vector<double>(64, 1.0));
  CHECK(resolve_prior(PriorSource::kHandcrafted, y, nullptr).variances == energy_prior(y).variances);
  PriorNet psi(NetConfig{}, 1);
  CHECK(resolve_prior(PriorSource::kLearned, y, &psi).variances == encode_prior(psi, y).variances);
  for (auto s : {PriorSource::kStandard, PriorSource::kHandcrafted, PriorSource::kLearned})
    CHECK(parse_prior_source(to_string(s)) == s);
  CHECK_THROWS_AS(parse_prior_source("gaussian"), ConfigError);
}
