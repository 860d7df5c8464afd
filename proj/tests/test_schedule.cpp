#include <doctest.h>

#include <cmath>

#include "restoregrad/error.hpp"
#include "restoregrad/schedule.hpp"
#include "test_util.hpp"

using namespace restoregrad;

namespace {

// Frozen from tests/oracles/schedule_oracle.py (60-digit arithmetic).
constexpr double kAbar2 = 0.99908783632653061224;
constexpr double kAbar10 = 0.96741585980424953649;
constexpr double kAbar25 = 0.80456860678380206285;
constexpr double kAbar50 = 0.41146639796184525534;
constexpr double kPost2 = 0.000089045959796867819551;
constexpr double kPost50 = 0.034112492797224609281;
constexpr double kGamma2 = 4.0645258802047377257;
constexpr double kGamma50 = 0.031615063540069849857;
constexpr double kTHat6[] = {1.0, 2.1232182145535600929, 5.9597100781057890973,
                             13.576733194242311076, 28.581902596741792308, 44.972228409159108046};
constexpr double kTHat3[] = {12.340340740363884041, 28.030061945532892245, 44.624807018351295517};

NoiseSchedule toy() { return linear_schedule(50, 1e-4, 0.035); }

}  // namespace

TEST_CASE("linear schedule endpoints and increments") {
  const NoiseSchedule s = toy();
  REQUIRE(s.steps() == 50);
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.beta(50) == 0.035);
  const double inc = (0.035 - 1e-4) / 49.0;
  for (std::size_t t = 2; t <= 50; ++t) {
    CHECK(s.beta(t) >= s.beta(t - 1));
    CHECK(s.beta(t) - s.beta(t - 1) == doctest::Approx(inc).epsilon(1e-9));
  }
}

TEST_CASE("alpha_bar matches the high-precision oracle") {
  const NoiseSchedule s = toy();
  CHECK(std::abs(s.alpha_bar(1) - 0.9999) < 1e-15);
  CHECK(std::abs(s.alpha_bar(2) - kAbar2) < 1e-12);
  CHECK(std::abs(s.alpha_bar(10) - kAbar10) < 1e-12);
  CHECK(std::abs(s.alpha_bar(25) - kAbar25) < 1e-12);
  CHECK(std::abs(s.alpha_bar_final() - kAbar50) < 1e-12);
  CHECK(std::abs(s.post_var(2) - kPost2) < 1e-12);
  CHECK(std::abs(s.post_var(50) - kPost50) < 1e-12);
  CHECK(std::abs(s.gamma(2) - kGamma2) < 1e-11);
  CHECK(std::abs(s.gamma(50) - kGamma50) < 1e-12);
}

TEST_CASE("schedule invariants") {
  const NoiseSchedule s = toy();
  CHECK(s.post_var(1) == 0.0);
  CHECK(s.gamma(1) == 1.0 / (2.0 * s.alpha(1)));
  CHECK(s.alpha_bar_final() > 0.0);
  CHECK(s.alpha_bar(1) < 1.0);
  for (std::size_t t = 1; t <= 50; ++t) {
    CHECK(s.beta(t) > 0.0);
    CHECK(s.beta(t) < 1.0);
    CHECK(s.alpha(t) == 1.0 - s.beta(t));
    if (t > 1) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  }
}

TEST_CASE("telescoping identity") {
  const NoiseSchedule s = toy();
  for (std::size_t t = 2; t <= 50; ++t) {
    const double lhs = 1.0 - s.alpha_bar(t);
    const double rhs = s.alpha(t) * (1.0 - s.alpha_bar(t - 1)) + s.beta(t);
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("post_var and gamma recomputed from betas alone") {
  const NoiseSchedule s = toy();
  // Independent route: alpha_bar by direct product of each prefix.
  for (std::size_t t = 1; t <= 50; ++t) {
    double abar = 1.0, abar_prev = 1.0;
    for (std::size_t i = 1; i <= t; ++i) {
      abar_prev = abar;
      abar *= 1.0 - s.beta(i);
    }
    const double post = t == 1 ? 0.0 : s.beta(t) * (1.0 - abar_prev) / (1.0 - abar);
    CHECK(std::abs(post - s.post_var(t)) < 1e-12);
    const double gamma = t == 1 ? 0.5 / (1.0 - s.beta(1))
                                : s.beta(t) * s.beta(t) / (2.0 * post * (1.0 - s.beta(t)) * (1.0 - abar));
    CHECK(std::abs(gamma - s.gamma(t)) < 1e-12 * std::max(1.0, gamma));
  }
}

TEST_CASE("single-step schedule") {
  const NoiseSchedule s = linear_schedule(1, 0.02, 0.02);
  REQUIRE(s.steps() == 1);
  CHECK(s.beta(1) == 0.02);
  CHECK(s.alpha_bar(1) == 1.0 - 0.02);
  CHECK(s.post_var(1) == 0.0);
  CHECK(s.gamma(1) == 1.0 / (2.0 * (1.0 - 0.02)));
}

TEST_CASE("schedule argument validation") {
  CHECK_THROWS_AS(linear_schedule(0, 1e-4, 0.02), ScheduleError);
  CHECK_THROWS_AS(linear_schedule(10, 0.0, 0.02), ScheduleError);
  CHECK_THROWS_AS(linear_schedule(10, 1e-4, 1.0), ScheduleError);
  CHECK_THROWS_AS(linear_schedule(10, 0.03, 0.02), ScheduleError);
  CHECK_THROWS_AS(linear_schedule(10, NAN, 0.02), ScheduleError);
  CHECK_THROWS_AS(linear_schedule(10, 1e-4, INFINITY), ScheduleError);
  CHECK_THROWS_AS(schedule_from_betas({}), ScheduleError);
  CHECK_THROWS_AS(schedule_from_betas({0.1, 1.5}), ScheduleError);
}

TEST_CASE("fast schedules align to the oracle timesteps") {
  const NoiseSchedule train = toy();
  const InferenceSchedule six = inference_schedule(train, {kFastBetas6.begin(), kFastBetas6.end()});
  REQUIRE(six.steps() == 6);
  for (std::size_t s = 0; s < 6; ++s) CHECK(std::abs(six.t_hat[s] - kTHat6[s]) < 1e-9);
  const InferenceSchedule three = inference_schedule(train, {kFastBetas3.begin(), kFastBetas3.end()});
  REQUIRE(three.steps() == 3);
  for (std::size_t s = 0; s < 3; ++s) CHECK(std::abs(three.t_hat[s] - kTHat3[s]) < 1e-9);
  for (std::size_t s = 1; s < 6; ++s) CHECK(six.t_hat[s] > six.t_hat[s - 1]);
}

TEST_CASE("self-alignment gives integer timesteps") {
  const NoiseSchedule train = toy();
  const InferenceSchedule same = inference_schedule(train, train.betas);
  for (std::size_t s = 1; s <= 50; ++s) CHECK(std::abs(same.t_hat[s - 1] - double(s)) < 1e-12);
  const InferenceSchedule full = full_inference_schedule(train);
  for (std::size_t s = 1; s <= 50; ++s) CHECK(full.t_hat[s - 1] == double(s));
}

TEST_CASE("alignment rejects schedules outside the training range") {
  const NoiseSchedule train = toy();
  CHECK_THROWS_AS(inference_schedule(train, {0.5, 0.5}), ScheduleError);
  CHECK_THROWS_AS(inference_schedule(train, {1e-5}), ScheduleError);
  CHECK_THROWS_AS(inference_schedule(linear_schedule(2, 1e-4, 1e-3), {1e-4, 1e-3, 1e-3}), ScheduleError);
}

TEST_CASE("forward_sample zero cases and superposition") {
  const NoiseSchedule s = toy();
  const auto x0 = rgtest::randn(16, 1);
  const auto eps = rgtest::randn(16, 2);
  const std::vector<double> zero(16, 0.0);
  for (std::size_t t : {1u, 10u, 50u}) {
    const auto a = forward_sample(x0, zero, t, s);
    const auto b = forward_sample(zero, eps, t, s);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(a[i] == std::sqrt(s.alpha_bar(t)) * x0[i]);
      CHECK(b[i] == std::sqrt(1.0 - s.alpha_bar(t)) * eps[i]);
    }
    const double c1 = 0.7, c2 = -1.3;
    std::vector<double> x0b = rgtest::randn(16, 3), epsb = rgtest::randn(16, 4), xm(16), em(16);
    for (std::size_t i = 0; i < 16; ++i) {
      xm[i] = c1 * x0[i] + c2 * x0b[i];
      em[i] = c1 * eps[i] + c2 * epsb[i];
    }
    const auto lhs = forward_sample(xm, em, t, s);
    const auto p = forward_sample(x0, eps, t, s);
    const auto q = forward_sample(x0b, epsb, t, s);
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(lhs[i] - (c1 * p[i] + c2 * q[i])) < 1e-12);
  }
  CHECK_THROWS_AS(forward_sample(x0, std::vector<double>(15), 1, s), ShapeError);
  CHECK_THROWS_AS(forward_sample(x0, eps, 0, s), ScheduleError);
  CHECK_THROWS_AS(forward_sample(x0, eps, 51, s), ScheduleError);
}

TEST_CASE("rng streams are counter addressed") {
  Rng a(3, Stream::kTrainNoise, 17), b(3, Stream::kTrainNoise, 17), c(3, Stream::kTrainNoise, 18);
  const double va = a.normal();
  CHECK(va == b.normal());
  CHECK(va != c.normal());
  CHECK(stream_key(3, Stream::kDataTrain, 0) != stream_key(3, Stream::kDataTest, 0));
  CHECK(stream_key(3, Stream::kDataTrain, 0) != stream_key(4, Stream::kDataTrain, 0));
  Rng r(1, Stream::kTest, 0);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = r.index(7);
    CHECK(k < 7);
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
