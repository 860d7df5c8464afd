#include <doctest.h>

#include <cmath>

#include "restoregrad/autodiff.hpp"
#include "restoregrad/error.hpp"
#include "test_util.hpp"

using namespace restoregrad;
using namespace restoregrad::ad;
using rgtest::vjp_error;

namespace {
constexpr double kVjpTol = 1e-5;
}

TEST_CASE("elementwise primitives match finite differences") {
  const Shape s{3, 4};
  const auto a = rgtest::randn(12, 1), b = rgtest::randn(12, 2);
  const auto pos = rgtest::uniform(12, 3, 0.5, 2.0);
  CHECK(vjp_error([](Tape&, auto& in) { return add(in[0], in[1]); }, {s, s}, {a, b}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return sub(in[0], in[1]); }, {s, s}, {a, b}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return mul(in[0], in[1]); }, {s, s}, {a, b}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return div(in[0], in[1]); }, {s, s}, {a, pos}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return scale(in[0], -2.5); }, {s}, {a}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return add_scalar(in[0], 0.75); }, {s}, {a}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return square(in[0]); }, {s}, {a}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return silu(in[0]); }, {s}, {a}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return exp(in[0]); }, {s}, {a}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return log(in[0]); }, {s}, {pos}) < kVjpTol);
  // Kinks avoided: inputs kept away from 0 and from the clamp bounds.
  auto away = a;
  for (double& v : away) v += v >= 0 ? 0.1 : -0.1;
  CHECK(vjp_error([](Tape&, auto& in) { return relu(in[0]); }, {s}, {away}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return clamp(in[0], -0.05, 0.05); }, {s}, {away}) < kVjpTol);
}

TEST_CASE("reductions and shape ops match finite differences") {
  const auto a = rgtest::randn(24, 4);
  CHECK(vjp_error([](Tape&, auto& in) { return sum(in[0]); }, {{2, 3, 4}}, {a}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return mean(in[0]); }, {{2, 3, 4}}, {a}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return broadcast(in[0], {2, 3, 4}); }, {{2, 1, 4}},
                  {rgtest::randn(8, 5)}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return sum_to(in[0], {1, 3, 1}); }, {{2, 3, 4}}, {a}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return reshape(in[0], {6, 4}); }, {{2, 3, 4}}, {a}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return concat({in[0], in[1]}, 1); }, {{2, 3, 4}, {2, 2, 4}},
                  {a, rgtest::randn(16, 6)}) < kVjpTol);
  CHECK(vjp_error([](Tape&, auto& in) { return slice(in[0], 2, 1, 2); }, {{2, 3, 4}}, {a}) < kVjpTol);
}

TEST_CASE("matmul and conv1d match finite differences") {
  CHECK(vjp_error([](Tape&, auto& in) { return matmul(in[0], in[1]); }, {{3, 5}, {5, 2}},
                  {rgtest::randn(15, 7), rgtest::randn(10, 8)}) < kVjpTol);
  for (std::size_t dil : {1u, 2u, 5u}) {
    CHECK(vjp_error([dil](Tape&, auto& in) { return conv1d(in[0], in[1], in[2], dil); },
                    {{2, 3, 9}, {4, 3, 3}, {4}},
                    {rgtest::randn(54, 9), rgtest::randn(36, 10), rgtest::randn(4, 11)}) < kVjpTol);
  }
}

TEST_CASE("basic identities") {
  Tape tape;
  const auto pos = rgtest::uniform(10, 12, 0.01, 50.0);
  Tensor x = tape.constant({10}, pos);
  Tensor r = exp(log(x));
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(r.data()[i] - pos[i]) < 1e-6 * pos[i]);

  const auto a = rgtest::randn(12, 13);
  std::vector<double> eye(9, 0.0);
  for (std::size_t i = 0; i < 3; ++i) eye[i * 4] = 1.0;
  Tensor ia = matmul(tape.constant({3, 3}, eye), tape.constant({3, 4}, a));
  CHECK(std::vector<double>(ia.data().begin(), ia.data().end()) == a);

  Tape t2;
  const auto xv = rgtest::randn(7, 14);
  Tensor v = t2.variable("x", {7}, xv);
  const Gradients g = t2.backward(sum(mul(v, v)));
  for (std::size_t i = 0; i < 7; ++i) CHECK(g.at("x")[i] == 2.0 * xv[i]);
}

TEST_CASE("unreached leaves get zero gradients") {
  Tape tape;
  Tensor used = tape.variable("used", {3}, {1.0, 2.0, 3.0});
  tape.variable("unused", {2}, {4.0, 5.0});
  const Gradients g = tape.backward(sum(used));
  CHECK(g.at("unused") == std::vector<double>{0.0, 0.0});
  CHECK(g.at("used") == std::vector<double>{1.0, 1.0, 1.0});

  Tape t2;
  Tensor leaf = t2.variable("p", {2}, {1.0, 2.0});
  (void)leaf;
  const Gradients g2 = t2.backward(sum(t2.constant({2}, {3.0, 4.0})));
  CHECK(g2.at("p") == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward is repeatable and inputs are not mutated") {
  Tape tape;
  const auto xv = rgtest::randn(4 * 16, 15);
  const auto wv = rgtest::randn(8 * 4 * 3, 16);
  Tensor x = tape.variable("x", {1, 4, 16}, xv);
  Tensor w = tape.variable("w", {8, 4, 3}, wv);
  Tensor b = tape.variable("b", {8}, std::vector<double>(8, 0.1));
  Tensor loss = mean(square(silu(conv1d(x, w, b, 2))));
  const Gradients g1 = tape.backward(loss);
  const Gradients g2 = tape.backward(loss);
  CHECK(g1 == g2);
  CHECK(std::vector<double>(x.data().begin(), x.data().end()) == xv);
  CHECK(std::vector<double>(w.data().begin(), w.data().end()) == wv);
}

TEST_CASE("error handling") {
  Tape tape;
  Tensor a = tape.variable("a", {2, 3}, std::vector<double>(6, 1.0));
  Tensor b = tape.constant({3, 2}, std::vector<double>(6, 1.0));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(tape.backward(a), ShapeError);
  CHECK_THROWS_AS(log(scale(a, -1.0)), NonFiniteError);
  CHECK_THROWS_AS(div(a, tape.constant({2, 3}, std::vector<double>(6, 0.0))), NonFiniteError);
  CHECK_THROWS_AS(tape.constant({2, 2}, {1.0}), ShapeError);
  CHECK_THROWS_AS(broadcast(a, {3, 3}), ShapeError);
  CHECK_THROWS_AS(slice(a, 1, 2, 2), ShapeError);
  CHECK_THROWS_AS(a.item(), ShapeError);
  Tape other;
  Tensor c = other.constant({2, 3}, std::vector<double>(6, 1.0));
  CHECK_THROWS_AS(add(a, c), Error);
  CHECK_THROWS_AS(tape.backward(sum(c)), Error);
}

TEST_CASE("reparameterized draw differentiates to the unit noise") {
  Tape tape;
  const auto u = rgtest::randn(6, 17);
  Tensor sigma = tape.variable("sigma", {6}, rgtest::uniform(6, 18, 0.1, 2.0));
  Tensor draw = mul(sigma, tape.constant({6}, u));
  const Gradients g = tape.backward(sum(draw));
  CHECK(g.at("sigma") == u);
}
