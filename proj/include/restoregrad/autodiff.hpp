#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

// Minimal reverse-mode differentiation over dense 64-bit arrays.
//
// A Tape owns every value computed in one forward pass. Tensors are cheap
// handles (tape, node id). Nodes are appended in creation order, which is a
// topological order, so backward() is a single reverse sweep. Every op
// checks its output for NaN/Inf and throws NonFiniteError naming the op.

namespace restoregrad::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::span<const double> data() const;
  bool requires_grad() const;
  // Value of a single-element tensor.
  double item() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradients of named leaves, keyed by leaf name.
using Gradients = std::map<std::string, std::vector<double>>;

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> values);
  Tensor scalar(double value) { return constant({}, {value}); }
  // A named leaf that receives a gradient.
  Tensor variable(std::string name, Shape shape, std::vector<double> values);

  // Reverse sweep from a scalar loss. Every named leaf appears in the
  // result; leaves the loss does not reach get zeros. May be called more
  // than once; each call starts from cleared adjoints.
  Gradients backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

  // --- op plumbing ---
  // Appends a node computed from `inputs`. The backward rule is kept only
  // when some input requires a gradient.
  Tensor record(const char* op, Shape shape, std::vector<double> value,
                std::initializer_list<Tensor> inputs, BackwardFn backward);
  Tensor record(const char* op, Shape shape, std::vector<double> value,
                const std::vector<Tensor>& inputs, BackwardFn backward);

  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
  const std::vector<double>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Adjoint buffer of a node, allocated (zeroed) on first use.
  std::vector<double>& grad(std::size_t id);
  const std::vector<double>& grad_of(std::size_t id) const { return grads_[id]; }

  void check_owned(const Tensor& t, const char* op) const;

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    std::string name;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

// --- primitives ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor square(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// Sum / mean of all elements, giving a rank-0 tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Same-rank broadcast: every axis of `a` equals the target or is 1.
Tensor broadcast(const Tensor& a, const Shape& shape);
// Adjoint of broadcast: sums over the axes where `shape` is 1.
Tensor sum_to(const Tensor& a, const Shape& shape);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

// a [m, k] x b [k, n].
Tensor matmul(const Tensor& a, const Tensor& b);
// x [B, Cin, L], w [Cout, Cin, K], bias [Cout]; "same" zero padding.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t dilation = 1);

}  // namespace restoregrad::ad
