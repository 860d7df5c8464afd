#include "restoregrad/autodiff.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <numeric>

#include "restoregrad/error.hpp"
#include "restoregrad/kernels.hpp"

namespace restoregrad::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------- Tensor

const Shape& Tensor::shape() const { return tape_->shape(id_); }
std::size_t Tensor::size() const { return tape_->value(id_).size(); }
std::span<const double> Tensor::data() const { return tape_->value(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return data()[0];
}

// ------------------------------------------------------------------ Tape

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  return record("constant", std::move(shape), std::move(values), std::vector<Tensor>{}, nullptr);
}

Tensor Tape::variable(std::string name, Shape shape, std::vector<double> values) {
  Tensor t = record("variable", std::move(shape), std::move(values), std::vector<Tensor>{}, nullptr);
  nodes_[t.id_].requires_grad = true;
  nodes_[t.id_].name = std::move(name);
  return t;
}

Tensor Tape::record(const char* op, Shape shape, std::vector<double> value,
                    std::initializer_list<Tensor> inputs, BackwardFn backward) {
  return record(op, std::move(shape), std::move(value), std::vector<Tensor>(inputs),
                std::move(backward));
}

Tensor Tape::record(const char* op, Shape shape, std::vector<double> value,
                    const std::vector<Tensor>& inputs, BackwardFn backward) {
  if (value.size() != numel(shape))
    throw ShapeError(std::string(op) + ": value length does not match shape " + shape_string(shape));
  for (double v : value) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string(op) + " produced a non-finite value");
  }
  bool needs_grad = false;
  for (const Tensor& in : inputs) {
    check_owned(in, op);
    needs_grad = needs_grad || nodes_[in.id_].requires_grad;
  }
  Node node;
  node.shape = std::move(shape);
  node.value = std::move(value);
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

void Tape::check_owned(const Tensor& t, const char* op) const {
  if (t.tape_ != this || t.id_ >= nodes_.size())
    throw Error(std::string(op) + ": tensor belongs to a different tape");
}

std::vector<double>& Tape::grad(std::size_t id) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
  return g;
}

Gradients Tape::backward(const Tensor& loss) {
  check_owned(loss, "backward");
  if (loss.size() != 1)
    throw ShapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  grads_.assign(nodes_.size(), {});
  grad(loss.id_)[0] = 1.0;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    if (grads_[id].empty() || !nodes_[id].backward) continue;
    nodes_[id].backward(*this, id);
  }
  Gradients out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.name.empty()) continue;
    if (grads_[id].empty()) {
      out[n.name].assign(n.value.size(), 0.0);
    } else {
      out[n.name] = grads_[id];
    }
  }
  return out;
}

// ------------------------------------------------------------ primitives

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.valid() || !b.valid()) throw Error(std::string(op) + ": invalid tensor");
  a.tape().check_owned(b, op);
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

// Elementwise unary op; `deriv(x, y)` is dy/dx given input x and output y.
template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(op, a.shape(), std::move(y), {a}, [ia, deriv](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& xv = t.value(ia);
    const auto& yv = t.value(self);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

struct Index4 {
  std::array<std::size_t, 4> dims{1, 1, 1, 1};
  std::array<std::size_t, 4> in_strides{0, 0, 0, 0};
};

// Pads both shapes to rank 4 and computes input strides with zero stride on
// broadcast axes.
Index4 broadcast_index(const Shape& in, const Shape& out, const char* op) {
  if (in.size() != out.size() || out.size() > 4)
    throw ShapeError(std::string(op) + ": cannot map " + shape_string(in) + " to " + shape_string(out));
  Index4 ix;
  const std::size_t pad = 4 - out.size();
  std::size_t stride = 1;
  for (std::size_t i = out.size(); i-- > 0;) {
    if (in[i] != out[i] && in[i] != 1)
      throw ShapeError(std::string(op) + ": cannot map " + shape_string(in) + " to " +
                       shape_string(out));
    ix.dims[pad + i] = out[i];
    ix.in_strides[pad + i] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return ix;
}

// Calls f(out_offset, in_offset) for every element of the broadcast output.
template <class F>
void for_each_broadcast(const Index4& ix, F f) {
  std::size_t o = 0;
  for (std::size_t i0 = 0; i0 < ix.dims[0]; ++i0)
    for (std::size_t i1 = 0; i1 < ix.dims[1]; ++i1)
      for (std::size_t i2 = 0; i2 < ix.dims[2]; ++i2) {
        const std::size_t base =
            i0 * ix.in_strides[0] + i1 * ix.in_strides[1] + i2 * ix.in_strides[2];
        for (std::size_t i3 = 0; i3 < ix.dims[3]; ++i3) f(o++, base + i3 * ix.in_strides[3]);
      }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("add", a.shape(), std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    for (std::size_t id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      auto& gi = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("sub", a.shape(), std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("mul", a.shape(), std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& xv = t.value(ia);
    const auto& yv = t.value(ib);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xv[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("div", a.shape(), std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& yv = t.value(ib);
    const auto& q = t.value(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / yv[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * q[i] / yv[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  return unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
  // The sigmoid is kept for the backward rule so exp runs once per element.
  const auto x = a.data();
  auto sig = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x[i]));
    (*sig)[i] = s;
    y[i] = x[i] * s;
  }
  const std::size_t ia = a.id();
  return a.tape().record("silu", a.shape(), std::move(y), {a}, [ia, sig](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& xv = t.value(ia);
    const auto& sv = *sig;
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv[i] * (1.0 + xv[i] * (1.0 - sv[i]));
  });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  const auto x = a.data();
  double s = 0.0;
  for (double v : x) s += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", {}, {s}, {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    for (double& v : t.grad(ia)) v += g;
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor broadcast(const Tensor& a, const Shape& shape) {
  const Index4 ix = broadcast_index(a.shape(), shape, "broadcast");
  const auto x = a.data();
  std::vector<double> out(numel(shape));
  for_each_broadcast(ix, [&](std::size_t o, std::size_t i) { out[o] = x[i]; });
  const std::size_t ia = a.id();
  return a.tape().record("broadcast", shape, std::move(out), {a}, [ia, ix](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad(ia);
    for_each_broadcast(ix, [&](std::size_t o, std::size_t i) { ga[i] += g[o]; });
  });
}

Tensor sum_to(const Tensor& a, const Shape& shape) {
  const Index4 ix = broadcast_index(shape, a.shape(), "sum_to");
  const auto x = a.data();
  std::vector<double> out(numel(shape), 0.0);
  for_each_broadcast(ix, [&](std::size_t o, std::size_t i) { out[i] += x[o]; });
  const std::size_t ia = a.id();
  return a.tape().record("sum_to", shape, std::move(out), {a}, [ia, ix](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad(ia);
    for_each_broadcast(ix, [&](std::size_t o, std::size_t i) { ga[o] += g[i]; });
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  const auto x = a.data();
  const std::size_t ia = a.id();
  return a.tape().record("reshape", std::move(shape), std::vector<double>(x.begin(), x.end()), {a},
                         [ia](Tape& t, std::size_t self) {
                           const auto& g = t.grad_of(self);
                           auto& ga = t.grad(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    out_shape[axis] += s[axis];
    s[axis] = first[axis];
    if (s != first) throw ShapeError("concat: shapes differ off the concat axis");
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> ids, widths, starts;
  std::size_t start = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    const auto x = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.begin() + static_cast<long>(o * w), w, out.begin() + static_cast<long>(o * out_row + start));
    ids.push_back(p.id());
    widths.push_back(w);
    starts.push_back(start);
    start += w;
  }
  return parts[0].tape().record(
      "concat", out_shape, std::move(out), parts,
      [ids, widths, starts, outer, out_row](Tape& t, std::size_t self) {
        const auto& g = t.grad_of(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (!t.requires_grad(ids[p])) continue;
          auto& gp = t.grad(ids[p]);
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < widths[p]; ++i) gp[o * widths[p] + i] += g[o * out_row + starts[p] + i];
        }
      });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& in = a.shape();
  if (axis >= in.size() || start + length > in[axis])
    throw ShapeError("slice: range out of bounds for " + shape_string(in));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  Shape out_shape = in;
  out_shape[axis] = length;
  const std::size_t in_row = in[axis] * inner, w = length * inner, off = start * inner;
  const auto x = a.data();
  std::vector<double> out(outer * w);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.begin() + static_cast<long>(o * in_row + off), w, out.begin() + static_cast<long>(o * w));
  const std::size_t ia = a.id();
  return a.tape().record("slice", out_shape, std::move(out), {a},
                         [ia, outer, in_row, w, off](Tape& t, std::size_t self) {
                           const auto& g = t.grad_of(self);
                           auto& ga = t.grad(ia);
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t i = 0; i < w; ++i) ga[o * in_row + off + i] += g[o * w + i];
                         });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  a.tape().check_owned(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::matmul(m, k, n, a.data(), b.data(), out);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", {m, n}, std::move(out), {a, b},
                         [ia, ib, m, k, n](Tape& t, std::size_t self) {
                           const auto& g = t.grad_of(self);
                           if (t.requires_grad(ia)) kernels::matmul_grad_a(m, k, n, g, t.value(ib), t.grad(ia));
                           if (t.requires_grad(ib)) kernels::matmul_grad_b(m, k, n, t.value(ia), g, t.grad(ib));
                         });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t dilation) {
  x.tape().check_owned(w, "conv1d");
  x.tape().check_owned(bias, "conv1d");
  if (x.rank() != 3 || w.rank() != 3 || bias.rank() != 1 || w.dim(1) != x.dim(1) ||
      bias.dim(0) != w.dim(0) || w.dim(2) % 2 == 0 || dilation == 0)
    throw ShapeError("conv1d: x " + shape_string(x.shape()) + ", w " + shape_string(w.shape()) +
                     ", bias " + shape_string(bias.shape()));
  kernels::Conv1dDims d;
  d.batch = x.dim(0);
  d.in_channels = x.dim(1);
  d.length = x.dim(2);
  d.out_channels = w.dim(0);
  d.kernel = w.dim(2);
  d.dilation = dilation;
  std::vector<double> out(d.batch * d.out_channels * d.length);
  kernels::conv1d_forward(d, x.data(), w.data(), bias.data(), out);
  const std::size_t ix = x.id(), iw = w.id(), ib = bias.id();
  return x.tape().record(
      "conv1d", {d.batch, d.out_channels, d.length}, std::move(out), {x, w, bias},
      [d, ix, iw, ib](Tape& t, std::size_t self) {
        const auto& g = t.grad_of(self);
        if (t.requires_grad(ix)) kernels::conv1d_backward_input(d, t.value(iw), g, t.grad(ix));
        std::span<double> gw, gb;
        if (t.requires_grad(iw)) gw = t.grad(iw);
        if (t.requires_grad(ib)) gb = t.grad(ib);
        if (!gw.empty() || !gb.empty()) kernels::conv1d_backward_weight(d, t.value(ix), g, gw, gb);
      });
}

}  // namespace restoregrad::ad
