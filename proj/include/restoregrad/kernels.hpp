#pragma once

#include <cstddef>
#include <span>

// Dense compute kernels behind the autodiff engine.
//
// The functions in restoregrad::kernels are OpenMP-parallel. Every output
// element is produced by exactly one thread with a fixed summation order, so
// results are bit-reproducible and do not depend on the thread count or on
// the batch size. restoregrad::kernels::reference holds plain serial loops
// kept as the ground truth for tests and the benchmark.

namespace restoregrad::kernels {

// "Same" 1-D convolution, stride 1, zero padding. Layouts:
//   x [batch, in_channels, length], w [out_channels, in_channels, kernel],
//   bias [out_channels], out [batch, out_channels, length].
// kernel must be odd; tap k reads x[l + (k - kernel/2) * dilation].
struct Conv1dDims {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t length = 1;
  std::size_t kernel = 1;
  std::size_t dilation = 1;
};

// out = conv(x, w) + bias (overwrites out).
void conv1d_forward(const Conv1dDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out);
// grad_x += conv^T(grad_out, w).
void conv1d_backward_input(const Conv1dDims& d, std::span<const double> w,
                           std::span<const double> grad_out, std::span<double> grad_x);
// grad_w += correlation of grad_out with x; grad_bias += sum of grad_out.
// Either output may be empty to skip it.
void conv1d_backward_weight(const Conv1dDims& d, std::span<const double> x,
                            std::span<const double> grad_out, std::span<double> grad_w,
                            std::span<double> grad_bias);

// c = a[m,k] * b[k,n] (overwrites c).
void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
            std::span<const double> b, std::span<double> c);
// c[m,k] += g[m,n] * b[k,n]^T.
void matmul_grad_a(std::size_t m, std::size_t k, std::size_t n, std::span<const double> g,
                   std::span<const double> b, std::span<double> c);
// c[k,n] += a[m,k]^T * g[m,n].
void matmul_grad_b(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
                   std::span<const double> g, std::span<double> c);

namespace reference {

void conv1d_forward(const Conv1dDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out);
void conv1d_backward_input(const Conv1dDims& d, std::span<const double> w,
                           std::span<const double> grad_out, std::span<double> grad_x);
void conv1d_backward_weight(const Conv1dDims& d, std::span<const double> x,
                            std::span<const double> grad_out, std::span<double> grad_w,
                            std::span<double> grad_bias);
void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
            std::span<const double> b, std::span<double> c);
void matmul_grad_a(std::size_t m, std::size_t k, std::size_t n, std::span<const double> g,
                   std::span<const double> b, std::span<double> c);
void matmul_grad_b(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
                   std::span<const double> g, std::span<double> c);

}  // namespace reference

}  // namespace restoregrad::kernels
