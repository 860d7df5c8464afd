#include "restoregrad/kernels.hpp"

#include <algorithm>
#include <vector>

namespace restoregrad::kernels {

namespace {

constexpr std::size_t kRowBlock = 4;

constexpr std::size_t kTile = 32;

// Zero-padded copy of one batch item: rows of pad + length + pad + kTile.
struct Padded {
  std::vector<double> data;
  std::size_t pad = 0;
  std::size_t stride = 0;
};

void pad_rows(const double* src, std::size_t rows, std::size_t length, std::size_t pad, Padded& p) {
  p.pad = pad;
  p.stride = length + 2 * pad + kTile;
  p.data.assign(rows * p.stride, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(src + r * length, src + (r + 1) * length, p.data.data() + r * p.stride + pad);
}

// R output rows times one kTile-wide strip, accumulated in registers over
// every (input row, tap). The accumulators start from `init` (bias or the
// existing output), so the summation order per element is fixed:
// init, then input rows ascending, then taps ascending.
template <std::size_t R>
void conv_strip(const Padded& xp, std::size_t in_rows, std::size_t kernel, std::size_t dilation,
                const double* __restrict w, std::size_t w_row, std::size_t l0, std::size_t valid,
                const double* init_bias, double* const* out_rows, bool accumulate) {
  double acc[R][kTile];
  for (std::size_t j = 0; j < R; ++j)
    for (std::size_t i = 0; i < kTile; ++i)
      acc[j][i] = accumulate ? (i < valid ? out_rows[j][l0 + i] : 0.0)
                             : (init_bias ? init_bias[j] : 0.0);
  const long half = static_cast<long>(kernel / 2);
  for (std::size_t ci = 0; ci < in_rows; ++ci) {
    const double* xr = xp.data.data() + ci * xp.stride + xp.pad + l0;
    for (std::size_t k = 0; k < kernel; ++k) {
      const double* __restrict xs = xr + (static_cast<long>(k) - half) * static_cast<long>(dilation);
      double wv[R];
      for (std::size_t j = 0; j < R; ++j) wv[j] = w[j * w_row + ci * kernel + k];
      for (std::size_t j = 0; j < R; ++j) {
#pragma omp simd
        for (std::size_t i = 0; i < kTile; ++i) acc[j][i] += wv[j] * xs[i];
      }
    }
  }
  for (std::size_t j = 0; j < R; ++j)
    for (std::size_t i = 0; i < valid; ++i) out_rows[j][l0 + i] = acc[j][i];
}

constexpr std::size_t kTapBlock = 3;
constexpr std::size_t kLanes = 8;

// grad_w[co0 + j, ci, k0 + q] += sum_b sum_l g[b, co0 + j, l] x[b, ci, l + off(k0 + q)]
// for an R x Q block. Partial sums are kept per lane and reduced in a fixed
// order at the end.
template <std::size_t R, std::size_t Q>
void weight_block(const Conv1dDims& d, const std::vector<Padded>& xp, const double* grad_out,
                  std::size_t co0, std::size_t ci, std::size_t k0, double* grad_w) {
  const std::size_t L = d.length;
  const long half = static_cast<long>(d.kernel / 2);
  double acc[R][Q][kLanes] = {};
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* xr = xp[b].data.data() + ci * xp[b].stride + xp[b].pad;
    const double* xs[Q];
    for (std::size_t q = 0; q < Q; ++q)
      xs[q] = xr + (static_cast<long>(k0 + q) - half) * static_cast<long>(d.dilation);
    const double* g[R];
    for (std::size_t j = 0; j < R; ++j) g[j] = grad_out + (b * d.out_channels + co0 + j) * L;
    for (std::size_t l = 0; l < L; l += kLanes) {
      const std::size_t n = std::min(kLanes, L - l);
      if (n == kLanes) {
        for (std::size_t j = 0; j < R; ++j)
          for (std::size_t q = 0; q < Q; ++q) {
#pragma omp simd
            for (std::size_t v = 0; v < kLanes; ++v) acc[j][q][v] += g[j][l + v] * xs[q][l + v];
          }
      } else {
        for (std::size_t j = 0; j < R; ++j)
          for (std::size_t q = 0; q < Q; ++q)
            for (std::size_t v = 0; v < n; ++v) acc[j][q][v] += g[j][l + v] * xs[q][l + v];
      }
    }
  }
  for (std::size_t j = 0; j < R; ++j)
    for (std::size_t q = 0; q < Q; ++q) {
      double s = 0.0;
      for (std::size_t v = 0; v < kLanes; ++v) s += acc[j][q][v];
      grad_w[((co0 + j) * d.in_channels + ci) * d.kernel + k0 + q] += s;
    }
}

// out[b, co, :] (=|+=) sum_ci sum_k w[co, ci, k] x[b, ci, : + (k - K/2) * dil].
void conv_tiled(std::size_t batch, std::size_t in_rows, std::size_t out_rows, std::size_t length,
                std::size_t kernel, std::size_t dilation, const double* x, const double* w,
                const double* bias, double* out, bool accumulate) {
  const std::size_t pad = (kernel / 2) * dilation;
  const std::size_t w_row = in_rows * kernel;
#pragma omp parallel
  {
    Padded xp;
#pragma omp for schedule(static)
    for (long bl = 0; bl < static_cast<long>(batch); ++bl) {
      const std::size_t b = static_cast<std::size_t>(bl);
      pad_rows(x + b * in_rows * length, in_rows, length, pad, xp);
      double* ob = out + b * out_rows * length;
      std::size_t co = 0;
      for (; co + kRowBlock <= out_rows; co += kRowBlock) {
        double* rows[kRowBlock];
        for (std::size_t j = 0; j < kRowBlock; ++j) rows[j] = ob + (co + j) * length;
        for (std::size_t l0 = 0; l0 < length; l0 += kTile)
          conv_strip<kRowBlock>(xp, in_rows, kernel, dilation, w + co * w_row, w_row, l0,
                                std::min(kTile, length - l0), bias ? bias + co : nullptr, rows,
                                accumulate);
      }
      for (; co < out_rows; ++co) {
        double* rows[1] = {ob + co * length};
        for (std::size_t l0 = 0; l0 < length; l0 += kTile)
          conv_strip<1>(xp, in_rows, kernel, dilation, w + co * w_row, w_row, l0,
                        std::min(kTile, length - l0), bias ? bias + co : nullptr, rows, accumulate);
      }
    }
  }
}

}  // namespace

void conv1d_forward(const Conv1dDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out) {
  conv_tiled(d.batch, d.in_channels, d.out_channels, d.length, d.kernel, d.dilation, x.data(),
             w.data(), bias.empty() ? nullptr : bias.data(), out.data(), false);
}

void conv1d_backward_input(const Conv1dDims& d, std::span<const double> w,
                           std::span<const double> grad_out, std::span<double> grad_x) {
  // Transposed, tap-reversed weights turn the adjoint into a forward conv.
  std::vector<double> wt(w.size());
  for (std::size_t co = 0; co < d.out_channels; ++co)
    for (std::size_t ci = 0; ci < d.in_channels; ++ci)
      for (std::size_t k = 0; k < d.kernel; ++k)
        wt[(ci * d.out_channels + co) * d.kernel + (d.kernel - 1 - k)] =
            w[(co * d.in_channels + ci) * d.kernel + k];
  conv_tiled(d.batch, d.out_channels, d.in_channels, d.length, d.kernel, d.dilation,
             grad_out.data(), wt.data(), nullptr, grad_x.data(), true);
}

void conv1d_backward_weight(const Conv1dDims& d, std::span<const double> x,
                            std::span<const double> grad_out, std::span<double> grad_w,
                            std::span<double> grad_bias) {
  const std::size_t L = d.length;
  if (!grad_w.empty()) {
    const std::size_t pad = (d.kernel / 2) * d.dilation;
    std::vector<Padded> xp(d.batch);
    for (std::size_t b = 0; b < d.batch; ++b)
      pad_rows(x.data() + b * d.in_channels * L, d.in_channels, L, pad, xp[b]);
    const std::size_t blocks = (d.out_channels + kRowBlock - 1) / kRowBlock;
    const long total = static_cast<long>(blocks * d.in_channels);
#pragma omp parallel for schedule(static)
    for (long task = 0; task < total; ++task) {
      const std::size_t co0 = (static_cast<std::size_t>(task) / d.in_channels) * kRowBlock;
      const std::size_t ci = static_cast<std::size_t>(task) % d.in_channels;
      const std::size_t rows = std::min(kRowBlock, d.out_channels - co0);
      for (std::size_t k0 = 0; k0 < d.kernel; k0 += kTapBlock) {
        const std::size_t taps = std::min(kTapBlock, d.kernel - k0);
        if (rows == kRowBlock && taps == kTapBlock)
          weight_block<kRowBlock, kTapBlock>(d, xp, grad_out.data(), co0, ci, k0, grad_w.data());
        else
          for (std::size_t j = 0; j < rows; ++j)
            for (std::size_t k = k0; k < k0 + taps; ++k)
              weight_block<1, 1>(d, xp, grad_out.data(), co0 + j, ci, k, grad_w.data());
      }
    }
  }
  if (!grad_bias.empty()) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      double acc = 0.0;
      for (std::size_t b = 0; b < d.batch; ++b) {
        const double* gr = grad_out.data() + (b * d.out_channels + co) * L;
#pragma omp simd reduction(+ : acc)
        for (std::size_t l = 0; l < L; ++l) acc += gr[l];
      }
      grad_bias[co] += acc;
    }
  }
}

void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
            std::span<const double> b, std::span<double> c) {
#pragma omp parallel for schedule(static)
  for (long il = 0; il < static_cast<long>(m); ++il) {
    const std::size_t i = static_cast<std::size_t>(il);
    double* __restrict ci = c.data() + i * n;
    std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* __restrict bp = b.data() + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_grad_a(std::size_t m, std::size_t k, std::size_t n, std::span<const double> g,
                   std::span<const double> b, std::span<double> c) {
#pragma omp parallel for schedule(static)
  for (long il = 0; il < static_cast<long>(m); ++il) {
    const std::size_t i = static_cast<std::size_t>(il);
    const double* __restrict gi = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* __restrict bp = b.data() + p * n;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
      c[i * k + p] += acc;
    }
  }
}

void matmul_grad_b(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
                   std::span<const double> g, std::span<double> c) {
#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < static_cast<long>(k); ++pl) {
    const std::size_t p = static_cast<std::size_t>(pl);
    double* __restrict cp = c.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* __restrict gi = g.data() + i * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * gi[j];
    }
  }
}

}  // namespace restoregrad::kernels
