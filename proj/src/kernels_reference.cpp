#include "restoregrad/kernels.hpp"

namespace restoregrad::kernels::reference {

namespace {

long tap_offset(const Conv1dDims& d, std::size_t k) {
  return (static_cast<long>(k) - static_cast<long>(d.kernel / 2)) * static_cast<long>(d.dilation);
}

}  // namespace

void conv1d_forward(const Conv1dDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out) {
  const long L = static_cast<long>(d.length);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      for (long l = 0; l < L; ++l) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const long src = l + tap_offset(d, k);
            if (src < 0 || src >= L) continue;
            acc += w[(co * d.in_channels + ci) * d.kernel + k] *
                   x[(b * d.in_channels + ci) * d.length + static_cast<std::size_t>(src)];
          }
        }
        out[(b * d.out_channels + co) * d.length + static_cast<std::size_t>(l)] = acc;
      }
    }
  }
}

void conv1d_backward_input(const Conv1dDims& d, std::span<const double> w,
                           std::span<const double> grad_out, std::span<double> grad_x) {
  const long L = static_cast<long>(d.length);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      for (long l = 0; l < L; ++l) {
        const double g = grad_out[(b * d.out_channels + co) * d.length + static_cast<std::size_t>(l)];
        for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const long src = l + tap_offset(d, k);
            if (src < 0 || src >= L) continue;
            grad_x[(b * d.in_channels + ci) * d.length + static_cast<std::size_t>(src)] +=
                g * w[(co * d.in_channels + ci) * d.kernel + k];
          }
        }
      }
    }
  }
}

void conv1d_backward_weight(const Conv1dDims& d, std::span<const double> x,
                            std::span<const double> grad_out, std::span<double> grad_w,
                            std::span<double> grad_bias) {
  const long L = static_cast<long>(d.length);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      for (long l = 0; l < L; ++l) {
        const double g = grad_out[(b * d.out_channels + co) * d.length + static_cast<std::size_t>(l)];
        if (!grad_bias.empty()) grad_bias[co] += g;
        if (grad_w.empty()) continue;
        for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const long src = l + tap_offset(d, k);
            if (src < 0 || src >= L) continue;
            grad_w[(co * d.in_channels + ci) * d.kernel + k] +=
                g * x[(b * d.in_channels + ci) * d.length + static_cast<std::size_t>(src)];
          }
        }
      }
    }
  }
}

void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
            std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void matmul_grad_a(std::size_t m, std::size_t k, std::size_t n, std::span<const double> g,
                   std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[i * k + p] += g[i * n + j] * b[p * n + j];
}

void matmul_grad_b(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
                   std::span<const double> g, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[p * n + j] += a[i * k + p] * g[i * n + j];
}

}  // namespace restoregrad::kernels::reference
