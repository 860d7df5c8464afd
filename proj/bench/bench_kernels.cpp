// Parallel kernels against their serial references at training shapes:
// batch 16, 32 channels, length 256, kernel 3.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <vector>

#include "restoregrad/kernels.hpp"
#include "restoregrad/rng.hpp"

namespace k = restoregrad::kernels;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t counter) {
  restoregrad::Rng rng(5, restoregrad::Stream::kTest, counter);
  std::vector<double> v(n);
  rng.fill_normal(v);
  return v;
}

k::Conv1dDims dims(benchmark::State& state) {
  k::Conv1dDims d;
  d.batch = 16;
  d.in_channels = 32;
  d.out_channels = 32;
  d.length = static_cast<std::size_t>(state.range(0));
  d.kernel = 3;
  d.dilation = 4;
  return d;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto d = dims(state);
  const auto x = noise(d.batch * d.in_channels * d.length, 1);
  const auto w = noise(d.out_channels * d.in_channels * d.kernel, 2);
  const auto b = noise(d.out_channels, 3);
  std::vector<double> out(d.batch * d.out_channels * d.length);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv1d_forward(d, x, w, b, out);
    else
      k::reference::conv1d_forward(d, x, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(out.size() * d.in_channels * d.kernel));
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto d = dims(state);
  const auto x = noise(d.batch * d.in_channels * d.length, 1);
  const auto w = noise(d.out_channels * d.in_channels * d.kernel, 2);
  const auto g = noise(d.batch * d.out_channels * d.length, 4);
  std::vector<double> gx(x.size()), gw(w.size()), gb(d.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::conv1d_backward_input(d, w, g, gx);
      k::conv1d_backward_weight(d, x, g, gw, gb);
    } else {
      k::reference::conv1d_backward_input(d, w, g, gx);
      k::reference::conv1d_backward_weight(d, x, g, gw, gb);
    }
    benchmark::DoNotOptimize(gx.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(16 * n, 5), b = noise(n * n, 6);
  std::vector<double> c(16 * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::matmul(16, n, n, a, b, c);
    else
      k::reference::matmul(16, n, n, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Arg(256)->Arg(1024);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Arg(256)->Arg(1024);
BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(256)->Arg(512);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(256)->Arg(512);

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  benchmark::AddCustomContext("omp_max_threads", std::to_string(omp_get_max_threads()));
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
