// Serial reference kernels against their OpenMP counterparts. Run with
// OMP_NUM_THREADS set to compare thread counts; the serial rows are the
// baseline.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "flowfuse/kernels.hpp"

namespace kernels = flowfuse::kernels;

namespace {

std::vector<double> uniform(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

template <bool Omp>
void BM_Warp(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const std::size_t n = static_cast<std::size_t>(side) * side;
  const auto src = uniform(n * 3, 1, 0.0, 1.0);
  const auto fu = uniform(n, 2, -4.0, 4.0), fv = uniform(n, 3, -4.0, 4.0);
  std::vector<double> out(n * 3);
  std::vector<std::uint8_t> valid(n);
  const kernels::WarpArgs args{src, side, side, 3, fu, fv, out, valid};
  for (auto _ : state) {
    if constexpr (Omp) {
      kernels::omp::warp_bilinear(args);
    } else {
      kernels::serial::warp_bilinear(args);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <bool Omp>
void BM_HsSweep(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const std::size_t n = static_cast<std::size_t>(side) * side;
  const auto u = uniform(n, 4, -1, 1), v = uniform(n, 5, -1, 1);
  const auto ix = uniform(n, 6, -1, 1), iy = uniform(n, 7, -1, 1), it = uniform(n, 8, -1, 1);
  std::vector<double> uo(n), vo(n);
  const kernels::HsSweepArgs args{side, side, 0.0035, u, v, u, v, ix, iy, it, uo, vo};
  for (auto _ : state) {
    if constexpr (Omp) {
      kernels::omp::hs_sweep(args);
    } else {
      kernels::serial::hs_sweep(args);
    }
    benchmark::DoNotOptimize(uo.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <bool Omp>
void BM_BoxSum(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const std::size_t n = static_cast<std::size_t>(side) * side;
  const auto src = uniform(n, 9, -1, 1);
  std::vector<double> out(n);
  const kernels::BoxSumArgs args{src, side, side, 4, out};
  for (auto _ : state) {
    if constexpr (Omp) {
      kernels::omp::box_sum(args);
    } else {
      kernels::serial::box_sum(args);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

// The middle encoder layer of the fusion net on a batch of four 64x64 crops.
kernels::ConvGeometry conv_geometry(int side) { return {4, 16, side / 2, side / 2, 32, 3, 2, 1}; }

template <bool Omp>
void BM_ConvForward(benchmark::State& state) {
  const kernels::ConvGeometry g = conv_geometry(static_cast<int>(state.range(0)));
  const auto x = uniform(static_cast<std::size_t>(g.batch) * g.in_channels * g.in_height * g.in_width, 10, -1, 1);
  const auto w = uniform(static_cast<std::size_t>(g.out_channels) * g.in_channels * 9, 11, -1, 1);
  const auto b = uniform(g.out_channels, 12, -1, 1);
  std::vector<double> y(static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    if constexpr (Omp) {
      kernels::omp::conv2d_forward(g, x, w, b, y);
    } else {
      kernels::serial::conv2d_forward(g, x, w, b, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Omp>
void BM_ConvBackward(benchmark::State& state) {
  const kernels::ConvGeometry g = conv_geometry(static_cast<int>(state.range(0)));
  const std::size_t nx = static_cast<std::size_t>(g.batch) * g.in_channels * g.in_height * g.in_width;
  const std::size_t nw = static_cast<std::size_t>(g.out_channels) * g.in_channels * 9;
  const std::size_t ny = static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width();
  const auto x = uniform(nx, 13, -1, 1), w = uniform(nw, 14, -1, 1), go = uniform(ny, 15, -1, 1);
  std::vector<double> gx(nx), gw(nw), gb(g.out_channels);
  for (auto _ : state) {
    if constexpr (Omp) {
      kernels::omp::conv2d_backward(g, x, w, go, gx, gw, gb);
    } else {
      kernels::serial::conv2d_backward(g, x, w, go, gx, gw, gb);
    }
    benchmark::DoNotOptimize(gw.data());
  }
}

}  // namespace

BENCHMARK(BM_Warp<false>)->Name("warp/serial")->Arg(96)->Arg(256);
BENCHMARK(BM_Warp<true>)->Name("warp/omp")->Arg(96)->Arg(256);
BENCHMARK(BM_HsSweep<false>)->Name("hs_sweep/serial")->Arg(96)->Arg(256);
BENCHMARK(BM_HsSweep<true>)->Name("hs_sweep/omp")->Arg(96)->Arg(256);
BENCHMARK(BM_BoxSum<false>)->Name("box_sum/serial")->Arg(96)->Arg(256);
BENCHMARK(BM_BoxSum<true>)->Name("box_sum/omp")->Arg(96)->Arg(256);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Arg(64);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/omp")->Arg(64);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Arg(64);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/omp")->Arg(64);
BENCHMARK_MAIN();
