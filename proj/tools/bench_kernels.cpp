// Kernel benchmarks: OpenMP-parallel implementations vs the serial
// reference, at the shapes the model actually runs.
//
//   ./duat_bench                      # all benchmarks
//   ./duat_bench --benchmark_filter=conv

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "duat/kernels.hpp"
#include "duat/reference.hpp"

namespace {

std::vector<double> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) {
    v = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  }
  return out;
}

using duat::kernels::Conv2dDims;

// Stage-1 patch embed shape (7x7/4 over a 64x64 RGB image).
const Conv2dDims kEmbedDims{4, 3, 64, 64, 32, 7, 7, 4, 3, 1};
// Boundary fusion conv (3x3 over the stride-4 grid, 64 -> 32).
const Conv2dDims kFuseDims{4, 64, 16, 16, 32, 3, 3, 1, 1, 1};
// Local-attention depthwise conv.
const Conv2dDims kDepthwiseDims{4, 32, 16, 16, 32, 3, 3, 1, 1, 32};

void bench_conv(benchmark::State& state, const Conv2dDims& d, bool parallel) {
  const auto x = random_buffer(static_cast<std::size_t>(d.n) * d.ci * d.hi * d.wi, 1);
  const auto w =
      random_buffer(static_cast<std::size_t>(d.co) * (d.ci / d.groups) * d.kh * d.kw, 2);
  const auto b = random_buffer(static_cast<std::size_t>(d.co), 3);
  std::vector<double> y(static_cast<std::size_t>(d.n) * d.co * d.ho() * d.wo());
  for (auto _ : state) {
    if (parallel) {
      duat::kernels::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d);
    } else {
      duat::ref::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d);
    }
    benchmark::DoNotOptimize(y.data());
    benchmark::ClobberMemory();
  }
}

void bench_matmul(benchmark::State& state, bool parallel) {
  // Stage-1 attention geometry: 4 heads' worth of 256-token query rows.
  const int batch = 8, p = 256, k = 32, q = 256;
  const auto a = random_buffer(static_cast<std::size_t>(batch) * p * k, 4);
  const auto b = random_buffer(static_cast<std::size_t>(batch) * k * q, 5);
  std::vector<double> c(static_cast<std::size_t>(batch) * p * q);
  for (auto _ : state) {
    if (parallel) {
      duat::kernels::matmul(a.data(), b.data(), c.data(), batch, p, k, q, false, false);
    } else {
      duat::ref::matmul(a.data(), b.data(), c.data(), batch, p, k, q, false, false);
    }
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
}

void bench_resize(benchmark::State& state, bool parallel) {
  const int planes = 4 * 32, hi = 16, wi = 16, ho = 64, wo = 64;
  const auto x = random_buffer(static_cast<std::size_t>(planes) * hi * wi, 6);
  std::vector<double> y(static_cast<std::size_t>(planes) * ho * wo);
  for (auto _ : state) {
    if (parallel) {
      duat::kernels::resize_bilinear_forward(x.data(), y.data(), planes, hi, wi, ho, wo);
    } else {
      duat::ref::resize_bilinear_forward(x.data(), y.data(), planes, hi, wi, ho, wo);
    }
    benchmark::DoNotOptimize(y.data());
    benchmark::ClobberMemory();
  }
}

void bench_softmax(benchmark::State& state, bool parallel) {
  const std::int64_t outer = 8 * 256, len = 256, inner = 1;
  const auto x = random_buffer(static_cast<std::size_t>(outer * len), 7);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    if (parallel) {
      duat::kernels::softmax(x.data(), y.data(), outer, len, inner);
    } else {
      duat::ref::softmax(x.data(), y.data(), outer, len, inner);
    }
    benchmark::DoNotOptimize(y.data());
    benchmark::ClobberMemory();
  }
}

void bench_box_mean(benchmark::State& state, bool parallel) {
  const int planes = 4, h = 64, w = 64, r = 3;
  const auto m = random_buffer(static_cast<std::size_t>(planes) * h * w, 8);
  std::vector<double> out(m.size());
  for (auto _ : state) {
    if (parallel) {
      duat::kernels::box_mean(m.data(), out.data(), planes, h, w, r);
    } else {
      duat::ref::box_mean(m.data(), out.data(), planes, h, w, r);
    }
    benchmark::DoNotOptimize(out.data());
    benchmark::ClobberMemory();
  }
}

}  // namespace

BENCHMARK_CAPTURE(bench_conv, embed_omp, kEmbedDims, true);
BENCHMARK_CAPTURE(bench_conv, embed_serial_ref, kEmbedDims, false);
BENCHMARK_CAPTURE(bench_conv, fuse3x3_omp, kFuseDims, true);
BENCHMARK_CAPTURE(bench_conv, fuse3x3_serial_ref, kFuseDims, false);
BENCHMARK_CAPTURE(bench_conv, depthwise_omp, kDepthwiseDims, true);
BENCHMARK_CAPTURE(bench_conv, depthwise_serial_ref, kDepthwiseDims, false);
BENCHMARK_CAPTURE(bench_matmul, attention_omp, true);
BENCHMARK_CAPTURE(bench_matmul, attention_serial_ref, false);
BENCHMARK_CAPTURE(bench_resize, upsample_omp, true);
BENCHMARK_CAPTURE(bench_resize, upsample_serial_ref, false);
BENCHMARK_CAPTURE(bench_softmax, rows_omp, true);
BENCHMARK_CAPTURE(bench_softmax, rows_serial_ref, false);
BENCHMARK_CAPTURE(bench_box_mean, weights_omp, true);
BENCHMARK_CAPTURE(bench_box_mean, weights_serial_ref, false);

BENCHMARK_MAIN();
