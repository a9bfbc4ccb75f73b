// Serial reference versus OpenMP kernels.

#include <benchmark/benchmark.h>

#include "plume/detector/kernels.hpp"
#include "plume/raster/resample.hpp"
#include "plume/rng.hpp"

using namespace plume;
using namespace plume::detector;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(uniform(rng, -1.0, 1.0));
    return v;
}

void BM_gemm_reference(benchmark::State& st) {
    const int n = static_cast<int>(st.range(0));
    const auto a = random_floats(n * n, 1), b = random_floats(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : st) {
        kernels::gemm_reference(n, n, n, a.data(), false, b.data(), false, c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    st.SetItemsProcessed(st.iterations() * 2LL * n * n * n);
}

void BM_gemm_blocked(benchmark::State& st) {
    const int n = static_cast<int>(st.range(0));
    const auto a = random_floats(n * n, 1), b = random_floats(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : st) {
        kernels::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    st.SetItemsProcessed(st.iterations() * 2LL * n * n * n);
}

void conv(benchmark::State& st, Backend backend) {
    const int ch = static_cast<int>(st.range(0)), size = static_cast<int>(st.range(1));
    Tensor<float> x(4, ch, size, size);
    x.data = random_floats(x.size(), 3);
    const auto w = random_floats(static_cast<std::size_t>(ch) * ch * 9, 4);
    const std::vector<float> bias(ch, 0.1f);
    Tensor<float> y;
    for (auto _ : st) {
        kernels::conv3x3_forward<float>(x, w, bias, ch, y, backend);
        benchmark::DoNotOptimize(y.data.data());
    }
    st.SetItemsProcessed(st.iterations() * 2LL * 9 * ch * ch * size * size * 4);
}
void BM_conv3x3_serial(benchmark::State& st) { conv(st, Backend::Serial); }
void BM_conv3x3_parallel(benchmark::State& st) { conv(st, Backend::Parallel); }

raster::Raster random_raster(int n) {
    Rng rng(5);
    raster::Raster r(n, n);
    for (auto& v : r) v = uniform(rng, 0.0, 0.4);
    return r;
}

void BM_resample_serial(benchmark::State& st) {
    const auto r = random_raster(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(raster::resample_bicubic_serial(r, 2));
}
void BM_resample_parallel(benchmark::State& st) {
    const auto r = random_raster(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(raster::resample_bicubic(r, 2));
}

}  // namespace

BENCHMARK(BM_gemm_reference)->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_blocked)->Arg(64)->Arg(256);
BENCHMARK(BM_conv3x3_serial)->Args({16, 64})->Args({32, 64});
BENCHMARK(BM_conv3x3_parallel)->Args({16, 64})->Args({32, 64});
BENCHMARK(BM_resample_serial)->Arg(100)->Arg(300);
BENCHMARK(BM_resample_parallel)->Arg(100)->Arg(300);

BENCHMARK_MAIN();
