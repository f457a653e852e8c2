// Parallel kernels against their serial references on network-sized inputs.

#include <benchmark/benchmark.h>

#include "tse/kernels.hpp"
#include "tse/rng.hpp"

namespace {

using namespace tse;
namespace k = tse::kernels;

Tensor random_tensor(Shape s, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(s);
    for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

template <bool Reference>
void BM_Conv3x3(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    const Tensor x = random_tensor({1, 16, side, side}, 1);
    const Tensor w = random_tensor({16, 16, 3, 3}, 2);
    const Tensor b = random_tensor({16, 1, 1, 1}, 3);
    for (auto _ : state) {
        Tensor y = Reference ? k::reference::conv2d(x, w, b, {1, 1}) : k::conv2d(x, w, b, {1, 1});
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(side * side * 16 * 16 * 9));
}

template <bool Reference>
void BM_ConvGradInput(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    const Shape xs{1, 16, side, side};
    const Tensor g = random_tensor(xs, 4);
    const Tensor w = random_tensor({16, 16, 3, 3}, 5);
    for (auto _ : state) {
        Tensor y = Reference ? k::reference::conv2d_grad_input(g, w, xs, {1, 1}) : k::conv2d_grad_input(g, w, xs, {1, 1});
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Reference>
void BM_Median(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const Tensor x = random_tensor({1, c, 64, 64}, 6);
    for (auto _ : state) {
        auto r = Reference ? k::reference::median_channels(x) : k::median_channels(x);
        benchmark::DoNotOptimize(r.value.data());
    }
}

template <bool Reference>
void BM_Resize(benchmark::State& state) {
    const k::ResizeRatio ratio{static_cast<int>(state.range(0)), static_cast<int>(state.range(1))};
    const Tensor x = random_tensor({1, 16, 64, 64}, 7);
    for (auto _ : state) {
        Tensor y = Reference ? k::reference::resize_bilinear(x, ratio) : k::resize_bilinear(x, ratio);
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(BM_Conv3x3<false>)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv3x3<true>)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvGradInput<false>)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvGradInput<true>)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Median<false>)->Arg(3)->Arg(8)->Arg(16);
BENCHMARK(BM_Median<true>)->Arg(3)->Arg(8)->Arg(16);
BENCHMARK(BM_Resize<false>)->Args({1, 2})->Args({2, 1});
BENCHMARK(BM_Resize<true>)->Args({1, 2})->Args({2, 1});

BENCHMARK_MAIN();
