#include <benchmark/benchmark.h>

#include <random>

#include "phaseforge/model.hpp"
#include "phaseforge/ops.hpp"

using namespace phaseforge;

namespace {

Tensor32 random_batch(std::size_t batch) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> v(batch * 3 * 32 * 32);
    for (auto& x : v) x = u(rng);
    return Tensor32({batch, 3, 32, 32}, v);
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
    const auto x = random_batch(static_cast<std::size_t>(state.range(0)));
    std::vector<float> w(8 * 3 * 3 * 3, 0.1f), b(8, 0.0f);
    const Tensor32 weight({8, 3, 3, 3}, w), bias({8}, b);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, weight, bias, {1, 1}));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(64);

static void BM_Conv2dBackward(benchmark::State& state) {
    const auto x = random_batch(static_cast<std::size_t>(state.range(0)));
    std::vector<float> w(8 * 3 * 3 * 3, 0.1f), b(8, 0.0f);
    const Tensor32 weight({8, 3, 3, 3}, w, true), bias({8}, b, true);
    for (auto _ : state) {
        const auto loss = sum(conv2d(x.clone(true), weight, bias, {1, 1}));
        benchmark::DoNotOptimize(backward(loss));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv2dBackward)->Arg(1)->Arg(64);

static void BM_SmallCnnForward(benchmark::State& state) {
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 1);
    const auto x = random_batch(64);
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_SmallCnnForward);
