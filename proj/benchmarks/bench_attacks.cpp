#include <benchmark/benchmark.h>

#include <random>

#include "phaseforge/attacks.hpp"

using namespace phaseforge;

// One PGD step is one forward and one input-gradient backward per batch.
static void BM_PgdStep(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 1);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> v(batch * 3 * 32 * 32);
    for (auto& x : v) x = u(rng);
    const Tensor32 x({batch, 3, 32, 32}, v);
    std::vector<int> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<int>(i % 4);
    const AttackConfig config{AttackKind::pgd, 8.0 / 255.0, 2.0 / 255.0, 1, false};
    Rng attack_rng(0);
    for (auto _ : state) benchmark::DoNotOptimize(pgd(model, x, labels, config, attack_rng));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PgdStep)->Arg(1)->Arg(64);
