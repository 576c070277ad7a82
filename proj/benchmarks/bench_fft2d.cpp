#include <benchmark/benchmark.h>

#include <random>

#include "phaseforge/fft2d.hpp"
#include "phaseforge/spectrum.hpp"

using namespace phaseforge;

namespace {

std::vector<double> random_channel(std::size_t n) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

Image random_image(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image image(3, 32, 32);
    for (auto& p : image.pixels) p = u(rng);
    return image;
}

}  // namespace

// Power-of-two sides take the radix-2 path, the rest direct summation.
static void BM_Dft2(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    const auto x = random_channel(side * side);
    for (auto _ : state) benchmark::DoNotOptimize(dft2(std::span<const double>(x), side, side));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Dft2)->Arg(8)->Arg(16)->Arg(31)->Arg(32)->Arg(64);

static void BM_RoundTrip32(benchmark::State& state) {
    const auto x = random_channel(32 * 32);
    for (auto _ : state) benchmark::DoNotOptimize(idft2(dft2(std::span<const double>(x), 32, 32)));
}
BENCHMARK(BM_RoundTrip32);

static void BM_AdversarialAmplitudeSwap(benchmark::State& state) {
    const Image x = random_image(1), x_adv = random_image(2);
    for (auto _ : state) benchmark::DoNotOptimize(adversarial_amplitude_swap(x, x_adv));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_AdversarialAmplitudeSwap);
BENCHMARK_MAIN();
