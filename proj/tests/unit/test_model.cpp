#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "phaseforge/model.hpp"
#include "phaseforge/ops.hpp"

using namespace phaseforge;

namespace {

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; }
std::size_t dense_params(std::size_t in, std::size_t out) { return in * out + out; }

Tensor64 random_batch(std::mt19937_64& rng, std::size_t b, const Shape& input) {
    Shape shape{b};
    shape.insert(shape.end(), input.begin(), input.end());
    return Tensor64(shape, oracle::uniform_values(rng, numel(shape), 0.0, 1.0));
}

std::vector<std::size_t> sample_indices(std::mt19937_64& rng, std::size_t n, std::size_t count) {
    std::vector<std::size_t> out;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < std::min(n, count); ++i) out.push_back(n <= count ? i : pick(rng));
    return out;
}

}  // namespace

TEST(Architecture, PresetParameterCounts) {
    EXPECT_EQ(preset_architecture("linear-k2").parameter_count(), dense_params(3 * 32 * 32, 2));
    EXPECT_EQ(preset_architecture("smallcnn-k4").parameter_count(),
              conv_params(3, 8, 3) + conv_params(8, 16, 3) + dense_params(16 * 4 * 4, 4));
    EXPECT_EQ(preset_architecture("smallcnn-k10").parameter_count(),
              conv_params(3, 16, 3) + conv_params(16, 48, 3) + conv_params(48, 96, 3) + dense_params(96 * 4 * 4, 10));
    EXPECT_THROW(preset_architecture("resnet-50"), std::invalid_argument);
}

TEST(Architecture, TextFormRoundTrips) {
    for (const auto& name : preset_names()) {
        const auto arch = preset_architecture(name);
        auto parsed = Architecture::parse(arch.describe());
        parsed.name = arch.name;
        EXPECT_EQ(parsed, arch) << name;
    }
}

TEST(Architecture, TraceShapesAndMismatches) {
    const auto arch = Architecture::parse("input=3x8x8;conv(3,4,3,1,1);relu;avgpool(2);flatten;dense(64,3)");
    const auto shapes = arch.trace_shapes();
    EXPECT_EQ(shapes.back(), (Shape{3}));
    EXPECT_EQ(arch.classes(), 3u);
    EXPECT_THROW(Architecture::parse("input=3x8x8;conv(2,4,3,1,1);flatten;dense(256,3)"), std::invalid_argument);
    EXPECT_THROW(Architecture::parse("input=3x8x8;flatten;dense(100,3)"), std::invalid_argument);
    EXPECT_THROW(Architecture::parse("input=3x8x8;pool(2)"), std::invalid_argument);
    EXPECT_THROW(Architecture::parse("conv(3,4,3,1,1)"), std::invalid_argument);
}

TEST(Model, BuildIsDeterministicInSeed) {
    const auto arch = preset_architecture("smallcnn-k4");
    const auto a = Model32::build(arch, 7);
    const auto b = Model32::build(arch, 7);
    const auto c = Model32::build(arch, 8);
    ASSERT_EQ(a.parameters().size(), b.parameters().size());
    bool differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        EXPECT_EQ(a.parameters()[i].value.values(), b.parameters()[i].value.values());
        differs = differs || a.parameters()[i].value.values() != c.parameters()[i].value.values();
    }
    EXPECT_TRUE(differs);
    for (float bias : a.parameter("layer0.bias").value.data()) EXPECT_EQ(bias, 0.0f);
}

TEST(Model, CopiesAreDeep) {
    auto a = Model32::build(preset_architecture("linear-k2", {1, 4, 4}), 1);
    auto b = a;
    b.parameter("layer1.weight").value.mutable_data()[0] += 1.0f;
    EXPECT_NE(a.parameter("layer1.weight").value.at(0), b.parameter("layer1.weight").value.at(0));
}

TEST(Model, ForwardShapesAndErrors) {
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 3);
    const auto logits = model.forward(Tensor32::zeros({5, 3, 32, 32}));
    EXPECT_EQ(logits.shape(), (Shape{5, 4}));
    EXPECT_THROW(model.forward(Tensor32::zeros({5, 3, 16, 16})), ShapeError);
    EXPECT_EQ(model.predict(Tensor32::zeros({2, 3, 32, 32})).size(), 2u);
}

TEST(Model, ForwardDoesNotTrackParametersByDefault) {
    const auto model = Model64::build(preset_architecture("linear-k2", {1, 2, 2}), 3);
    Tensor64 x({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4}, true);
    const std::vector<int> y{1};
    const auto grads = backward(cross_entropy(model.forward(x), y));
    EXPECT_EQ(grads.size(), 1u);
}

TEST(Model, CastPreservesValues) {
    const auto m = Model32::build(preset_architecture("smallcnn-k4"), 4);
    const auto d = m.cast<double>();
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
        for (std::size_t j = 0; j < m.parameters()[i].value.numel(); ++j) {
            EXPECT_EQ(static_cast<double>(m.parameters()[i].value.at(j)), d.parameters()[i].value.at(j));
        }
    }
}

TEST(Model, FromParametersValidatesShapes) {
    auto m = Model32::build(preset_architecture("linear-k2", {1, 2, 2}), 1);
    std::vector<Parameter<float>> params(m.parameters().begin(), m.parameters().end());
    params[0].value = Tensor32::zeros({3, 4});
    EXPECT_THROW(Model32::from_parameters(m.architecture(), params), std::invalid_argument);
    params.pop_back();
    EXPECT_THROW(Model32::from_parameters(m.architecture(), params), std::invalid_argument);
}

TEST(Model, SmallCnnGradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(21);
    auto model = Model64::build(preset_architecture("smallcnn-k4"), 5);
    const auto x = random_batch(rng, 2, model.architecture().input);
    const std::vector<int> y{1, 3};

    const Tensor64 input = x.clone(true);
    const auto grads = backward(cross_entropy(model.forward(input, ParamGrad::on), y));

    auto loss_at = [&]() { return cross_entropy(model.forward(x), y).item(); };
    for (auto& p : model.parameters()) {
        const auto analytic = grads.of(p.value);
        auto f = [&](std::span<const double> values) {
            const std::vector<double> saved = p.value.values();
            std::copy(values.begin(), values.end(), p.value.mutable_data().begin());
            const double loss = loss_at();
            std::copy(saved.begin(), saved.end(), p.value.mutable_data().begin());
            return loss;
        };
        const auto idx = sample_indices(rng, p.value.numel(), 60);
        EXPECT_LT(oracle::max_gradient_error(f, p.value.values(), analytic, idx), 1e-4) << p.name;
    }

    auto f_input = [&](std::span<const double> values) {
        return cross_entropy(model.forward(Tensor64(x.shape(), {values.begin(), values.end()})), y).item();
    };
    const auto idx = sample_indices(rng, x.numel(), 200);
    EXPECT_LT(oracle::max_gradient_error(f_input, x.data(), grads.of(input), idx), 1e-4);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto m = Model32::build(preset_architecture("smallcnn-k4"), 9);
    const auto bytes = serialize_checkpoint(m);
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back.architecture(), m.architecture());
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
        EXPECT_EQ(back.parameters()[i].name, m.parameters()[i].name);
        EXPECT_EQ(back.parameters()[i].value.values(), m.parameters()[i].value.values());
    }
    EXPECT_EQ(serialize_checkpoint(back), bytes);

    const auto path = std::filesystem::temp_directory_path() / "phaseforge_checkpoint_test.bin";
    save_checkpoint(m, path);
    EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), bytes);
    std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptInput) {
    const auto bytes = serialize_checkpoint(Model32::build(preset_architecture("linear-k2", {1, 2, 2}), 1));
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_THROW(deserialize_checkpoint(truncated), std::runtime_error);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bad_magic), std::runtime_error);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(deserialize_checkpoint(trailing), std::runtime_error);
    EXPECT_THROW(load_checkpoint("/nonexistent/phaseforge.ckpt"), std::runtime_error);
}
