#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phaseforge/tensor.hpp"

namespace phaseforge {

struct LayerSpec {
    enum class Kind { conv, relu, avgpool, flatten, dense };

    Kind kind = Kind::relu;
    std::size_t in = 0;       // conv: input channels, dense: input features
    std::size_t out = 0;      // conv: output channels, dense: output features
    std::size_t kernel = 0;   // conv: square kernel, avgpool: window
    std::size_t stride = 1;   // conv only
    std::size_t padding = 0;  // conv only

    bool operator==(const LayerSpec&) const = default;
};

/// Layer list plus the per-example input shape it was designed for.
///
/// Text form (stored in checkpoints):
///   input=3x32x32;conv(3,8,3,2,1);relu;avgpool(2);flatten;dense(256,4)
/// where conv takes (in, out, kernel, stride, padding).
struct Architecture {
    std::string name;
    Shape input;  // C, H, W
    std::vector<LayerSpec> layers;

    /// Output shape of every layer for a single example; throws
    /// std::invalid_argument when channel counts or feature sizes do not chain.
    std::vector<Shape> trace_shapes() const;
    std::size_t classes() const;
    std::size_t parameter_count() const;

    std::string describe() const;
    static Architecture parse(std::string_view text);

    bool operator==(const Architecture&) const = default;
};

/// Named presets: "linear-k2", "smallcnn-k4", "smallcnn-k10".
Architecture preset_architecture(std::string_view name, const Shape& input = {3, 32, 32});
std::vector<std::string> preset_names();

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
};

enum class ParamGrad { off, on };

/// Differentiable classifier. Copies are deep.
template <typename T>
class Model {
public:
    /// Weights uniform in +-1/sqrt(fan_in), zero biases; deterministic in seed.
    static Model build(const Architecture& architecture, std::uint64_t seed);
    static Model from_parameters(Architecture architecture, std::vector<Parameter<T>> parameters);

    Model(const Model& other);
    Model& operator=(const Model& other);
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    /// [B, C, H, W] -> [B, K] logits. With ParamGrad::on the parameters are
    /// recorded as graph leaves so `backward` yields their gradients.
    Tensor<T> forward(const Tensor<T>& batch, ParamGrad mode = ParamGrad::off) const;
    std::vector<int> predict(const Tensor<T>& batch) const;

    const Architecture& architecture() const { return architecture_; }
    std::size_t classes() const { return architecture_.classes(); }
    std::size_t parameter_count() const;

    std::span<Parameter<T>> parameters() { return parameters_; }
    std::span<const Parameter<T>> parameters() const { return parameters_; }
    const Parameter<T>& parameter(std::string_view name) const;
    Parameter<T>& parameter(std::string_view name);

    template <typename U>
    Model<U> cast() const;

private:
    Model(Architecture architecture, std::vector<Parameter<T>> parameters);

    Architecture architecture_;
    std::vector<Parameter<T>> parameters_;
};

using Model32 = Model<float>;
using Model64 = Model<double>;

/// Binary checkpoint: magic, format version, architecture text, then each
/// parameter as name, rank, dims and little-endian float32 values.
std::vector<std::uint8_t> serialize_checkpoint(const Model<float>& model);
Model<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace phaseforge
