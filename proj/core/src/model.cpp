#include "phaseforge/model.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "phaseforge/ops.hpp"

namespace phaseforge {
namespace {

std::vector<std::size_t> parse_numbers(std::string_view body, std::string_view layer) {
    std::vector<std::size_t> values;
    std::string token;
    std::istringstream in{std::string(body)};
    while (std::getline(in, token, ',')) {
        std::size_t consumed = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(token, &consumed);
        } catch (const std::exception&) {
            consumed = 0;
        }
        if (consumed == 0 || consumed != token.size()) {
            throw std::invalid_argument("architecture: bad number '" + token + "' in layer '" + std::string(layer) + "'");
        }
        values.push_back(static_cast<std::size_t>(v));
    }
    return values;
}

LayerSpec parse_layer(std::string_view text) {
    const auto open = text.find('(');
    const std::string_view head = text.substr(0, open);
    std::vector<std::size_t> args;
    if (open != std::string_view::npos) {
        if (text.back() != ')') throw std::invalid_argument("architecture: unterminated layer '" + std::string(text) + "'");
        args = parse_numbers(text.substr(open + 1, text.size() - open - 2), text);
    }
    auto expect = [&](std::size_t n) {
        if (args.size() != n) {
            throw std::invalid_argument("architecture: layer '" + std::string(text) + "' expects " + std::to_string(n) +
                                        " arguments");
        }
    };
    LayerSpec layer;
    if (head == "conv") {
        expect(5);
        layer = {LayerSpec::Kind::conv, args[0], args[1], args[2], args[3], args[4]};
    } else if (head == "dense") {
        expect(2);
        layer = {LayerSpec::Kind::dense, args[0], args[1], 0, 1, 0};
    } else if (head == "avgpool") {
        expect(1);
        layer = {LayerSpec::Kind::avgpool, 0, 0, args[0], 1, 0};
    } else if (head == "relu") {
        expect(0);
        layer.kind = LayerSpec::Kind::relu;
    } else if (head == "flatten") {
        expect(0);
        layer.kind = LayerSpec::Kind::flatten;
    } else {
        throw std::invalid_argument("architecture: unknown layer '" + std::string(text) + "'");
    }
    return layer;
}

std::string describe_layer(const LayerSpec& layer) {
    std::ostringstream out;
    switch (layer.kind) {
        case LayerSpec::Kind::conv:
            out << "conv(" << layer.in << ',' << layer.out << ',' << layer.kernel << ',' << layer.stride << ','
                << layer.padding << ')';
            break;
        case LayerSpec::Kind::dense: out << "dense(" << layer.in << ',' << layer.out << ')'; break;
        case LayerSpec::Kind::avgpool: out << "avgpool(" << layer.kernel << ')'; break;
        case LayerSpec::Kind::relu: out << "relu"; break;
        case LayerSpec::Kind::flatten: out << "flatten"; break;
    }
    return out.str();
}

bool has_parameters(const LayerSpec& layer) {
    return layer.kind == LayerSpec::Kind::conv || layer.kind == LayerSpec::Kind::dense;
}

Shape weight_shape(const LayerSpec& layer) {
    if (layer.kind == LayerSpec::Kind::conv) return {layer.out, layer.in, layer.kernel, layer.kernel};
    return {layer.out, layer.in};
}

std::size_t fan_in(const LayerSpec& layer) {
    return layer.kind == LayerSpec::Kind::conv ? layer.in * layer.kernel * layer.kernel : layer.in;
}

}  // namespace

std::vector<Shape> Architecture::trace_shapes() const {
    if (input.size() != 3 || numel(input) == 0) {
        throw std::invalid_argument("architecture '" + name + "': input must be a nonempty C x H x W shape, got " +
                                    to_string(input));
    }
    if (layers.empty()) throw std::invalid_argument("architecture '" + name + "': no layers");
    std::vector<Shape> shapes;
    Shape current = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& layer = layers[i];
        const std::string where = "architecture '" + name + "' layer " + std::to_string(i) + " (" + describe_layer(layer) + ")";
        switch (layer.kind) {
            case LayerSpec::Kind::conv: {
                if (current.size() != 3) throw std::invalid_argument(where + ": expects a C x H x W input");
                if (current[0] != layer.in) {
                    throw std::invalid_argument(where + ": input has " + std::to_string(current[0]) + " channels");
                }
                if (layer.kernel == 0 || layer.stride == 0 || layer.out == 0) {
                    throw std::invalid_argument(where + ": kernel, stride and channels must be positive");
                }
                if (current[1] + 2 * layer.padding < layer.kernel || current[2] + 2 * layer.padding < layer.kernel) {
                    throw std::invalid_argument(where + ": kernel larger than padded input " + to_string(current));
                }
                current = {layer.out, (current[1] + 2 * layer.padding - layer.kernel) / layer.stride + 1,
                           (current[2] + 2 * layer.padding - layer.kernel) / layer.stride + 1};
                break;
            }
            case LayerSpec::Kind::avgpool:
                if (current.size() != 3) throw std::invalid_argument(where + ": expects a C x H x W input");
                if (layer.kernel == 0 || current[1] % layer.kernel || current[2] % layer.kernel) {
                    throw std::invalid_argument(where + ": window does not divide " + to_string(current));
                }
                current = {current[0], current[1] / layer.kernel, current[2] / layer.kernel};
                break;
            case LayerSpec::Kind::flatten: current = {numel(current)}; break;
            case LayerSpec::Kind::relu: break;
            case LayerSpec::Kind::dense:
                if (current.size() != 1) throw std::invalid_argument(where + ": expects a flattened input");
                if (current[0] != layer.in) {
                    throw std::invalid_argument(where + ": input has " + std::to_string(current[0]) + " features");
                }
                if (layer.out == 0) throw std::invalid_argument(where + ": zero outputs");
                current = {layer.out};
                break;
        }
        shapes.push_back(current);
    }
    if (shapes.back().size() != 1) {
        throw std::invalid_argument("architecture '" + name + "': final layer must produce class logits");
    }
    return shapes;
}

std::size_t Architecture::classes() const { return trace_shapes().back()[0]; }

std::size_t Architecture::parameter_count() const {
    trace_shapes();
    std::size_t total = 0;
    for (const auto& layer : layers) {
        if (has_parameters(layer)) total += numel(weight_shape(layer)) + layer.out;
    }
    return total;
}

std::string Architecture::describe() const {
    std::ostringstream out;
    out << "input=";
    for (std::size_t i = 0; i < input.size(); ++i) out << (i ? "x" : "") << input[i];
    for (const auto& layer : layers) out << ';' << describe_layer(layer);
    return out.str();
}

Architecture Architecture::parse(std::string_view text) {
    Architecture arch;
    arch.name = "custom";
    std::size_t start = 0;
    bool first = true;
    while (start <= text.size()) {
        auto end = text.find(';', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view token = text.substr(start, end - start);
        start = end + 1;
        if (token.empty()) {
            if (end == text.size()) break;
            continue;
        }
        if (first) {
            first = false;
            if (token.substr(0, 6) != "input=") throw std::invalid_argument("architecture: must start with input=CxHxW");
            std::string dims(token.substr(6));
            for (auto& ch : dims)
                if (ch == 'x') ch = ',';
            arch.input = parse_numbers(dims, token);
            continue;
        }
        arch.layers.push_back(parse_layer(token));
        if (end == text.size()) break;
    }
    arch.trace_shapes();
    return arch;
}

Architecture preset_architecture(std::string_view name, const Shape& input) {
    if (input.size() != 3) throw std::invalid_argument("preset: input must be C x H x W");
    const std::size_t c = input[0], h = input[1], w = input[2];
    Architecture arch;
    arch.name = std::string(name);
    arch.input = input;
    using K = LayerSpec::Kind;
    if (name == "linear-k2") {
        arch.layers = {{K::flatten}, {K::dense, c * h * w, 2}};
    } else if (name == "smallcnn-k4") {
        // Two stride-2 convolutions keep an epoch on a few thousand 32x32 images in seconds.
        arch.layers = {{K::conv, c, 8, 3, 2, 1}, {K::relu},    {K::conv, 8, 16, 3, 2, 1},
                       {K::relu},                {K::avgpool, 0, 0, 2}, {K::flatten},
                       {K::dense, 16 * (h / 8) * (w / 8), 4}};
    } else if (name == "smallcnn-k10") {
        arch.layers = {{K::conv, c, 16, 3, 1, 1},  {K::relu}, {K::avgpool, 0, 0, 2},
                       {K::conv, 16, 48, 3, 1, 1}, {K::relu}, {K::avgpool, 0, 0, 2},
                       {K::conv, 48, 96, 3, 1, 1}, {K::relu}, {K::avgpool, 0, 0, 2},
                       {K::flatten},               {K::dense, 96 * (h / 8) * (w / 8), 10}};
    } else {
        throw std::invalid_argument("unknown architecture preset '" + std::string(name) + "'");
    }
    arch.trace_shapes();
    return arch;
}

std::vector<std::string> preset_names() { return {"linear-k2", "smallcnn-k4", "smallcnn-k10"}; }

template <typename T>
Model<T>::Model(Architecture architecture, std::vector<Parameter<T>> parameters)
    : architecture_(std::move(architecture)), parameters_(std::move(parameters)) {}

template <typename T>
Model<T>::Model(const Model& other) : architecture_(other.architecture_) {
    parameters_.reserve(other.parameters_.size());
    for (const auto& p : other.parameters_) parameters_.push_back({p.name, p.value.clone(true)});
}

template <typename T>
Model<T>& Model<T>::operator=(const Model& other) {
    if (this != &other) {
        Model copy(other);
        *this = std::move(copy);
    }
    return *this;
}

template <typename T>
Model<T> Model<T>::build(const Architecture& architecture, std::uint64_t seed) {
    architecture.trace_shapes();
    std::mt19937_64 rng(seed);
    std::vector<Parameter<T>> params;
    for (std::size_t i = 0; i < architecture.layers.size(); ++i) {
        const auto& layer = architecture.layers[i];
        if (!has_parameters(layer)) continue;
        const Shape shape = weight_shape(layer);
        // U(-1/sqrt(fan_in), 1/sqrt(fan_in)). He-normal made initial logits
        // large enough that adversarial training collapsed to dead ReLUs.
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(layer)));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        std::vector<T> weights(numel(shape));
        for (auto& v : weights) v = static_cast<T>(uniform(rng));
        const std::string prefix = "layer" + std::to_string(i) + ".";
        params.push_back({prefix + "weight", Tensor<T>(shape, std::move(weights), true)});
        params.push_back({prefix + "bias", Tensor<T>::zeros({layer.out}, true)});
    }
    return Model(architecture, std::move(params));
}

template <typename T>
Model<T> Model<T>::from_parameters(Architecture architecture, std::vector<Parameter<T>> parameters) {
    architecture.trace_shapes();
    std::size_t next = 0;
    for (std::size_t i = 0; i < architecture.layers.size(); ++i) {
        const auto& layer = architecture.layers[i];
        if (!has_parameters(layer)) continue;
        const std::string prefix = "layer" + std::to_string(i) + ".";
        const Shape expected[2] = {weight_shape(layer), Shape{layer.out}};
        const char* suffix[2] = {"weight", "bias"};
        for (int k = 0; k < 2; ++k, ++next) {
            if (next >= parameters.size()) throw std::invalid_argument("model: missing parameter " + prefix + suffix[k]);
            auto& p = parameters[next];
            if (p.name != prefix + suffix[k] || p.value.shape() != expected[k]) {
                throw std::invalid_argument("model: parameter '" + p.name + "' of shape " + to_string(p.value.shape()) +
                                            " where " + prefix + suffix[k] + " of shape " + to_string(expected[k]) +
                                            " was expected");
            }
            p.value = p.value.clone(true);
        }
    }
    if (next != parameters.size()) throw std::invalid_argument("model: unexpected extra parameters");
    return Model(std::move(architecture), std::move(parameters));
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : parameters_) total += p.value.numel();
    return total;
}

template <typename T>
const Parameter<T>& Model<T>::parameter(std::string_view name) const {
    for (const auto& p : parameters_)
        if (p.name == name) return p;
    throw std::out_of_range("model: no parameter named '" + std::string(name) + "'");
}

template <typename T>
Parameter<T>& Model<T>::parameter(std::string_view name) {
    return const_cast<Parameter<T>&>(static_cast<const Model&>(*this).parameter(name));
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& batch, ParamGrad mode) const {
    const Shape& in = architecture_.input;
    if (batch.rank() != 4 || batch.dim(1) != in[0] || batch.dim(2) != in[1] || batch.dim(3) != in[2]) {
        throw ShapeError("model '" + architecture_.name + "': batch shape " + to_string(batch.shape()) +
                         " does not match input " + to_string(in));
    }
    auto param = [&](std::size_t index) {
        const auto& value = parameters_[index].value;
        return mode == ParamGrad::on ? value : value.detach();
    };
    Tensor<T> x = batch;
    std::size_t next = 0;
    for (const auto& layer : architecture_.layers) {
        switch (layer.kind) {
            case LayerSpec::Kind::conv:
                x = conv2d(x, param(next), param(next + 1), Conv2dOptions{layer.stride, layer.padding});
                next += 2;
                break;
            case LayerSpec::Kind::dense:
                x = linear(x, param(next), param(next + 1));
                next += 2;
                break;
            case LayerSpec::Kind::relu: x = relu(x); break;
            case LayerSpec::Kind::avgpool: x = avgpool2d(x, layer.kernel); break;
            case LayerSpec::Kind::flatten: x = flatten(x); break;
        }
    }
    return x;
}

template <typename T>
std::vector<int> Model<T>::predict(const Tensor<T>& batch) const {
    return argmax_rows(forward(batch));
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
    std::vector<Parameter<U>> params;
    for (const auto& p : parameters_) {
        std::vector<U> values(p.value.data().begin(), p.value.data().end());
        params.push_back({p.name, Tensor<U>(p.value.shape(), std::move(values), true)});
    }
    return Model<U>::from_parameters(architecture_, std::move(params));
}

template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

}  // namespace phaseforge
