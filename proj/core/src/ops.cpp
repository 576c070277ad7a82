#include "phaseforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace phaseforge {
namespace {

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b, const char* detail = "") {
    std::string message = std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b);
    if (*detail) message += std::string(" (") + detail + ")";
    throw ShapeError(message);
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) mismatch(op, a.shape(), b.shape());
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& x, std::size_t rank) {
    if (x.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + " input, got shape " +
                         to_string(x.shape()));
    }
}

// C[M,N] += A[M,K] * B[K,N]. Inner loop is an axpy over contiguous rows.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            if (av == T{0}) continue;
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = a[p * m + i];
            if (av == T{0}) continue;
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
std::vector<T> transpose(const T* src, std::size_t rows, std::size_t cols) {
    std::vector<T> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
    return out;
}

struct ConvGeometry {
    std::size_t batch, channels, height, width;
    std::size_t out_channels, kh, kw;
    std::size_t stride, padding;
    std::size_t out_h, out_w;

    std::size_t patch() const { return channels * kh * kw; }
    std::size_t positions() const { return out_h * out_w; }
};

// cols[(c*kh + i)*kw + j, oy*out_w + ox] = x[c, oy*s + i - p, ox*s + j - p]
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* cols) {
    const std::size_t positions = g.positions();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                T* row = cols + ((c * g.kh + i) * g.kw + j) * positions;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.padding);
                    T* dst = row + oy * g.out_w;
                    if (y < 0 || y >= static_cast<long>(g.height)) {
                        std::fill(dst, dst + g.out_w, T{0});
                        continue;
                    }
                    const T* src = image + (c * g.height + static_cast<std::size_t>(y)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long x = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.padding);
                        dst[ox] = (x < 0 || x >= static_cast<long>(g.width)) ? T{0} : src[x];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* image) {
    const std::size_t positions = g.positions();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const T* row = cols + ((c * g.kh + i) * g.kw + j) * positions;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.padding);
                    if (y < 0 || y >= static_cast<long>(g.height)) continue;
                    T* dst = image + (c * g.height + static_cast<std::size_t>(y)) * g.width;
                    const T* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long x = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.padding);
                        if (x >= 0 && x < static_cast<long>(g.width)) dst[x] += src[ox];
                    }
                }
            }
        }
    }
}

// log-softmax of one row, accumulated in double.
template <typename T>
void log_softmax_row(const T* in, T* out, std::size_t k) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) peak = std::max(peak, static_cast<double>(in[j]));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(in[j]) - peak);
    const double log_norm = peak + std::log(total);
    for (std::size_t j = 0; j < k; ++j) out[j] = static_cast<T>(static_cast<double>(in[j]) - log_norm);
}

template <typename T>
std::vector<double> log_softmax_rows_double(const Tensor<T>& logits) {
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    std::vector<double> out(b * k);
    const T* in = logits.data().data();
    for (std::size_t r = 0; r < b; ++r) {
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) peak = std::max(peak, static_cast<double>(in[r * k + j]));
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(in[r * k + j]) - peak);
        const double log_norm = peak + std::log(total);
        for (std::size_t j = 0; j < k; ++j) out[r * k + j] = static_cast<double>(in[r * k + j]) - log_norm;
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("add", a, b);
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor<T>::from_op(a.shape(), std::move(out), "add", {a, b},
                              [](const TensorNode<T>&, std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  for (auto* dst : pg) {
                                      if (!dst) continue;
                                      for (std::size_t i = 0; i < g.size(); ++i) (*dst)[i] += g[i];
                                  }
                              });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("sub", a, b);
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return Tensor<T>::from_op(a.shape(), std::move(out), "sub", {a, b},
                              [](const TensorNode<T>&, std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  if (pg[0])
                                      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                                  if (pg[1])
                                      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
                              });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("mul", a, b);
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor<T>::from_op(
        a.shape(), std::move(out), "mul", {a, b},
        [](const TensorNode<T>& self, std::span<const T> g, std::span<std::vector<T>* const> pg) {
            const auto& lhs = self.parents[0]->data;
            const auto& rhs = self.parents[1]->data;
            if (pg[0])
                for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * rhs[i];
            if (pg[1])
                for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] += g[i] * lhs[i];
        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
    return Tensor<T>::from_op(a.shape(), std::move(out), "scale", {a},
                              [factor](const TensorNode<T>&, std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * factor;
                              });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) mismatch("matmul", a.shape(), b.shape(), "inner dimensions differ");
    std::vector<T> out(m * n, T{0});
    gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
    return Tensor<T>::from_op(
        {m, n}, std::move(out), "matmul", {a, b},
        [m, n, k](const TensorNode<T>& self, std::span<const T> g, std::span<std::vector<T>* const> pg) {
            const auto& lhs = self.parents[0]->data;
            const auto& rhs = self.parents[1]->data;
            if (pg[0]) {
                // dA[M,K] = G[M,N] * B^T
                const auto rhs_t = transpose(rhs.data(), k, n);
                gemm_nn(m, k, n, g.data(), rhs_t.data(), pg[0]->data());
            }
            if (pg[1]) {
                // dB[K,N] = A^T * G
                gemm_tn(k, n, m, lhs.data(), g.data(), pg[1]->data());
            }
        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require_rank("linear", x, 2);
    require_rank("linear", weight, 2);
    const std::size_t batch = x.dim(0), in = x.dim(1), out_features = weight.dim(0);
    if (weight.dim(1) != in) mismatch("linear", x.shape(), weight.shape(), "input features differ");
    if (bias.shape() != Shape{out_features}) mismatch("linear", weight.shape(), bias.shape(), "bias length");

    std::vector<T> out(batch * out_features);
    for (std::size_t r = 0; r < batch; ++r)
        std::copy(bias.data().begin(), bias.data().end(), out.begin() + static_cast<long>(r * out_features));
    const auto weight_t = transpose(weight.data().data(), out_features, in);
    gemm_nn(batch, out_features, in, x.data().data(), weight_t.data(), out.data());

    return Tensor<T>::from_op(
        {batch, out_features}, std::move(out), "linear", {x, weight, bias},
        [batch, in, out_features](const TensorNode<T>& self, std::span<const T> g,
                                  std::span<std::vector<T>* const> pg) {
            const auto& xs = self.parents[0]->data;
            const auto& ws = self.parents[1]->data;
            if (pg[0]) gemm_nn(batch, in, out_features, g.data(), ws.data(), pg[0]->data());
            if (pg[1]) gemm_tn(out_features, in, batch, g.data(), xs.data(), pg[1]->data());
            if (pg[2]) {
                auto& db = *pg[2];
                for (std::size_t r = 0; r < batch; ++r)
                    for (std::size_t o = 0; o < out_features; ++o) db[o] += g[r * out_features + o];
            }
        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dOptions options) {
    require_rank("conv2d", x, 4);
    require_rank("conv2d", weight, 4);
    if (options.stride == 0) throw ShapeError("conv2d: stride must be positive");
    ConvGeometry g{};
    g.batch = x.dim(0);
    g.channels = x.dim(1);
    g.height = x.dim(2);
    g.width = x.dim(3);
    g.out_channels = weight.dim(0);
    g.kh = weight.dim(2);
    g.kw = weight.dim(3);
    g.stride = options.stride;
    g.padding = options.padding;
    if (weight.dim(1) != g.channels) mismatch("conv2d", x.shape(), weight.shape(), "channel count differs");
    if (g.height + 2 * g.padding < g.kh || g.width + 2 * g.padding < g.kw) {
        mismatch("conv2d", x.shape(), weight.shape(), "kernel larger than padded input");
    }
    const bool has_bias = bias.numel() > 0;
    if (has_bias && bias.shape() != Shape{g.out_channels}) {
        mismatch("conv2d", weight.shape(), bias.shape(), "bias length");
    }
    g.out_h = (g.height + 2 * g.padding - g.kh) / g.stride + 1;
    g.out_w = (g.width + 2 * g.padding - g.kw) / g.stride + 1;

    const std::size_t in_image = g.channels * g.height * g.width;
    const std::size_t out_image = g.out_channels * g.positions();
    std::vector<T> out(g.batch * out_image, T{0});
    std::vector<T> cols(g.patch() * g.positions());
    for (std::size_t b = 0; b < g.batch; ++b) {
        T* dst = out.data() + b * out_image;
        if (has_bias) {
            for (std::size_t o = 0; o < g.out_channels; ++o)
                std::fill(dst + o * g.positions(), dst + (o + 1) * g.positions(), bias.data()[o]);
        }
        im2col(g, x.data().data() + b * in_image, cols.data());
        gemm_nn(g.out_channels, g.positions(), g.patch(), weight.data().data(), cols.data(), dst);
    }

    std::vector<Tensor<T>> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return Tensor<T>::from_op(
        {g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out), "conv2d", std::move(inputs),
        [g, in_image, out_image, has_bias](const TensorNode<T>& self, std::span<const T> grad,
                                           std::span<std::vector<T>* const> pg) {
            const auto& xs = self.parents[0]->data;
            const auto& ws = self.parents[1]->data;
            std::vector<T> cols(g.patch() * g.positions());
            std::vector<T> dcols;
            if (pg[0]) dcols.resize(cols.size());
            for (std::size_t b = 0; b < g.batch; ++b) {
                const T* gb = grad.data() + b * out_image;
                if (pg[1]) {
                    im2col(g, xs.data() + b * in_image, cols.data());
                    // dW[O, P] += G[O, N] * cols^T[N, P]
                    const auto cols_t = transpose(cols.data(), g.patch(), g.positions());
                    gemm_nn(g.out_channels, g.patch(), g.positions(), gb, cols_t.data(), pg[1]->data());
                }
                if (pg[0]) {
                    std::fill(dcols.begin(), dcols.end(), T{0});
                    gemm_tn(g.patch(), g.positions(), g.out_channels, ws.data(), gb, dcols.data());
                    col2im(g, dcols.data(), pg[0]->data() + b * in_image);
                }
                if (has_bias && pg[2]) {
                    auto& db = *pg[2];
                    for (std::size_t o = 0; o < g.out_channels; ++o) {
                        T acc{0};
                        for (std::size_t p = 0; p < g.positions(); ++p) acc += gb[o * g.positions() + p];
                        db[o] += acc;
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > T{0} ? x.data()[i] : T{0};
    return Tensor<T>::from_op(x.shape(), std::move(out), "relu", {x},
                              [](const TensorNode<T>& self, std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  const auto& in = self.parents[0]->data;
                                  auto& dx = *pg[0];
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                      if (in[i] > T{0}) dx[i] += g[i];
                              });
}

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, std::size_t kernel) {
    require_rank("avgpool2d", x, 4);
    if (kernel == 0) throw ShapeError("avgpool2d: kernel must be positive");
    const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % kernel != 0 || w % kernel != 0) {
        throw ShapeError("avgpool2d: spatial shape " + to_string(x.shape()) + " not divisible by kernel " +
                         std::to_string(kernel));
    }
    const std::size_t oh = h / kernel, ow = w / kernel;
    const T inv = T{1} / static_cast<T>(kernel * kernel);
    std::vector<T> out(b * c * oh * ow, T{0});
    const T* in = x.data().data();
    for (std::size_t plane = 0; plane < b * c; ++plane) {
        for (std::size_t y = 0; y < h; ++y) {
            const T* src = in + (plane * h + y) * w;
            T* dst = out.data() + (plane * oh + y / kernel) * ow;
            for (std::size_t xi = 0; xi < w; ++xi) dst[xi / kernel] += src[xi];
        }
    }
    for (auto& v : out) v *= inv;
    return Tensor<T>::from_op(
        {b, c, oh, ow}, std::move(out), "avgpool2d", {x},
        [b, c, h, w, oh, ow, kernel, inv](const TensorNode<T>&, std::span<const T> g,
                                          std::span<std::vector<T>* const> pg) {
            auto& dx = *pg[0];
            for (std::size_t plane = 0; plane < b * c; ++plane) {
                for (std::size_t y = 0; y < h; ++y) {
                    const T* src = g.data() + (plane * oh + y / kernel) * ow;
                    T* dst = dx.data() + (plane * h + y) * w;
                    for (std::size_t xi = 0; xi < w; ++xi) dst[xi] += src[xi / kernel] * inv;
                }
            }
        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.numel()) mismatch("reshape", x.shape(), shape, "element count differs");
    return Tensor<T>::from_op(std::move(shape), x.values(), "reshape", {x},
                              [](const TensorNode<T>&, std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  auto& dx = *pg[0];
                                  for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                              });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
    if (x.rank() < 1) throw ShapeError("flatten: scalar input");
    const std::size_t batch = x.dim(0);
    return reshape(x, Shape{batch, batch == 0 ? 0 : x.numel() / batch});
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits) {
    require_rank("log_softmax", logits, 2);
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    std::vector<T> out(b * k);
    for (std::size_t r = 0; r < b; ++r) log_softmax_row(logits.data().data() + r * k, out.data() + r * k, k);
    return Tensor<T>::from_op(
        logits.shape(), std::move(out), "log_softmax", {logits},
        [b, k](const TensorNode<T>& self, std::span<const T> g, std::span<std::vector<T>* const> pg) {
            // d/dz_j = g_j - softmax_j * sum(g)
            auto& dx = *pg[0];
            for (std::size_t r = 0; r < b; ++r) {
                double total = 0.0;
                for (std::size_t j = 0; j < k; ++j) total += g[r * k + j];
                for (std::size_t j = 0; j < k; ++j) {
                    const double p = std::exp(static_cast<double>(self.data[r * k + j]));
                    dx[r * k + j] += static_cast<T>(g[r * k + j] - p * total);
                }
            }
        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    double total = 0.0;
    for (T v : x.data()) total += v;
    return Tensor<T>::from_op({}, {static_cast<T>(total)}, "sum", {x},
                              [](const TensorNode<T>&, std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  for (auto& v : *pg[0]) v += g[0];
                              });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.numel() == 0) throw ShapeError("mean: empty tensor");
    double total = 0.0;
    for (T v : x.data()) total += v;
    const T inv = T{1} / static_cast<T>(x.numel());
    return Tensor<T>::from_op({}, {static_cast<T>(total / static_cast<double>(x.numel()))}, "mean", {x},
                              [inv](const TensorNode<T>&, std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  for (auto& v : *pg[0]) v += g[0] * inv;
                              });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
    require_rank("cross_entropy", logits, 2);
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    if (labels.size() != b) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits of shape " +
                         to_string(logits.shape()));
    }
    if (b == 0) throw ShapeError("cross_entropy: empty batch");
    for (std::size_t r = 0; r < b; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
            throw std::out_of_range("cross_entropy: label " + std::to_string(labels[r]) + " at row " +
                                    std::to_string(r) + " outside [0, " + std::to_string(k) + ")");
        }
    }
    const auto logp = log_softmax_rows_double(logits);
    double total = 0.0;
    for (std::size_t r = 0; r < b; ++r) total -= logp[r * k + static_cast<std::size_t>(labels[r])];
    std::vector<int> owned(labels.begin(), labels.end());
    return Tensor<T>::from_op(
        {}, {static_cast<T>(total / static_cast<double>(b))}, "cross_entropy", {logits},
        [b, k, logp, owned](const TensorNode<T>&, std::span<const T> g, std::span<std::vector<T>* const> pg) {
            auto& dx = *pg[0];
            const double factor = static_cast<double>(g[0]) / static_cast<double>(b);
            for (std::size_t r = 0; r < b; ++r) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double p = std::exp(logp[r * k + j]);
                    const double target = static_cast<std::size_t>(owned[r]) == j ? 1.0 : 0.0;
                    dx[r * k + j] += static_cast<T>(factor * (p - target));
                }
            }
        });
}

template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& p_logits, const Tensor<T>& q_logits) {
    require_rank("kl_divergence", p_logits, 2);
    require_same_shape("kl_divergence", p_logits, q_logits);
    const std::size_t b = p_logits.dim(0), k = p_logits.dim(1);
    if (b == 0) throw ShapeError("kl_divergence: empty batch");
    const auto logp = log_softmax_rows_double(p_logits);
    const auto logq = log_softmax_rows_double(q_logits);
    double total = 0.0;
    for (std::size_t i = 0; i < b * k; ++i) total += std::exp(logp[i]) * (logp[i] - logq[i]);
    // Clamp tiny negative round-off; KL is nonnegative.
    const double value = std::max(0.0, total / static_cast<double>(b));
    return Tensor<T>::from_op(
        {}, {static_cast<T>(value)}, "kl_divergence", {p_logits, q_logits},
        [b, k, logp, logq](const TensorNode<T>&, std::span<const T> g, std::span<std::vector<T>* const> pg) {
            const double factor = static_cast<double>(g[0]) / static_cast<double>(b);
            for (std::size_t r = 0; r < b; ++r) {
                const std::size_t base = r * k;
                if (pg[0]) {
                    // d/dp_j = p_j * ((logp_j - logq_j) - KL_row)
                    double row_kl = 0.0;
                    for (std::size_t j = 0; j < k; ++j)
                        row_kl += std::exp(logp[base + j]) * (logp[base + j] - logq[base + j]);
                    for (std::size_t j = 0; j < k; ++j) {
                        const double pj = std::exp(logp[base + j]);
                        (*pg[0])[base + j] +=
                            static_cast<T>(factor * pj * ((logp[base + j] - logq[base + j]) - row_kl));
                    }
                }
                if (pg[1]) {
                    // d/dq_j = q_j - p_j
                    for (std::size_t j = 0; j < k; ++j) {
                        (*pg[1])[base + j] +=
                            static_cast<T>(factor * (std::exp(logq[base + j]) - std::exp(logp[base + j])));
                    }
                }
            }
        });
}

template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
    require_rank("softmax_rows", logits, 2);
    const auto logp = log_softmax_rows_double(logits);
    std::vector<T> out(logp.size());
    for (std::size_t i = 0; i < logp.size(); ++i) out[i] = static_cast<T>(std::exp(logp[i]));
    return out;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
    require_rank("argmax_rows", logits, 2);
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(b);
    for (std::size_t r = 0; r < b; ++r) {
        const auto row = logits.data().subspan(r * k, k);
        out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

#define PHASEFORGE_INSTANTIATE_OPS(T)                                                              \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> scale(const Tensor<T>&, T);                                                 \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions); \
    template Tensor<T> relu(const Tensor<T>&);                                                     \
    template Tensor<T> avgpool2d(const Tensor<T>&, std::size_t);                                   \
    template Tensor<T> flatten(const Tensor<T>&);                                                  \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
    template Tensor<T> log_softmax(const Tensor<T>&);                                              \
    template Tensor<T> sum(const Tensor<T>&);                                                      \
    template Tensor<T> mean(const Tensor<T>&);                                                     \
    template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                      \
    template Tensor<T> kl_divergence(const Tensor<T>&, const Tensor<T>&);                          \
    template std::vector<T> softmax_rows(const Tensor<T>&);                                        \
    template std::vector<int> argmax_rows(const Tensor<T>&);

PHASEFORGE_INSTANTIATE_OPS(float)
PHASEFORGE_INSTANTIATE_OPS(double)

#undef PHASEFORGE_INSTANTIATE_OPS

}  // namespace phaseforge
