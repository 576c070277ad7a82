#pragma once

#include <cstddef>
#include <span>

#include "phaseforge/tensor.hpp"

namespace phaseforge {

// Elementwise arithmetic; operands must have identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

/// [M, K] x [K, N] -> [M, N]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Dense layer: x [B, in], weight [out, in], bias [out] -> [B, out].
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// x [B, C, H, W], weight [O, C, kh, kw], bias [O] (or empty tensor) -> [B, O, OH, OW].
/// Zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dOptions options = {});

template <typename T> Tensor<T> relu(const Tensor<T>& x);

/// Non-overlapping average pooling with window = stride = `kernel`. H and W
/// must be divisible by the kernel.
template <typename T> Tensor<T> avgpool2d(const Tensor<T>& x, std::size_t kernel);

/// [B, ...] -> [B, prod(...)]
template <typename T> Tensor<T> flatten(const Tensor<T>& x);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Row-wise log-softmax of a [B, K] tensor, computed with max subtraction.
template <typename T> Tensor<T> log_softmax(const Tensor<T>& logits);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

/// Mean over the batch of -log softmax(logits)[label].
template <typename T> Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// Mean over the batch of KL(softmax(p) || softmax(q)).
template <typename T> Tensor<T> kl_divergence(const Tensor<T>& p_logits, const Tensor<T>& q_logits);

/// Row-wise softmax values (no graph).
template <typename T> std::vector<T> softmax_rows(const Tensor<T>& logits);

/// Row-wise argmax (no graph).
template <typename T> std::vector<int> argmax_rows(const Tensor<T>& logits);

}  // namespace phaseforge
