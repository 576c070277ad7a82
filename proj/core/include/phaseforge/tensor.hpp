#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace phaseforge {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Thrown when operands of a tensor operation are not conformable.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename T>
struct TensorNode;

template <typename T>
using BackwardFn = std::function<void(const TensorNode<T>& self, std::span<const T> grad_out,
                                      std::span<std::vector<T>* const> parent_grads)>;

// Storage plus the recorded operation that produced it. A node with a
// backward function is an interior graph node; otherwise it is a leaf.
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    BackwardFn<T> backward;

    bool is_leaf() const { return !backward; }
};

/// Dense row-major tensor with optional gradient tracking.
///
/// Copies are shallow: two Tensor handles may refer to the same node. Values
/// of nodes that were produced by a recorded operation are immutable; leaves
/// may be updated in place between graph constructions (optimizer steps).
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor();
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value);

    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const T> data() const { return node_->data; }
    /// Writable access; only permitted on leaves.
    std::span<T> mutable_data();
    const std::vector<T>& values() const { return node_->data; }

    T item() const;
    T at(std::size_t flat_index) const { return node_->data.at(flat_index); }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool flag);
    bool is_leaf() const { return node_->is_leaf(); }
    const char* op_name() const { return node_->op; }

    /// Same values, no history, no gradient tracking. Shares storage.
    Tensor detach() const;
    /// Independent leaf copy of the values.
    Tensor clone(bool requires_grad = false) const;

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

    static Tensor from_op(Shape shape, std::vector<T> values, const char* op,
                          std::vector<Tensor> inputs, BackwardFn<T> backward);

private:
    explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

    std::shared_ptr<TensorNode<T>> node_;
};

/// Gradients of one scalar loss with respect to every leaf that required them.
template <typename T>
class Gradients {
public:
    /// Gradient of `leaf`; all zeros when the leaf is not connected to the loss.
    std::vector<T> of(const Tensor<T>& leaf) const;
    bool contains(const Tensor<T>& leaf) const;
    std::size_t size() const { return grads_.size(); }

private:
    template <typename U>
    friend Gradients<U> backward(const Tensor<U>& loss);

    // Keeps the leaves alive so pointer keys cannot be reused.
    std::unordered_map<const TensorNode<T>*, std::pair<std::shared_ptr<TensorNode<T>>, std::vector<T>>> grads_;
};

/// Reverse-mode sweep from a scalar loss. Each recorded node is visited once
/// in reverse topological order.
template <typename T>
Gradients<T> backward(const Tensor<T>& loss);

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace phaseforge
