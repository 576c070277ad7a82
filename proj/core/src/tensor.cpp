#include "phaseforge/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace phaseforge {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

template <typename T>
Tensor<T>::Tensor() : Tensor(Shape{0}, {}) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<TensorNode<T>>()) {
    if (phaseforge::numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + to_string(shape) + " holds " +
                         std::to_string(phaseforge::numel(shape)) + " elements but " +
                         std::to_string(values.size()) + " values were given");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    const std::size_t n = phaseforge::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
    return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    if (axis >= node_->shape.size()) {
        throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(node_->shape));
    }
    return node_->shape[axis];
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
    if (!node_->is_leaf()) {
        throw std::logic_error(std::string("tensor: in-place write to recorded node '") + node_->op + "'");
    }
    return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
    if (node_->data.size() != 1) {
        throw ShapeError("tensor: item() on shape " + to_string(node_->shape));
    }
    return node_->data.front();
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
    if (!node_->is_leaf()) {
        throw std::logic_error("tensor: requires_grad can only be set on leaves");
    }
    node_->requires_grad = flag;
    return *this;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = node_->shape;
    node->data = node_->data;
    return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::clone(bool requires_grad) const {
    return Tensor(node_->shape, node_->data, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> values, const char* op,
                             std::vector<Tensor> inputs, BackwardFn<T> backward_fn) {
    Tensor out(std::move(shape), std::move(values));
    out.node_->op = op;
    const bool track = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
    if (track) {
        out.node_->requires_grad = true;
        out.node_->backward = std::move(backward_fn);
        out.node_->parents.reserve(inputs.size());
        for (auto& input : inputs) out.node_->parents.push_back(input.node_);
    }
    return out;
}

template <typename T>
std::vector<T> Gradients<T>::of(const Tensor<T>& leaf) const {
    auto it = grads_.find(leaf.node().get());
    if (it == grads_.end()) return std::vector<T>(leaf.numel(), T{0});
    return it->second.second;
}

template <typename T>
bool Gradients<T>::contains(const Tensor<T>& leaf) const {
    return grads_.count(leaf.node().get()) != 0;
}

template <typename T>
Gradients<T> backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
    }
    Gradients<T> result;
    if (!loss.requires_grad()) return result;

    using Node = TensorNode<T>;
    // Iterative post-order DFS; reversing it gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    std::unordered_map<Node*, std::vector<T>> grads;
    grads[loss.node().get()] = std::vector<T>{T{1}};
    std::vector<std::vector<T>*> parent_grads;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        auto found = grads.find(node);
        if (found == grads.end()) continue;
        if (node->is_leaf()) {
            auto owner = std::shared_ptr<Node>();
            if (node == loss.node().get()) {
                owner = loss.node();
            }
            result.grads_[node] = {owner, std::move(found->second)};
            grads.erase(found);
            continue;
        }
        parent_grads.assign(node->parents.size(), nullptr);
        for (std::size_t i = 0; i < node->parents.size(); ++i) {
            Node* parent = node->parents[i].get();
            if (!parent->requires_grad) continue;
            auto& slot = grads[parent];
            if (slot.empty()) slot.assign(parent->data.size(), T{0});
            parent_grads[i] = &slot;
        }
        const std::vector<T> grad_out = std::move(grads[node]);
        grads.erase(node);
        node->backward(*node, grad_out, parent_grads);
    }
    // Attach ownership of leaves so keys stay valid for the caller.
    for (Node* node : order) {
        if (!node->is_leaf()) {
            for (auto& parent : node->parents) {
                auto hit = result.grads_.find(parent.get());
                if (hit != result.grads_.end() && !hit->second.first) hit->second.first = parent;
            }
        }
    }
    return result;
}

template class Tensor<float>;
template class Tensor<double>;
template class Gradients<float>;
template class Gradients<double>;
template Gradients<float> backward(const Tensor<float>&);
template Gradients<double> backward(const Tensor<double>&);

}  // namespace phaseforge
