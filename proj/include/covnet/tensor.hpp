#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "covnet/rng.hpp"

namespace covnet {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

// One record of the reverse-mode tape. `backward` reads this node's
// accumulated gradient and adds each input's share into the input nodes.
// Saved forward context lives in the closure.
template <typename T>
struct TapeNode {
    const char* op_kind = "leaf";
    Shape shape;
    std::vector<std::shared_ptr<TapeNode>> inputs;
    std::function<void()> backward;
    std::vector<T> grad;     // empty until touched by backward / accumulation
    bool backward_done = false;

    void accumulate(const std::vector<T>& g) {
        if (grad.empty()) grad.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }
    std::vector<T>& grad_buffer() {
        if (grad.empty()) grad.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
        return grad;
    }
};

// Dense row-major real tensor. Values are treated as immutable once an op
// has consumed them; only the optimizer and loaders write through
// mutable_data(), and never while a graph referencing the buffer is alive.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.impl_ = std::make_shared<Impl>();
        t.impl_->shape = std::move(shape);
        t.impl_->data.assign(static_cast<std::size_t>(shape_numel(t.impl_->shape)), T(0));
        if (requires_grad) t.make_leaf();
        return t;
    }

    static Tensor full(Shape shape, T value) {
        Tensor t = zeros(std::move(shape));
        for (auto& v : t.impl_->data) v = value;
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        Tensor t;
        t.impl_ = std::make_shared<Impl>();
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(data);
        if (requires_grad) t.make_leaf();
        return t;
    }

    static Tensor scalar_value(T v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t dim(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t rank() const { return impl_->shape.size(); }
    std::int64_t numel() const { return shape_numel(impl_->shape); }

    const std::vector<T>& data() const { return impl_->data; }
    // Optimizer / initializer / loader access only.
    std::vector<T>& mutable_data() { return impl_->data; }

    T value_at(std::int64_t flat) const { return impl_->data[static_cast<std::size_t>(flat)]; }

    T scalar() const {
        if (numel() != 1) throw std::invalid_argument("tensor: scalar() on shape " + shape_str(shape()));
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_ && impl_->node != nullptr; }
    const std::shared_ptr<TapeNode<T>>& node() const { return impl_->node; }

    // Gradient accumulated by the last backward pass (leaf tensors).
    Tensor grad() const {
        if (!requires_grad() || impl_->node->grad.empty())
            throw std::runtime_error("tensor: no gradient recorded; run backward() first");
        return from_data(impl_->shape, impl_->node->grad);
    }
    bool has_grad() const { return requires_grad() && !impl_->node->grad.empty(); }
    void zero_grad() {
        if (requires_grad()) {
            impl_->node->grad.clear();
            impl_->node->backward_done = false;
        }
    }

    Tensor detached() const { return from_data(impl_->shape, impl_->data); }

    // Used by ops to attach a freshly built graph node.
    void attach_node(std::shared_ptr<TapeNode<T>> n) { impl_->node = std::move(n); }

private:
    struct Impl {
        Shape shape;
        std::vector<T> data;
        std::shared_ptr<TapeNode<T>> node;  // null on constants
    };
    std::shared_ptr<Impl> impl_;

    void make_leaf() {
        auto n = std::make_shared<TapeNode<T>>();
        n->shape = impl_->shape;
        impl_->node = n;
    }
};

// Reverse topological sweep from a scalar root. Every requires_grad leaf
// reachable from the root ends up with d(root)/d(leaf) in its node.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw std::invalid_argument("backward: root must be a defined scalar tensor");
    const auto& root = loss.node();
    if (!root)
        throw std::runtime_error("backward: root is detached from any gradient tape");
    if (root->backward_done)
        throw std::runtime_error("backward: tape already consumed; build a new graph or zero_grad first");

    // iterative post-order DFS
    std::vector<TapeNode<T>*> order;
    std::unordered_set<TapeNode<T>*> seen;
    std::vector<std::pair<TapeNode<T>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            TapeNode<T>* child = node->inputs[next++].get();
            if (seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TapeNode<T>* node = *it;
        if (node->backward && !node->grad.empty()) node->backward();
        node->backward_done = true;
    }
}

} // namespace covnet
