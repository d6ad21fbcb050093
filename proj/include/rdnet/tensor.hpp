#pragma once

// Dense 4-D tensor with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Operations in ops.hpp
// create new nodes that remember their inputs and a closure propagating the
// node's gradient back into those inputs. Tensor::backward() orders the
// reachable nodes topologically and runs the closures in reverse.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rdnet/errors.hpp"

namespace rdnet {

/// (N, C, H, W). Matrices use the last two dimensions.
struct Shape {
    std::size_t n = 1;
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    constexpr std::size_t numel() const { return n * c * h * w; }
    constexpr std::size_t plane() const { return h * w; }
    constexpr std::size_t sample() const { return c * h * w; }

    friend constexpr bool operator==(const Shape&, const Shape&) = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + ")";
    }
};

class Tensor;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient arrives
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    bool is_leaf() const { return inputs.empty(); }

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

inline void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
}

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0)
            throw ShapeError("tensor dimensions must be positive, got " + shape.str());
        if (values.size() != shape.numel())
            throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                             shape.str());
        detail::check_finite(values, "leaf");
        auto node = std::make_shared<detail::Node>();
        node->shape = shape;
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from(shape, std::vector<double>(shape.numel(), 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        return from(shape, std::vector<double>(shape.numel(), value), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) { return from(Shape{}, {value}, requires_grad); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->value.size(); }
    const char* op() const { return node_->op; }

    std::span<const double> data() const { return node_->value; }
    /// Write access for leaves (parameter updates, finite-difference probes).
    std::span<double> mutable_data() { return node_->value; }

    double item() const {
        if (numel() != 1) throw ArgumentError("item() on tensor of shape " + shape().str());
        return node_->value[0];
    }

    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        const Shape& s = shape();
        return node_->value[((n * s.c + c) * s.h + h) * s.w + w];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    /// Copy of the values as a new leaf outside any graph.
    Tensor detach() const { return from(shape(), node_->value, false); }

    void backward() const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// The nodes reachable from a root through gradient-requiring edges, in
/// topological order (every node after all of its inputs).
class Graph {
public:
    explicit Graph(const Tensor& root) : root_(root.node()) {
        std::unordered_set<const detail::Node*> seen;
        // Iterative post-order DFS; recursion depth would follow graph depth.
        std::vector<std::pair<detail::Node*, std::size_t>> stack;
        if (root_->requires_grad) {
            stack.emplace_back(root_, 0);
            seen.insert(root_);
        }
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                detail::Node* child = node->inputs[next++].get();
                if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
            } else {
                order_.push_back(node);
                stack.pop_back();
            }
        }
    }

    std::span<detail::Node* const> nodes() const { return order_; }
    std::size_t size() const { return order_.size(); }

    /// Seeds d(root)/d(root) = 1 and accumulates into every reachable node.
    /// Interior gradients are reset first, so replaying is idempotent; leaf
    /// gradients accumulate across calls.
    void backward() {
        for (detail::Node* node : order_) {
            if (!node->is_leaf()) node->grad.clear();
        }
        if (order_.empty()) return;
        root_->grad_buffer()[0] += 1.0;
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            detail::Node* node = *it;
            if (node->backward && !node->grad.empty()) node->backward(*node);
        }
    }

private:
    detail::Node* root_;
    std::vector<detail::Node*> order_;
};

inline void Tensor::backward() const {
    if (numel() != 1) throw ArgumentError("backward() requires a scalar loss, got shape " + shape().str());
    Graph graph(*this);
    graph.backward();
}

namespace detail {

/// Builds an operation result. The backward closure is only attached when an
/// input requires gradients and recording is enabled.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                          std::initializer_list<const Tensor*> inputs, std::function<void(Node&)> backward) {
    check_finite(value, op);
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(value);
    node->op = op;
    if (grad_enabled()) {
        bool any = false;
        for (const Tensor* t : inputs) any = any || t->requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const Tensor* t : inputs) node->inputs.push_back(t->node_ptr());
            node->backward = std::move(backward);
        }
    }
    return Tensor(std::move(node));
}

inline Tensor make_result(const char* op, Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                          std::function<void(Node&)> backward) {
    check_finite(value, op);
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(value);
    node->op = op;
    if (grad_enabled()) {
        bool any = false;
        for (const Tensor& t : inputs) any = any || t.requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const Tensor& t : inputs) node->inputs.push_back(t.node_ptr());
            node->backward = std::move(backward);
        }
    }
    return Tensor(std::move(node));
}

/// Gradient sink for input `i` of `self`, or nullptr when that input does not
/// take gradients.
inline std::vector<double>* input_grad(Node& self, std::size_t i) {
    Node& in = *self.inputs[i];
    if (!in.requires_grad) return nullptr;
    return &in.grad_buffer();
}

}  // namespace detail
}  // namespace rdnet
