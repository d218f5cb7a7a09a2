// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pickdraw/tensor.hpp"

namespace pickdraw::ad {

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

/// RAII scope that disables graph construction (sampling, evaluation).
struct NoGradGuard {
    NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One tape entry: a value, its cotangent accumulator, and the closure that
/// pushes the cotangent to the parents (the vector-Jacobian product).
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Tensor& g) {
        if (!grad_ready) {
            grad = Tensor::zeros(value.shape());
            grad_ready = true;
        }
        grad += g;
    }
};

/// Handle to a tape node. Copying shares the node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false) : n_(std::make_shared<Node>()) {
        n_->value = std::move(value);
        n_->requires_grad = requires_grad;
    }
    static Var constant(Tensor value) { return Var(std::move(value), false); }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& value() const { return n_->value; }
    Tensor& mutable_value() { return n_->value; }
    const Tensor& grad() const {
        if (!n_->grad_ready) throw std::logic_error("Var::grad: no gradient accumulated");
        return n_->grad;
    }
    bool has_grad() const { return n_ && n_->grad_ready; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }
    void clear_grad() {
        n_->grad_ready = false;
        n_->grad = Tensor();
    }
    /// Value-sharing view that is cut off from the graph.
    Var detached() const { return Var(n_->value, false); }

    NodePtr node() const { return n_; }

private:
    Var(NodePtr n) : n_(std::move(n)) {}
    friend Var make_op(Tensor, std::vector<Var>, std::function<void(Node&)>);
    NodePtr n_;
};

/// Build an op node. The backward closure receives the node itself and must
/// call parent->accumulate for every parent that requires a gradient.
inline Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool need = false;
    if (grad_mode())
        for (const auto& p : parents)
            if (p.requires_grad()) { need = true; break; }
    if (need) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward = std::move(backward);
    }
    return Var(std::move(n));
}

/// Reverse sweep from root. `seed` must match the root shape; a scalar root
/// defaults to seed 1. Gradients land on every node with requires_grad.
inline void backward(const Var& root, const Tensor* seed = nullptr) {
    NodePtr r = root.node();
    if (!r || !r->requires_grad)
        throw std::logic_error("backward: root does not require grad");
    // Iterative post-order topological sort over the requires_grad subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(r.get(), 0);
    visited.insert(r.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    if (seed) {
        if (!seed->same_shape(r->value))
            throw std::invalid_argument("backward: seed shape mismatch");
        r->accumulate(*seed);
    } else {
        if (r->value.numel() != 1)
            throw std::invalid_argument("backward: non-scalar root needs an explicit seed");
        r->accumulate(Tensor::scalar(1.0));
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad_ready) n->backward(*n);
    }
}

}  // namespace pickdraw::ad
