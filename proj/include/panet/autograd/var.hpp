#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "panet/core/tensor.hpp"

namespace panet {

// Reverse-mode tape. Nodes own their value; gradients are allocated lazily
// during backward. Non-leaf gradients are dropped as soon as they have been
// propagated.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool leaf = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(const Tensor<T>&)> backward_fn;
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

using FVar = Var<float>;
using DVar = Var<double>;

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    NoGradGuard() : prev_(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev_; }

  private:
    bool prev_;
};

template <typename T>
Var<T> constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->leaf = true;
    return n;
}

template <typename T>
Var<T> parameter(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->leaf = true;
    n->requires_grad = true;
    return n;
}

template <typename T>
Tensor<T>& ensure_grad(const Var<T>& v) {
    if (!v->grad.defined()) v->grad = Tensor<T>::zeros(v->value.shape());
    return v->grad;
}

// Builds a graph node; outside grad mode (or with no differentiable parents)
// the tape edges are dropped so intermediate values can be freed eagerly.
template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(const Tensor<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    if (grad_mode_flag()) {
        for (const auto& p : parents)
            if (p->requires_grad) {
                n->requires_grad = true;
                break;
            }
    }
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

template <typename T>
void backward(const Var<T>& root, T seed = T(1)) {
    if (root->value.numel() != 1) throw ShapeError("backward: root must be scalar, got " + shape_str(root->value.shape()));
    if (!root->requires_grad) return;

    std::vector<Node<T>*> topo;
    std::unordered_set<Node<T>*> visited;
    struct Frame {
        Node<T>* node;
        size_t next_child;
    };
    std::vector<Frame> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.node->parents.size()) {
            Node<T>* child = f.node->parents[f.next_child++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    root->grad = Tensor<T>({1}, seed);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_fn && node->grad.defined()) node->backward_fn(node->grad);
        if (!node->leaf) node->grad = Tensor<T>();  // free intermediate gradients
    }
}

template <typename T>
void accum(const Var<T>& parent, const Tensor<T>& delta) {
    if (!parent->requires_grad) return;
    Tensor<T>& g = ensure_grad(parent);
    const int64_t n = g.numel();
    T* gp = g.data();
    const T* dp = delta.data();
    for (int64_t i = 0; i < n; ++i) gp[i] += dp[i];
}

}  // namespace panet
