#include "pstf/core/tensor.hpp"

#include <unordered_set>

namespace pstf {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Tensor make_node(const Shape& shape, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->shape = shape;
    n->value.assign((size_t)numel_of(shape), 0.0);
    n->requires_grad = requires_grad && g_grad_enabled;
    return Tensor::wrap(std::move(n));
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return make_node(shape, requires_grad);
}

Tensor Tensor::full(const Shape& shape, Scalar v, bool requires_grad) {
    Tensor t = make_node(shape, requires_grad);
    for (auto& x : t.data()) x = v;
    return t;
}

Tensor Tensor::from_data(const Shape& shape, std::vector<Scalar> data, bool requires_grad) {
    if ((int64_t)data.size() != numel_of(shape))
        throw ConfigError("from_data: " + std::to_string(data.size()) + " values for shape " +
                          shape_str(shape));
    Tensor t = make_node(shape, requires_grad);
    t.node()->value = std::move(data);
    return t;
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, Scalar stddev, bool requires_grad) {
    Tensor t = make_node(shape, requires_grad);
    for (auto& x : t.data()) x = rng.normal() * stddev;
    return t;
}

Tensor Tensor::detach_copy() const {
    Tensor t = make_node(node_->shape, false);
    t.node()->value = node_->value;
    t.node()->requires_grad = node_->requires_grad;  // leaf keeps trainability
    return t;
}

void Tensor::backward() {
    if (!node_) throw ConfigError("backward() on empty tensor");
    if (numel() != 1) throw ConfigError("backward() requires a scalar loss");

    // Iterative post-order DFS for the topological order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            TensorNode* p = n->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward) {
            n->backward(*n);
            // Intermediate grads are consumed; only leaves accumulate across
            // backward passes. This keeps shared subgraphs reusable.
            n->grad.clear();
        }
    }
}

}  // namespace pstf
