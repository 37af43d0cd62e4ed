#ifndef PSTF_CORE_TENSOR_HPP
#define PSTF_CORE_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pstf/core/errors.hpp"
#include "pstf/core/rng.hpp"

namespace pstf {

using Scalar = double;
using Shape = std::vector<int>;

inline int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// One node of the autograd tape. `backward` pulls this node's grad and
// scatters it into the parents' grads; it must not capture the node's own
// shared_ptr (the node is passed back in as an argument instead).
struct TensorNode {
    std::vector<Scalar> value;
    std::vector<Scalar> grad;  // allocated lazily, same length as value
    Shape shape;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward;

    int64_t numel() const { return (int64_t)value.size(); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Thread-local switch for graph construction. Inference wraps forwards in
// NoGradGuard so no tape is built.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }

private:
    bool prev_;
};

// Value-semantics handle over a shared tape node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, Scalar v, bool requires_grad = false);
    static Tensor from_data(const Shape& shape, std::vector<Scalar> data,
                            bool requires_grad = false);
    static Tensor randn(const Shape& shape, Rng& rng, Scalar stddev = 1.0,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[(size_t)i]; }
    int64_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    std::vector<Scalar>& data() { return node_->value; }
    const std::vector<Scalar>& data() const { return node_->value; }
    std::vector<Scalar>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    Scalar* ptr() { return node_->value.data(); }
    const Scalar* ptr() const { return node_->value.data(); }

    Scalar item() const {
        if (numel() != 1) throw ConfigError("item() on tensor " + shape_str(shape()));
        return node_->value[0];
    }

    void zero_grad() {
        if (node_) node_->grad.assign(node_->value.size(), 0.0);
    }

    // Reverse-mode sweep from this (scalar) node. Seeds d(this)/d(this) = 1.
    void backward();

    // Deep copy of values only; the copy is a fresh leaf.
    Tensor detach_copy() const;

    std::shared_ptr<TensorNode> node() const { return node_; }

    static Tensor wrap(std::shared_ptr<TensorNode> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<TensorNode> node_;
};

// Fresh node helper used by every op.
Tensor make_node(const Shape& shape, bool requires_grad);

}  // namespace pstf

#endif  // PSTF_CORE_TENSOR_HPP
