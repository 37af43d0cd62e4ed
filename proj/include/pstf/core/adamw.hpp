#ifndef PSTF_CORE_ADAMW_HPP
#define PSTF_CORE_ADAMW_HPP

#include <cmath>
#include <map>

#include "pstf/core/params.hpp"

namespace pstf {

// Adam with decoupled weight decay. Moment buffers are keyed by parameter
// name so they survive checkpoint round-trips and freeze-mask changes.
class AdamW {
public:
    AdamW(Scalar lr, Scalar weight_decay, Scalar beta1 = 0.9, Scalar beta2 = 0.999,
          Scalar eps = 1e-8)
        : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params) {
        ++t_;
        const Scalar bc1 = 1.0 - std::pow(beta1_, (Scalar)t_);
        const Scalar bc2 = 1.0 - std::pow(beta2_, (Scalar)t_);
        for (size_t pi = 0; pi < params.size(); ++pi) {
            auto& e = params.at(pi);
            if (!e.trainable) continue;
            auto& m = moment(m_, e.name, e.tensor.numel());
            auto& v = moment(v_, e.name, e.tensor.numel());
            auto& val = e.tensor.data();
            auto& grad = e.tensor.grad();
            for (size_t i = 0; i < val.size(); ++i) {
                const Scalar g = grad[i];
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const Scalar mhat = m[i] / bc1;
                const Scalar vhat = v[i] / bc2;
                val[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * val[i]);
            }
        }
    }

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    Scalar lr() const { return lr_; }

    // Serialized as named tensors "adam.m.<param>" / "adam.v.<param>".
    std::map<std::string, Tensor> state_tensors() const {
        std::map<std::string, Tensor> out;
        for (const auto& [name, buf] : m_)
            out.emplace("adam.m." + name, Tensor::from_data({(int)buf.size()}, buf));
        for (const auto& [name, buf] : v_)
            out.emplace("adam.v." + name, Tensor::from_data({(int)buf.size()}, buf));
        return out;
    }

    void load_state_tensors(const std::map<std::string, Tensor>& entries) {
        m_.clear();
        v_.clear();
        for (const auto& [name, t] : entries) {
            if (name.rfind("adam.m.", 0) == 0)
                m_[name.substr(7)] = t.data();
            else if (name.rfind("adam.v.", 0) == 0)
                v_[name.substr(7)] = t.data();
        }
    }

private:
    std::vector<Scalar>& moment(std::map<std::string, std::vector<Scalar>>& buf,
                                const std::string& name, int64_t n) {
        auto it = buf.find(name);
        if (it == buf.end()) it = buf.emplace(name, std::vector<Scalar>((size_t)n, 0.0)).first;
        return it->second;
    }

    Scalar lr_, wd_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, std::vector<Scalar>> m_, v_;
};

}  // namespace pstf

#endif  // PSTF_CORE_ADAMW_HPP
