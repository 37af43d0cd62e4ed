#ifndef PSTF_CORE_PARAMS_HPP
#define PSTF_CORE_PARAMS_HPP

#include <map>
#include <string>
#include <vector>

#include "pstf/core/rng.hpp"
#include "pstf/core/tensor.hpp"

namespace pstf {

// Named parameter registry. Modules register their tensors here once at
// construction; the optimizer, checkpoint writer and freeze audit all walk
// the same ordered list.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw ConfigError("duplicate parameter: " + name);
        index_[name] = params_.size();
        params_.push_back(Entry{name, std::move(t), true});
        return params_.back().tensor;
    }

    struct Entry {
        std::string name;
        Tensor tensor;
        bool trainable;
    };

    size_t size() const { return params_.size(); }
    Entry& at(size_t i) { return params_[i]; }
    const Entry& at(size_t i) const { return params_[i]; }

    Tensor& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return params_[it->second].tensor;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    // Applies `pred(name) -> trainable` to every entry and syncs the tensors'
    // requires_grad flags, so frozen parameters never enter the tape.
    template <typename Pred>
    void set_trainable(Pred pred) {
        for (auto& e : params_) {
            e.trainable = pred(e.name);
            e.tensor.set_requires_grad(e.trainable);
        }
    }

    std::vector<std::string> trainable_names() const {
        std::vector<std::string> out;
        for (const auto& e : params_)
            if (e.trainable) out.push_back(e.name);
        return out;
    }

    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& e : params_) n += e.tensor.numel();
        return n;
    }

    void zero_grads() {
        for (auto& e : params_) e.tensor.zero_grad();
    }

    std::map<std::string, Tensor> snapshot() const {
        std::map<std::string, Tensor> out;
        for (const auto& e : params_) out.emplace(e.name, e.tensor.detach_copy());
        return out;
    }

    void load_snapshot(const std::map<std::string, Tensor>& snap) {
        for (auto& e : params_) {
            auto it = snap.find(e.name);
            if (it == snap.end()) throw ConfigError("checkpoint missing parameter: " + e.name);
            if (it->second.shape() != e.tensor.shape())
                throw ConfigError("checkpoint shape mismatch for " + e.name);
            e.tensor.data() = it->second.data();
        }
    }

private:
    std::vector<Entry> params_;
    std::map<std::string, size_t> index_;
};

// Common initializers.
inline Tensor kaiming_init(const Shape& shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    const Scalar std = std::sqrt(2.0 / (Scalar)fan_in);
    for (auto& v : t.data()) v = rng.normal() * std;
    return t;
}

}  // namespace pstf

#endif  // PSTF_CORE_PARAMS_HPP
