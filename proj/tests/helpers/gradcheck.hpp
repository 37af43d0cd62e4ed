#ifndef PSTF_TESTS_GRADCHECK_HPP
#define PSTF_TESTS_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "pstf/core/tensor.hpp"

namespace pstf_test {

// Central-difference gradient check against a loss closure that rebuilds its
// graph from the tensor's current values on every call. Returns the largest
// mismatch as |a - n| / max(|a|, |n|, floor).
struct GradCheck {
    double step = 1e-4;
    double floor = 1e-6;

    double max_rel_err(const std::function<pstf::Tensor()>& loss_fn, pstf::Tensor param,
                       const std::vector<int64_t>& indices) {
        using namespace pstf;
        param.zero_grad();
        Tensor loss = loss_fn();
        loss.backward();
        std::vector<double> analytic;
        analytic.reserve(indices.size());
        for (int64_t idx : indices) analytic.push_back(param.grad()[(size_t)idx]);

        double worst = 0.0;
        for (size_t k = 0; k < indices.size(); ++k) {
            const int64_t idx = indices[k];
            const double keep = param.data()[(size_t)idx];
            param.data()[(size_t)idx] = keep + step;
            const double up = loss_fn().item();
            param.data()[(size_t)idx] = keep - step;
            const double dn = loss_fn().item();
            param.data()[(size_t)idx] = keep;
            const double numeric = (up - dn) / (2.0 * step);
            const double a = analytic[k];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
        return worst;
    }
};

}  // namespace pstf_test

#endif  // PSTF_TESTS_GRADCHECK_HPP
