#ifndef PSTF_TESTS_ORACLES_HPP
#define PSTF_TESTS_ORACLES_HPP

#include <cmath>
#include <vector>

#include "pstf/core/tensor.hpp"

namespace pstf_test {

// Independent direct-summation attention: explicit double loop per head, no
// shared code with the library path it checks.
inline std::vector<double> attention_oracle(const std::vector<double>& q,
                                            const std::vector<double>& k,
                                            const std::vector<double>& v, int tq, int tk,
                                            int d, int n_heads) {
    const int dh = d / n_heads;
    std::vector<double> out((size_t)tq * d, 0.0);
    for (int h = 0; h < n_heads; ++h) {
        for (int i = 0; i < tq; ++i) {
            std::vector<double> logits((size_t)tk);
            for (int j = 0; j < tk; ++j) {
                double dot = 0.0;
                for (int c = 0; c < dh; ++c)
                    dot += q[(size_t)i * d + h * dh + c] * k[(size_t)j * d + h * dh + c];
                logits[(size_t)j] = dot / std::sqrt((double)dh);
            }
            double mx = logits[0];
            for (double l : logits) mx = std::max(mx, l);
            double z = 0.0;
            for (double& l : logits) {
                l = std::exp(l - mx);
                z += l;
            }
            for (int j = 0; j < tk; ++j) {
                const double w = logits[(size_t)j] / z;
                for (int c = 0; c < dh; ++c)
                    out[(size_t)i * d + h * dh + c] += w * v[(size_t)j * d + h * dh + c];
            }
        }
    }
    return out;
}

}  // namespace pstf_test

#endif  // PSTF_TESTS_ORACLES_HPP
