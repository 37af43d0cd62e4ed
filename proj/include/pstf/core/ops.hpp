#ifndef PSTF_CORE_OPS_HPP
#define PSTF_CORE_OPS_HPP

#include <vector>

#include "pstf/core/tensor.hpp"

namespace pstf {

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);
Tensor add_scalar(const Tensor& a, Scalar s);
// ca*a + cb*b, shapes equal.
Tensor lincomb(const Tensor& a, Scalar ca, const Tensor& b, Scalar cb);
Tensor silu(const Tensor& a);
// Clamp to [0,1]; gradient passes only through the interior.
Tensor clamp01(const Tensor& a);

// Linear algebra. All matrices row-major.
Tensor matmul(const Tensor& a, const Tensor& b);       // [m,k]x[k,n] -> [m,n]
Tensor transpose2d(const Tensor& a);                   // [m,n] -> [n,m]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x[n,i], w[o,i], b[o]|empty

// Shape plumbing.
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat0(const Tensor& a, const Tensor& b);      // along dim 0, trailing dims equal
Tensor slice_cols(const Tensor& a, int start, int len);  // [t,d] -> [t,len]
Tensor concat_cols(const std::vector<Tensor>& parts);    // [t,d1],[t,d2].. -> [t,sum]
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// Convolution stack, channel-major [C,H,W].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor upsample_nearest2(const Tensor& x);
Tensor add_channel_bias(const Tensor& x, const Tensor& v);  // x[c,h,w] + v[c]

// Normalization / attention pieces.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  Scalar eps = 1e-5);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps = 1e-5);
Tensor softmax_rows(const Tensor& x);

// x / max(||x||_2, eps) over the whole tensor.
Tensor l2_normalize(const Tensor& x, Scalar eps = 1e-12);

// Reductions.
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);
// Projection against a fixed vector: sum_i a_i * w_i -> scalar.
Tensor dot_const(const Tensor& a, const std::vector<Scalar>& w);

}  // namespace pstf

#endif  // PSTF_CORE_OPS_HPP
