#ifndef PSTF_MODEL_UNET_HPP
#define PSTF_MODEL_UNET_HPP

#include <memory>
#include <string>
#include <vector>

#include "pstf/model/tdca.hpp"

namespace pstf {

struct ResBlock {
    int c_in = 0, c_out = 0, groups = 8;
    Tensor gn1_g, gn1_b, conv1_w, conv1_b;
    Tensor temb_w, temb_b;
    Tensor gn2_g, gn2_b, conv2_w, conv2_b;
    Tensor skip_w, skip_b;  // 1x1, only when c_in != c_out

    void build(const std::string& prefix, int c_in, int c_out, int groups, int time_dim,
               ParamStore& params, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& temb) const;
};

// Landmark conditioning: a light residual encoder over the heatmap whose
// outputs enter the main encoder through zero-initialized 1x1 convs, so a
// fresh branch is an exact no-op. Its only cross-attention context is the
// identity tokens.
struct SpatialBranch {
    std::vector<int> ch;
    Tensor conv0_w, conv0_b;
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor idx_ln_g, idx_ln_b, idx_q_w, idx_q_b, idx_k_w, idx_v_w, idx_out_w, idx_out_b;
    Tensor z0_w, z0_b, z1_w, z1_b, z2_w, z2_b;  // zero convs
    int n_heads = 4;

    void build(const ModelConfig& cfg, ParamStore& params, Rng& rng);
    // Residual features per level ([c0,S,S], [c1,S/2,S/2], [c2,S/4,S/4]).
    std::vector<Tensor> forward(const Tensor& heatmap, const Tensor& id_tokens) const;
};

// Denoising backbone: three resolutions, a TDCA block at every level on both
// paths, self-attention (the trace sites) from self_attn_min_level down.
struct UNet {
    ModelConfig cfg;
    int image_size = 0;
    AttnTopology topology = AttnTopology::kTriplet;

    Tensor conv_in_w, conv_in_b, conv_out_w, conv_out_b;
    Tensor gn_out_g, gn_out_b;
    Tensor time_w1, time_b1, time_w2, time_b2;
    Tensor down0_w, down0_b, down1_w, down1_b;
    Tensor up1_w, up1_b, up0_w, up0_b;
    ResBlock enc0, enc1, mid1, mid2, dec1, dec0;
    TdcaBlock tdca_enc0, tdca_enc1, tdca_mid, tdca_dec1, tdca_dec0;
    SelfAttnBlock sa_enc1, sa_mid, sa_dec1;
    SpatialBranch spatial;

    void build(const ModelConfig& cfg, int image_size, AttnTopology topology,
               ParamStore& params, Rng& rng);

    // eps prediction. `heatmap` may be undefined (no spatial conditioning).
    Tensor forward(const Tensor& x_t, int t, const ConditioningBundle& bundle,
                   const Tensor& heatmap, TraceIO* trace = nullptr) const;

    Tensor time_embedding(int t) const;

    // Self-attention sites touched per forward (for trace bookkeeping).
    int trace_sites_per_forward() const {
        int blocks = 0;
        if (cfg.self_attn_min_level <= 1) blocks += 2;  // enc1 + dec1
        if (cfg.self_attn_min_level <= 2) blocks += 1;  // mid
        return blocks * cfg.n_heads;
    }
};

// tokens [hw, c] <-> feature map [c, h, w]
Tensor to_tokens(const Tensor& x);
Tensor from_tokens(const Tensor& t, int c, int h, int w);

}  // namespace pstf

#endif  // PSTF_MODEL_UNET_HPP
