#include "pstf/model/unet.hpp"

#include <cmath>

#include "pstf/core/errors.hpp"
#include "pstf/core/ops.hpp"

namespace pstf {

Tensor to_tokens(const Tensor& x) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    return transpose2d(reshape(x, {c, h * w}));
}

Tensor from_tokens(const Tensor& t, int c, int h, int w) {
    return reshape(transpose2d(t), {c, h, w});
}

void ResBlock::build(const std::string& prefix, int c_in_, int c_out_, int groups_,
                     int time_dim, ParamStore& params, Rng& rng) {
    c_in = c_in_;
    c_out = c_out_;
    groups = groups_;
    gn1_g = params.add(prefix + ".gn1.g", Tensor::full({c_in}, 1.0));
    gn1_b = params.add(prefix + ".gn1.b", Tensor::zeros({c_in}));
    conv1_w = params.add(prefix + ".conv1.w", kaiming_init({c_out, c_in, 3, 3}, c_in * 9, rng));
    conv1_b = params.add(prefix + ".conv1.b", Tensor::zeros({c_out}));
    temb_w = params.add(prefix + ".temb.w", kaiming_init({c_out, time_dim}, time_dim, rng));
    temb_b = params.add(prefix + ".temb.b", Tensor::zeros({c_out}));
    gn2_g = params.add(prefix + ".gn2.g", Tensor::full({c_out}, 1.0));
    gn2_b = params.add(prefix + ".gn2.b", Tensor::zeros({c_out}));
    conv2_w = params.add(prefix + ".conv2.w", kaiming_init({c_out, c_out, 3, 3}, c_out * 9, rng));
    conv2_b = params.add(prefix + ".conv2.b", Tensor::zeros({c_out}));
    if (c_in != c_out) {
        skip_w = params.add(prefix + ".skip.w", kaiming_init({c_out, c_in, 1, 1}, c_in, rng));
        skip_b = params.add(prefix + ".skip.b", Tensor::zeros({c_out}));
    }
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& temb) const {
    Tensor h = conv2d(silu(group_norm(x, groups, gn1_g, gn1_b)), conv1_w, conv1_b, 1, 1);
    Tensor tproj = linear(reshape(temb, {1, temb.dim(0)}), temb_w, temb_b);
    h = add_channel_bias(h, reshape(tproj, {c_out}));
    h = conv2d(silu(group_norm(h, groups, gn2_g, gn2_b)), conv2_w, conv2_b, 1, 1);
    Tensor sk = skip_w.defined() ? conv2d(x, skip_w, skip_b, 1, 0) : x;
    return add(sk, h);
}

void SpatialBranch::build(const ModelConfig& cfg, ParamStore& params, Rng& rng) {
    ch = cfg.channels;
    n_heads = cfg.n_heads;
    conv0_w = params.add("spatial.conv0.w", kaiming_init({ch[0], 1, 3, 3}, 9, rng));
    conv0_b = params.add("spatial.conv0.b", Tensor::zeros({ch[0]}));
    conv1_w = params.add("spatial.conv1.w", kaiming_init({ch[1], ch[0], 3, 3}, ch[0] * 9, rng));
    conv1_b = params.add("spatial.conv1.b", Tensor::zeros({ch[1]}));
    conv2_w = params.add("spatial.conv2.w", kaiming_init({ch[2], ch[1], 3, 3}, ch[1] * 9, rng));
    conv2_b = params.add("spatial.conv2.b", Tensor::zeros({ch[2]}));
    idx_ln_g = params.add("spatial.idx.ln.g", Tensor::full({ch[1]}, 1.0));
    idx_ln_b = params.add("spatial.idx.ln.b", Tensor::zeros({ch[1]}));
    idx_q_w = params.add("spatial.idx.q.w", kaiming_init({ch[1], ch[1]}, ch[1], rng));
    idx_q_b = params.add("spatial.idx.q.b", Tensor::zeros({ch[1]}));
    idx_k_w = params.add("spatial.idx.k.w", kaiming_init({ch[1], cfg.d_ctx}, cfg.d_ctx, rng));
    idx_v_w = params.add("spatial.idx.v.w", kaiming_init({ch[1], cfg.d_ctx}, cfg.d_ctx, rng));
    idx_out_w = params.add("spatial.idx.out.w", kaiming_init({ch[1], ch[1]}, ch[1], rng));
    idx_out_b = params.add("spatial.idx.out.b", Tensor::zeros({ch[1]}));
    // zero-initialized output taps: the branch starts as an exact no-op
    z0_w = params.add("spatial.zero0.w", Tensor::zeros({ch[0], ch[0], 1, 1}));
    z0_b = params.add("spatial.zero0.b", Tensor::zeros({ch[0]}));
    z1_w = params.add("spatial.zero1.w", Tensor::zeros({ch[1], ch[1], 1, 1}));
    z1_b = params.add("spatial.zero1.b", Tensor::zeros({ch[1]}));
    z2_w = params.add("spatial.zero2.w", Tensor::zeros({ch[2], ch[2], 1, 1}));
    z2_b = params.add("spatial.zero2.b", Tensor::zeros({ch[2]}));
}

std::vector<Tensor> SpatialBranch::forward(const Tensor& heatmap,
                                           const Tensor& id_tokens) const {
    Tensor b0 = silu(conv2d(heatmap, conv0_w, conv0_b, 1, 1));
    Tensor b1 = silu(conv2d(b0, conv1_w, conv1_b, 2, 1));
    // identity-conditioned cross-attention at the middle resolution
    {
        const int c = b1.dim(0), h = b1.dim(1), w = b1.dim(2);
        Tensor tok = to_tokens(b1);
        Tensor q = linear(layer_norm(tok, idx_ln_g, idx_ln_b), idx_q_w, idx_q_b);
        Tensor z = attend(q, linear(id_tokens, idx_k_w, Tensor()),
                          linear(id_tokens, idx_v_w, Tensor()), n_heads);
        tok = add(tok, linear(z, idx_out_w, idx_out_b));
        b1 = from_tokens(tok, c, h, w);
    }
    Tensor b2 = silu(conv2d(b1, conv2_w, conv2_b, 2, 1));
    return {conv2d(b0, z0_w, z0_b, 1, 0), conv2d(b1, z1_w, z1_b, 1, 0),
            conv2d(b2, z2_w, z2_b, 1, 0)};
}

void UNet::build(const ModelConfig& cfg_, int image_size_, AttnTopology topo,
                 ParamStore& params, Rng& rng) {
    cfg = cfg_;
    image_size = image_size_;
    topology = topo;
    const auto& ch = cfg.channels;
    conv_in_w = params.add("unet.conv_in.w", kaiming_init({ch[0], 3, 3, 3}, 27, rng));
    conv_in_b = params.add("unet.conv_in.b", Tensor::zeros({ch[0]}));
    time_w1 = params.add("unet.time.l1.w",
                         kaiming_init({cfg.time_embed_dim, cfg.time_embed_dim},
                                      cfg.time_embed_dim, rng));
    time_b1 = params.add("unet.time.l1.b", Tensor::zeros({cfg.time_embed_dim}));
    time_w2 = params.add("unet.time.l2.w",
                         kaiming_init({cfg.time_embed_dim, cfg.time_embed_dim},
                                      cfg.time_embed_dim, rng));
    time_b2 = params.add("unet.time.l2.b", Tensor::zeros({cfg.time_embed_dim}));

    enc0.build("unet.enc0.res", ch[0], ch[0], cfg.gn_groups, cfg.time_embed_dim, params, rng);
    tdca_enc0.build("unet.enc0.attn", ch[0], cfg, topo, params, rng);
    down0_w = params.add("unet.down0.w", kaiming_init({ch[1], ch[0], 3, 3}, ch[0] * 9, rng));
    down0_b = params.add("unet.down0.b", Tensor::zeros({ch[1]}));

    enc1.build("unet.enc1.res", ch[1], ch[1], cfg.gn_groups, cfg.time_embed_dim, params, rng);
    if (cfg.self_attn_min_level <= 1)
        sa_enc1.build("unet.enc1.sa", ch[1], cfg.n_heads, params, rng);
    tdca_enc1.build("unet.enc1.attn", ch[1], cfg, topo, params, rng);
    down1_w = params.add("unet.down1.w", kaiming_init({ch[2], ch[1], 3, 3}, ch[1] * 9, rng));
    down1_b = params.add("unet.down1.b", Tensor::zeros({ch[2]}));

    mid1.build("unet.mid.res1", ch[2], ch[2], cfg.gn_groups, cfg.time_embed_dim, params, rng);
    if (cfg.self_attn_min_level <= 2)
        sa_mid.build("unet.mid.sa", ch[2], cfg.n_heads, params, rng);
    tdca_mid.build("unet.mid.attn", ch[2], cfg, topo, params, rng);
    mid2.build("unet.mid.res2", ch[2], ch[2], cfg.gn_groups, cfg.time_embed_dim, params, rng);

    up1_w = params.add("unet.up1.w", kaiming_init({ch[1], ch[2], 3, 3}, ch[2] * 9, rng));
    up1_b = params.add("unet.up1.b", Tensor::zeros({ch[1]}));
    dec1.build("unet.dec1.res", 2 * ch[1], ch[1], cfg.gn_groups, cfg.time_embed_dim, params,
               rng);
    if (cfg.self_attn_min_level <= 1)
        sa_dec1.build("unet.dec1.sa", ch[1], cfg.n_heads, params, rng);
    tdca_dec1.build("unet.dec1.attn", ch[1], cfg, topo, params, rng);

    up0_w = params.add("unet.up0.w", kaiming_init({ch[0], ch[1], 3, 3}, ch[1] * 9, rng));
    up0_b = params.add("unet.up0.b", Tensor::zeros({ch[0]}));
    dec0.build("unet.dec0.res", 2 * ch[0], ch[0], cfg.gn_groups, cfg.time_embed_dim, params,
               rng);
    tdca_dec0.build("unet.dec0.attn", ch[0], cfg, topo, params, rng);

    gn_out_g = params.add("unet.gn_out.g", Tensor::full({ch[0]}, 1.0));
    gn_out_b = params.add("unet.gn_out.b", Tensor::zeros({ch[0]}));
    conv_out_w = params.add("unet.conv_out.w", kaiming_init({3, ch[0], 3, 3}, ch[0] * 9, rng));
    conv_out_b = params.add("unet.conv_out.b", Tensor::zeros({3}));

    spatial.build(cfg, params, rng);
}

Tensor UNet::time_embedding(int t) const {
    const int dim = cfg.time_embed_dim;
    const int half = dim / 2;
    Tensor sinu = Tensor::zeros({dim});
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / (double)(half - 1));
        sinu.ptr()[i] = std::sin(t * freq);
        sinu.ptr()[half + i] = std::cos(t * freq);
    }
    Tensor h = silu(linear(reshape(sinu, {1, dim}), time_w1, time_b1));
    h = linear(h, time_w2, time_b2);
    return reshape(h, {dim});
}

Tensor UNet::forward(const Tensor& x_t, int t, const ConditioningBundle& bundle,
                     const Tensor& heatmap, TraceIO* trace) const {
    if (x_t.shape() != Shape{3, image_size, image_size})
        throw ConfigError("unet: input shape " + shape_str(x_t.shape()));
    const auto& ch = cfg.channels;
    const int s = image_size;
    Tensor temb = time_embedding(t);

    std::vector<Tensor> res;
    if (heatmap.defined()) res = spatial.forward(heatmap, bundle.id_tokens);

    Tensor h0 = conv2d(x_t, conv_in_w, conv_in_b, 1, 1);
    if (!res.empty()) h0 = add(h0, res[0]);
    Tensor e0 = enc0.forward(h0, temb);
    e0 = from_tokens(tdca_enc0.forward(to_tokens(e0), bundle), ch[0], s, s);

    Tensor d1 = conv2d(e0, down0_w, down0_b, 2, 1);
    if (!res.empty()) d1 = add(d1, res[1]);
    Tensor e1 = enc1.forward(d1, temb);
    if (cfg.self_attn_min_level <= 1)
        e1 = from_tokens(sa_enc1.forward(to_tokens(e1), trace), ch[1], s / 2, s / 2);
    e1 = from_tokens(tdca_enc1.forward(to_tokens(e1), bundle), ch[1], s / 2, s / 2);

    Tensor d2 = conv2d(e1, down1_w, down1_b, 2, 1);
    if (!res.empty()) d2 = add(d2, res[2]);
    Tensor m = mid1.forward(d2, temb);
    if (cfg.self_attn_min_level <= 2)
        m = from_tokens(sa_mid.forward(to_tokens(m), trace), ch[2], s / 4, s / 4);
    m = from_tokens(tdca_mid.forward(to_tokens(m), bundle), ch[2], s / 4, s / 4);
    m = mid2.forward(m, temb);

    Tensor u1 = conv2d(upsample_nearest2(m), up1_w, up1_b, 1, 1);
    Tensor c1 = concat0(u1, e1);
    Tensor de1 = dec1.forward(c1, temb);
    if (cfg.self_attn_min_level <= 1)
        de1 = from_tokens(sa_dec1.forward(to_tokens(de1), trace), ch[1], s / 2, s / 2);
    de1 = from_tokens(tdca_dec1.forward(to_tokens(de1), bundle), ch[1], s / 2, s / 2);

    Tensor u0 = conv2d(upsample_nearest2(de1), up0_w, up0_b, 1, 1);
    Tensor c0 = concat0(u0, e0);
    Tensor de0 = dec0.forward(c0, temb);
    de0 = from_tokens(tdca_dec0.forward(to_tokens(de0), bundle), ch[0], s, s);

    return conv2d(silu(group_norm(de0, cfg.gn_groups, gn_out_g, gn_out_b)), conv_out_w,
                  conv_out_b, 1, 1);
}

}  // namespace pstf
