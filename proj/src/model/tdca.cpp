#include "pstf/model/tdca.hpp"

#include <cmath>

#include "pstf/core/errors.hpp"
#include "pstf/core/ops.hpp"

namespace pstf {

void TraceIO::on_probs(Tensor& p) {
    if (!entries) throw ConfigError("TraceIO: no storage attached");
    if (mode == Mode::kRecord) {
        entries->push_back(Entry{p.dim(0), p.dim(1), p.data()});
        return;
    }
    if (grad_enabled())
        throw ConfigError("trace replay: substitution is inference-only");
    if (cursor >= entries->size())
        throw ConfigError("trace replay: ran past the recorded schedule");
    const Entry& e = (*entries)[cursor++];
    if (e.rows != p.dim(0) || e.cols != p.dim(1))
        throw ConfigError("trace replay: attention map shape mismatch");
    p.data() = e.probs;  // substitution point: post-softmax probabilities
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads, TraceIO* hook) {
    if (q.shape().size() != 2 || k.shape().size() != 2 || v.shape().size() != 2)
        throw ConfigError("attend: need 2-d q/k/v");
    if (k.dim(0) != v.dim(0)) throw ConfigError("attend: key/value length mismatch");
    if (q.dim(1) != k.dim(1) || q.dim(1) != v.dim(1))
        throw ConfigError("attend: model dim mismatch");
    const int d = q.dim(1);
    if (d % n_heads != 0) throw ConfigError("attend: dim not divisible by heads");
    const int dh = d / n_heads;
    const double scale = 1.0 / std::sqrt((double)dh);

    std::vector<Tensor> heads;
    heads.reserve((size_t)n_heads);
    for (int h = 0; h < n_heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, dh);
        Tensor kh = slice_cols(k, h * dh, dh);
        Tensor vh = slice_cols(v, h * dh, dh);
        Tensor scores = pstf::scale(matmul(qh, transpose2d(kh)), scale);
        Tensor probs = softmax_rows(scores);
        if (hook) hook->on_probs(probs);
        heads.push_back(matmul(probs, vh));
    }
    return concat_cols(heads);
}

void TdcaBlock::build(const std::string& prefix, int channels, const ModelConfig& cfg,
                      AttnTopology topo, ParamStore& params, Rng& rng) {
    d_model = cfg.d_model;
    n_heads = cfg.n_heads;
    topology = topo;
    ln_g = params.add(prefix + ".ln.g", Tensor::full({channels}, 1.0));
    ln_b = params.add(prefix + ".ln.b", Tensor::zeros({channels}));
    q_w = params.add(prefix + ".q.w", kaiming_init({d_model, channels}, channels, rng));
    q_b = params.add(prefix + ".q.b", Tensor::zeros({d_model}));
    out_w = params.add(prefix + ".out.w", kaiming_init({channels, d_model}, d_model, rng));
    out_b = params.add(prefix + ".out.b", Tensor::zeros({channels}));
    text_k = params.add(prefix + ".text_k.w", kaiming_init({d_model, cfg.d_ctx}, cfg.d_ctx, rng));
    text_v = params.add(prefix + ".text_v.w", kaiming_init({d_model, cfg.d_ctx}, cfg.d_ctx, rng));
    // The identity-path weights are drawn in both topologies from the same
    // stream position, so a concat ablation model shares its combined-path
    // initialization with the triplet model's identity path.
    Tensor ik = kaiming_init({d_model, cfg.d_ctx}, cfg.d_ctx, rng);
    Tensor iv = kaiming_init({d_model, cfg.d_ctx}, cfg.d_ctx, rng);
    if (topology == AttnTopology::kTriplet) {
        id_k = params.add(prefix + ".id_k.w", ik);
        id_v = params.add(prefix + ".id_v.w", iv);
        attr_k = params.add(prefix + ".attr_k.w",
                            kaiming_init({d_model, cfg.d_ctx}, cfg.d_ctx, rng));
        attr_v = params.add(prefix + ".attr_v.w",
                            kaiming_init({d_model, cfg.d_ctx}, cfg.d_ctx, rng));
    } else {
        concat_k = params.add(prefix + ".concat_k.w", ik);
        concat_v = params.add(prefix + ".concat_v.w", iv);
        // keep the init stream aligned with the triplet variant
        kaiming_init({d_model, cfg.d_ctx}, cfg.d_ctx, rng);
        kaiming_init({d_model, cfg.d_ctx}, cfg.d_ctx, rng);
    }
}

Tensor TdcaBlock::forward(const Tensor& x, const ConditioningBundle& bundle) const {
    if (bundle.text_tokens.dim(0) < 1 || bundle.id_tokens.dim(0) < 1 ||
        bundle.attr_tokens.dim(0) < 1)
        throw ConfigError("tdca: empty conditioning context");
    Tensor xn = layer_norm(x, ln_g, ln_b);
    Tensor q = linear(xn, q_w, q_b);
    Tensor z = attend(q, linear(bundle.text_tokens, text_k, Tensor()),
                      linear(bundle.text_tokens, text_v, Tensor()), n_heads);
    if (topology == AttnTopology::kTriplet) {
        if (bundle.lambda1 != 0.0) {
            Tensor zi = attend(q, linear(bundle.id_tokens, id_k, Tensor()),
                               linear(bundle.id_tokens, id_v, Tensor()), n_heads);
            z = lincomb(z, 1.0, zi, bundle.lambda1);
        }
        if (bundle.lambda2 != 0.0) {
            Tensor zj = attend(q, linear(bundle.attr_tokens, attr_k, Tensor()),
                               linear(bundle.attr_tokens, attr_v, Tensor()), n_heads);
            z = lincomb(z, 1.0, zj, bundle.lambda2);
        }
    } else {
        if (bundle.lambda1 != 0.0) {
            Tensor ctx = concat0(bundle.id_tokens, bundle.attr_tokens);
            Tensor zc = attend(q, linear(ctx, concat_k, Tensor()),
                               linear(ctx, concat_v, Tensor()), n_heads);
            z = lincomb(z, 1.0, zc, bundle.lambda1);
        }
    }
    return add(x, linear(z, out_w, out_b));
}

TdcaBlock::Branches TdcaBlock::branch_outputs(const Tensor& x,
                                              const ConditioningBundle& bundle) const {
    Branches out;
    Tensor xn = layer_norm(x, ln_g, ln_b);
    Tensor q = linear(xn, q_w, q_b);
    out.text = attend(q, linear(bundle.text_tokens, text_k, Tensor()),
                      linear(bundle.text_tokens, text_v, Tensor()), n_heads);
    if (topology == AttnTopology::kTriplet) {
        out.id = attend(q, linear(bundle.id_tokens, id_k, Tensor()),
                        linear(bundle.id_tokens, id_v, Tensor()), n_heads);
        out.attr = attend(q, linear(bundle.attr_tokens, attr_k, Tensor()),
                          linear(bundle.attr_tokens, attr_v, Tensor()), n_heads);
    } else {
        Tensor ctx = concat0(bundle.id_tokens, bundle.attr_tokens);
        out.id = attend(q, linear(ctx, concat_k, Tensor()),
                        linear(ctx, concat_v, Tensor()), n_heads);
    }
    return out;
}

void SelfAttnBlock::build(const std::string& prefix, int channels_, int n_heads_,
                          ParamStore& params, Rng& rng) {
    channels = channels_;
    n_heads = n_heads_;
    ln_g = params.add(prefix + ".ln.g", Tensor::full({channels}, 1.0));
    ln_b = params.add(prefix + ".ln.b", Tensor::zeros({channels}));
    q_w = params.add(prefix + ".q.w", kaiming_init({channels, channels}, channels, rng));
    q_b = params.add(prefix + ".q.b", Tensor::zeros({channels}));
    k_w = params.add(prefix + ".k.w", kaiming_init({channels, channels}, channels, rng));
    k_b = params.add(prefix + ".k.b", Tensor::zeros({channels}));
    v_w = params.add(prefix + ".v.w", kaiming_init({channels, channels}, channels, rng));
    v_b = params.add(prefix + ".v.b", Tensor::zeros({channels}));
    out_w = params.add(prefix + ".out.w", kaiming_init({channels, channels}, channels, rng));
    out_b = params.add(prefix + ".out.b", Tensor::zeros({channels}));
}

Tensor SelfAttnBlock::forward(const Tensor& x_tokens, TraceIO* trace) const {
    Tensor xn = layer_norm(x_tokens, ln_g, ln_b);
    Tensor z = attend(linear(xn, q_w, q_b), linear(xn, k_w, k_b), linear(xn, v_w, v_b),
                      n_heads, trace);
    return add(x_tokens, linear(z, out_w, out_b));
}

}  // namespace pstf
