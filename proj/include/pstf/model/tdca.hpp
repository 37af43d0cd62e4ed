#ifndef PSTF_MODEL_TDCA_HPP
#define PSTF_MODEL_TDCA_HPP

#include <string>
#include <vector>

#include "pstf/core/params.hpp"
#include "pstf/model/embeddings.hpp"

namespace pstf {

// Records or substitutes post-softmax attention probabilities. Substitution
// happens before the probs @ values product, so a replayed run recomputes
// everything downstream from the injected maps bit-for-bit.
struct TraceIO {
    enum class Mode { kRecord, kReplay };
    Mode mode = Mode::kRecord;

    struct Entry {
        int rows = 0;
        int cols = 0;
        std::vector<double> probs;  // rows*cols
    };
    std::vector<Entry>* entries = nullptr;
    size_t cursor = 0;

    void on_probs(Tensor& p);
};

// Row-wise softmax attention over already-projected q/k/v, split into heads.
// `hook`, when set, sees one post-softmax matrix per head.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads,
              TraceIO* hook = nullptr);

enum class AttnTopology { kTriplet, kConcat };

// One cross-attention block. The triplet topology keeps independent key/value
// paths for text, identity, and attributes; the concat ablation runs the
// identity and attribute tokens through one shared path.
struct TdcaBlock {
    int d_model = 0;
    int n_heads = 0;
    AttnTopology topology = AttnTopology::kTriplet;

    Tensor ln_g, ln_b;       // pre-norm over the feature tokens
    Tensor q_w, q_b;         // [d_model, c]
    Tensor out_w, out_b;     // [c, d_model]
    Tensor text_k, text_v;   // [d_model, d_ctx]
    Tensor id_k, id_v;       // triplet only
    Tensor attr_k, attr_v;   // triplet only (the trainable adapter path)
    Tensor concat_k, concat_v;  // concat ablation only

    void build(const std::string& prefix, int channels, const ModelConfig& cfg,
               AttnTopology topology, ParamStore& params, Rng& rng);

    // x: [T, c] feature tokens. Returns x + out_proj(sum of branch outputs).
    Tensor forward(const Tensor& x, const ConditioningBundle& bundle) const;

    // Per-branch attention outputs before gains (test/diagnostic surface).
    struct Branches {
        Tensor text;
        Tensor id;    // triplet: identity branch; concat: combined branch
        Tensor attr;  // triplet only
    };
    Branches branch_outputs(const Tensor& x, const ConditioningBundle& bundle) const;
};

// Self-attention block over spatial tokens; its probability maps are the
// layout trace sites.
struct SelfAttnBlock {
    int channels = 0;
    int n_heads = 0;
    Tensor ln_g, ln_b;
    Tensor q_w, q_b, k_w, k_b, v_w, v_b, out_w, out_b;

    void build(const std::string& prefix, int channels, int n_heads, ParamStore& params,
               Rng& rng);
    Tensor forward(const Tensor& x_tokens, TraceIO* trace) const;
};

}  // namespace pstf

#endif  // PSTF_MODEL_TDCA_HPP
