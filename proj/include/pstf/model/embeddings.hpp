#ifndef PSTF_MODEL_EMBEDDINGS_HPP
#define PSTF_MODEL_EMBEDDINGS_HPP

#include <string>
#include <vector>

#include "pstf/core/config.hpp"
#include "pstf/core/params.hpp"
#include "pstf/latent/latent.hpp"
#include "pstf/world/world.hpp"

namespace pstf {

// Template id 0 is the reserved null prompt used for the unconditional CFG
// branch; real templates follow in config order.
constexpr int kNullTemplateId = 0;

// Tiny word-level text encoder over the fixed template vocabulary. The
// embedding table is a learned lookup; encoding is deterministic.
struct TextEncoder {
    std::vector<std::string> templates;           // [0] = ""
    std::vector<std::vector<int>> template_tokens;  // token ids per template
    int vocab_size = 0;
    Tensor table;  // [vocab, d_ctx], registered in the model's ParamStore

    void build(const ModelConfig& cfg, ParamStore& params, Rng& rng);

    int template_id(const std::string& text) const;  // UsageError if unknown
    Tensor encode(int template_id) const;            // [T, d_ctx]
};

// Frozen projection of the identity embedding into a fixed number of tokens.
struct IdentityProjector {
    int id_tokens = 0;
    int d_ctx = 0;
    Tensor w;  // [id_tokens*d_ctx, d_id]
    Tensor b;  // [id_tokens*d_ctx]

    void build(const ModelConfig& cfg, int d_id, ParamStore& params, Rng& rng);
    Tensor project(const FaceEmbedding& f) const;  // [id_tokens, d_ctx]
    Tensor project_tensor(const Tensor& f) const;  // differentiable path

    // Largest singular value of w, by power iteration (test support).
    double operator_norm(int iters = 200) const;
};

// Trainable per-layer linear maps: one token per W+ row.
struct AttrProjector {
    int n_layers = 0;
    int d_ctx = 0;
    std::vector<Tensor> w;  // per layer [d_ctx, d_latent]
    std::vector<Tensor> b;  // per layer [d_ctx]

    void build(const WorldConfig& wc, const ModelConfig& mc, ParamStore& params, Rng& rng);
    Tensor project(const WPlusLatent& latent) const;  // [n_layers, d_ctx]
    // Bias-free map of a latent delta; project(W + a*D) - project(W) ==
    // a * project_delta(D) for this linear projector.
    Tensor project_delta(const Tensor& delta) const;
};

// The three contexts a TDCA block consumes, with the branch gains.
struct ConditioningBundle {
    Tensor text_tokens;  // [Tt, d_ctx]
    Tensor id_tokens;    // [Ti, d_ctx]
    Tensor attr_tokens;  // [Tj, d_ctx]
    double lambda1 = 1.0;
    double lambda2 = 1.0;
};

}  // namespace pstf

#endif  // PSTF_MODEL_EMBEDDINGS_HPP
