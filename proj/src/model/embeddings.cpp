#include "pstf/model/embeddings.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "pstf/core/errors.hpp"
#include "pstf/core/ops.hpp"

namespace pstf {

void TextEncoder::build(const ModelConfig& cfg, ParamStore& params, Rng& rng) {
    templates.clear();
    template_tokens.clear();
    templates.push_back("");  // null prompt
    for (const auto& t : cfg.templates) templates.push_back(t);

    std::map<std::string, int> word_ids;
    auto word_id = [&](const std::string& w) {
        auto it = word_ids.find(w);
        if (it != word_ids.end()) return it->second;
        const int id = 1 + (int)word_ids.size();  // 0 reserved for <null>
        word_ids.emplace(w, id);
        return id;
    };
    for (const auto& t : templates) {
        std::vector<int> ids;
        if (t.empty()) {
            ids.push_back(0);
        } else {
            std::istringstream is(t);
            std::string w;
            while (is >> w) ids.push_back(word_id(w));
        }
        template_tokens.push_back(std::move(ids));
    }
    vocab_size = 1 + (int)word_ids.size();
    table = params.add("emb.text.table",
                       Tensor::randn({vocab_size, cfg.d_ctx}, rng, 0.3));
}

int TextEncoder::template_id(const std::string& text) const {
    for (size_t i = 0; i < templates.size(); ++i)
        if (templates[i] == text) return (int)i;
    throw UsageError("unknown prompt template: '" + text + "'");
}

Tensor TextEncoder::encode(int tid) const {
    if (tid < 0 || tid >= (int)templates.size())
        throw UsageError("unknown template id: " + std::to_string(tid));
    return gather_rows(table, template_tokens[(size_t)tid]);
}

void IdentityProjector::build(const ModelConfig& cfg, int d_id, ParamStore& params, Rng& rng) {
    id_tokens = cfg.id_tokens;
    d_ctx = cfg.d_ctx;
    w = params.add("emb.id_proj.w", kaiming_init({id_tokens * d_ctx, d_id}, d_id, rng));
    b = params.add("emb.id_proj.b", Tensor::zeros({id_tokens * d_ctx}));
}

Tensor IdentityProjector::project_tensor(const Tensor& f) const {
    Tensor row = reshape(f, {1, f.dim(0)});
    Tensor out = linear(row, w, b);  // [1, id_tokens*d_ctx]
    return reshape(out, {id_tokens, d_ctx});
}

Tensor IdentityProjector::project(const FaceEmbedding& f) const {
    return project_tensor(Tensor::from_data({(int)f.v.size()}, f.v));
}

double IdentityProjector::operator_norm(int iters) const {
    const int rows = w.dim(0), cols = w.dim(1);
    std::vector<double> v((size_t)cols, 1.0 / std::sqrt((double)cols));
    double sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
        std::vector<double> u((size_t)rows, 0.0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) u[(size_t)r] += w.ptr()[(size_t)r * cols + c] * v[(size_t)c];
        std::vector<double> v2((size_t)cols, 0.0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) v2[(size_t)c] += w.ptr()[(size_t)r * cols + c] * u[(size_t)r];
        double n = 0.0;
        for (double x : v2) n += x * x;
        n = std::sqrt(n);
        if (n == 0.0) return 0.0;
        for (auto& x : v2) x /= n;
        v = v2;
        sigma = std::sqrt(n);
    }
    return sigma;
}

void AttrProjector::build(const WorldConfig& wc, const ModelConfig& mc, ParamStore& params,
                          Rng& rng) {
    n_layers = wc.n_layers;
    d_ctx = mc.d_ctx;
    w.clear();
    b.clear();
    for (int l = 0; l < n_layers; ++l) {
        w.push_back(params.add("emb.attr_proj.l" + std::to_string(l) + ".w",
                               kaiming_init({d_ctx, wc.d_latent}, wc.d_latent, rng)));
        b.push_back(params.add("emb.attr_proj.l" + std::to_string(l) + ".b",
                               Tensor::zeros({d_ctx})));
    }
}

Tensor AttrProjector::project(const WPlusLatent& latent) const {
    if (latent.n_layers() != n_layers)
        throw ConfigError("project_attributes: latent has " +
                          std::to_string(latent.n_layers()) + " layers, projector expects " +
                          std::to_string(n_layers));
    std::vector<Tensor> rows;
    rows.reserve((size_t)n_layers);
    Tensor flat = reshape(latent.mat, {1, (int)latent.mat.numel()});
    for (int l = 0; l < n_layers; ++l) {
        Tensor row = slice_cols(flat, l * latent.d_latent(), latent.d_latent());
        rows.push_back(linear(row, w[(size_t)l], b[(size_t)l]));  // [1, d_ctx]
    }
    Tensor out = rows[0];
    for (size_t l = 1; l < rows.size(); ++l) out = concat0(out, rows[l]);
    return out;  // [n_layers, d_ctx]
}

Tensor AttrProjector::project_delta(const Tensor& delta) const {
    if (delta.dim(0) != n_layers) throw ConfigError("project_delta: layer mismatch");
    Tensor out = Tensor::zeros({n_layers, d_ctx});
    const int dl = delta.dim(1);
    for (int l = 0; l < n_layers; ++l)
        for (int o = 0; o < d_ctx; ++o) {
            double acc = 0.0;
            for (int c = 0; c < dl; ++c)
                acc += w[(size_t)l].ptr()[(size_t)o * dl + c] * delta.ptr()[(size_t)l * dl + c];
            out.ptr()[(size_t)l * d_ctx + o] = acc;
        }
    return out;
}

}  // namespace pstf
