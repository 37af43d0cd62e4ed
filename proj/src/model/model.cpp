#include "pstf/model/model.hpp"

#include "pstf/core/errors.hpp"

namespace pstf {

void PstfModel::build(const WorldConfig& wc, const ModelConfig& mc, uint64_t seed,
                      AttnTopology topo) {
    cfg = mc;
    image_size = wc.image_size;
    d_id = wc.d_id;
    topology = topo;
    Rng rng(seed, "model.init");
    text.build(mc, params, rng);
    id_proj.build(mc, wc.d_id, params, rng);
    attr_proj.build(wc, mc, params, rng);
    unet.build(mc, wc.image_size, topo, params, rng);
    set_train_mode("full");
}

ConditioningBundle PstfModel::make_bundle(int template_id, const FaceEmbedding& f,
                                          const WPlusLatent& w, double lambda1,
                                          double lambda2) const {
    ConditioningBundle b;
    b.text_tokens = text.encode(template_id);
    b.id_tokens = id_proj.project(f);
    b.attr_tokens = attr_proj.project(w);
    b.lambda1 = lambda1;
    b.lambda2 = lambda2;
    return b;
}

bool PstfModel::adapter_param(const std::string& name) {
    if (name.rfind("emb.attr_proj.", 0) == 0) return true;
    return name.find(".attr_k.") != std::string::npos ||
           name.find(".attr_v.") != std::string::npos ||
           name.find(".concat_k.") != std::string::npos ||
           name.find(".concat_v.") != std::string::npos;
}

void PstfModel::set_train_mode(const std::string& mode) {
    if (mode == "full") {
        params.set_trainable([](const std::string&) { return true; });
    } else if (mode == "paper_faithful") {
        params.set_trainable(adapter_param);
    } else {
        throw UsageError("unknown train mode: " + mode);
    }
}

}  // namespace pstf
