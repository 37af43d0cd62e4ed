#ifndef PSTF_MODEL_MODEL_HPP
#define PSTF_MODEL_MODEL_HPP

#include <string>
#include <vector>

#include "pstf/model/unet.hpp"

namespace pstf {

// The assembled generator: conditioning encoders plus the denoising UNet,
// all parameters in one named registry.
struct PstfModel {
    ModelConfig cfg;
    int image_size = 0;
    int d_id = 0;
    AttnTopology topology = AttnTopology::kTriplet;

    ParamStore params;
    TextEncoder text;
    IdentityProjector id_proj;
    AttrProjector attr_proj;
    UNet unet;

    void build(const WorldConfig& wc, const ModelConfig& mc, uint64_t seed,
               AttnTopology topology = AttnTopology::kTriplet);

    // Assembles the three contexts. Null prompt + zero gains is the
    // unconditional CFG branch.
    ConditioningBundle make_bundle(int template_id, const FaceEmbedding& f,
                                   const WPlusLatent& w, double lambda1, double lambda2) const;

    Tensor predict_noise(const Tensor& x_t, int t, const ConditioningBundle& bundle,
                         const Tensor& heatmap, TraceIO* trace = nullptr) const {
        return unet.forward(x_t, t, bundle, heatmap, trace);
    }

    // Freeze policy. "full" trains everything; "paper_faithful" trains only
    // the attribute projector and the attribute (or concat) K/V projections.
    void set_train_mode(const std::string& mode);
    static bool adapter_param(const std::string& name);
    std::vector<std::string> trainable_parameter_names() const {
        return params.trainable_names();
    }
};

}  // namespace pstf

#endif  // PSTF_MODEL_MODEL_HPP
