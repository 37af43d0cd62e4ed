#ifndef PSTF_WORLD_PROBES_HPP
#define PSTF_WORLD_PROBES_HPP

#include <string>
#include <utility>
#include <vector>

#include "pstf/core/params.hpp"
#include "pstf/world/world.hpp"

namespace pstf {

// Small convnet shared by both probes: three stride-2 convs, one hidden
// linear, one head. Everything lives in a ParamStore so the checkpointing
// and freeze plumbing can treat probes like any other net.
struct ProbeNet {
    int image_size = 0;
    int out_dim = 0;
    std::string prefix;
    ParamStore params;

    ProbeNet() = default;
    ProbeNet(int image_size, int out_dim, Rng& rng, const std::string& prefix);

    // [3,S,S] -> [out_dim]; builds a tape when grad mode is on.
    Tensor forward(const Tensor& img) const;
};

// Stands in for the face recognition model: image -> unit-norm embedding.
struct IdentityProbe {
    ProbeNet net;

    Tensor embed_tensor(const Tensor& img) const;  // differentiable, normalized
    FaceEmbedding embed(const Image& img) const;
};

// Regresses the six attribute factors from pixels.
struct AttributeProbe {
    ProbeNet net;

    std::vector<double> predict(const Image& img) const;
};

struct ProbeMetrics {
    std::vector<double> r2_per_factor;
    double auc = 0.0;
    double triplet_rate = 0.0;

    std::string summary() const;
};

struct ProbePair {
    IdentityProbe identity;
    AttributeProbe attribute;
    ProbeMetrics metrics;
    std::string config_hash;
};

// Trains both probes on freshly sampled synthetic renders and validates the
// contract (per-factor R^2 >= 0.9, verification AUC >= 0.95) on held-out
// data. Throws ValidationError with the metrics attached if unmet.
ProbePair train_probes(const World& world, int dataset_size, uint64_t seed,
                       const std::string& config_hash = "");

void save_probes(const ProbePair& probes, const std::string& path);
ProbePair load_probes(const std::string& path);

constexpr double kProbeMinR2 = 0.9;
constexpr double kProbeMinAuc = 0.95;
constexpr double kProbeMinTripletRate = 0.95;

}  // namespace pstf

#endif  // PSTF_WORLD_PROBES_HPP
