#include "pstf/train/augment.hpp"

#include "pstf/core/errors.hpp"
#include "pstf/latent/latent.hpp"

namespace pstf {

std::vector<int> eligible_directions(const DirectionBank& bank, const AugmentConfig& cfg) {
    std::vector<int> idx;
    if (cfg.eligible_attributes.empty()) {
        for (size_t i = 0; i < bank.size(); ++i) idx.push_back((int)i);
        return idx;
    }
    for (const auto& name : cfg.eligible_attributes) {
        const int i = bank.index_of(name);
        if (i < 0) throw UsageError("augment: unknown eligible attribute: " + name);
        idx.push_back(i);
    }
    return idx;
}

TrainingSample maybe_augment(const TrainingSample& sample, const DirectionBank& bank,
                             const AugmentConfig& cfg, const World& world, Rng& rng) {
    TrainingSample out = sample;
    out.provenance = AugProvenance{};
    if (bank.size() == 0 || rng.uniform() >= cfg.rate) return out;

    const auto idx = eligible_directions(bank, cfg);
    const AttributeDirection& d = bank.directions[(size_t)idx[rng.uniform_index(idx.size())]];
    const double alpha = rng.uniform(cfg.alpha_min, cfg.alpha_max);

    if (sample.w.mat.shape() != d.delta.shape())
        throw ConfigError("augment: latent/direction shape mismatch");

    out.original = sample.image;
    out.w = apply_edit(sample.w, d, alpha);
    out.image = world.decode(out.w);
    if (cfg.recompute_landmarks)
        out.landmarks = world.landmarks(world.recover_factors(out.w));
    out.provenance.augmented = true;
    out.provenance.attribute = d.attribute_id;
    out.provenance.alpha = alpha;
    return out;
}

}  // namespace pstf
