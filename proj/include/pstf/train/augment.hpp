#ifndef PSTF_TRAIN_AUGMENT_HPP
#define PSTF_TRAIN_AUGMENT_HPP

#include "pstf/core/config.hpp"
#include "pstf/train/dataset.hpp"

namespace pstf {

// Attribute-controlled synthesis augmentation. With probability cfg.rate the
// sample's latent is edited by a random bank direction at a random strength
// and the target image is replaced by the decoded edit; identity features
// and landmarks stay those of the original (that mismatch is exactly what
// the identity loss is for). Provenance is always filled in.
TrainingSample maybe_augment(const TrainingSample& sample, const DirectionBank& bank,
                             const AugmentConfig& cfg, const World& world, Rng& rng);

// Eligible direction indices for the config (empty filter = all).
std::vector<int> eligible_directions(const DirectionBank& bank, const AugmentConfig& cfg);

}  // namespace pstf

#endif  // PSTF_TRAIN_AUGMENT_HPP
