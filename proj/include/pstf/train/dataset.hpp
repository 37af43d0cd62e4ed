#ifndef PSTF_TRAIN_DATASET_HPP
#define PSTF_TRAIN_DATASET_HPP

#include <optional>
#include <string>
#include <vector>

#include "pstf/core/config.hpp"
#include "pstf/world/probes.hpp"

namespace pstf {

struct AugProvenance {
    bool augmented = false;
    std::string attribute;  // empty when not augmented
    double alpha = 0.0;
};

// The training tuple (I, T, F, L, W). Augmentation substitutes image and
// latent, keeps F and L from the original, and retains the original image
// for the identity loss.
struct TrainingSample {
    int index = 0;
    Image image;  // denoising target
    int template_id = 1;
    FaceEmbedding f;
    LandmarkSet landmarks;
    WPlusLatent w;
    WorldParams theta;
    std::optional<Image> original;  // set when the target was substituted
    AugProvenance provenance;

    const Image& original_image() const { return original ? *original : image; }
};

// Writes the dataset directory: img/%06d.ppm, latents.bin, manifest.jsonl,
// meta.json. One manifest record per image: theta, landmarks, latent file
// reference, prompt string.
void emit_dataset(const World& world, const ExperimentConfig& cfg, const std::string& dir);

// Loads what emit_dataset wrote; identity embeddings are recomputed from the
// stored images with the given probe.
std::vector<TrainingSample> load_dataset(const std::string& dir, const World& world,
                                         const IdentityProbe& probe,
                                         const std::vector<std::string>& templates);

// Fingerprint of a manifest file (for idempotence checks).
uint64_t file_fnv1a(const std::string& path);

}  // namespace pstf

#endif  // PSTF_TRAIN_DATASET_HPP
