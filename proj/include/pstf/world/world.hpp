#ifndef PSTF_WORLD_WORLD_HPP
#define PSTF_WORLD_WORLD_HPP

#include <array>
#include <string>
#include <vector>

#include "pstf/core/config.hpp"
#include "pstf/core/image.hpp"
#include "pstf/core/rng.hpp"
#include "pstf/core/tensor.hpp"
#include "pstf/latent/latent.hpp"

namespace pstf {

// Ground-truth generative factors of one face. Identity factors never move
// under attribute edits, which is what makes "identity preserved" a testable
// statement in this world.
struct WorldParams {
    std::vector<double> identity;   // hue, face aspect, eye spacing, skin tone
    std::vector<double> attribute;  // smile, eye_open, glasses, bright, pose, wrinkle

    WorldParams() : identity(kIdentityFactors, 0.0), attribute(kAttributeFactors, 0.0) {}

    static constexpr int kIdentityFactors = 4;
    static constexpr int kAttributeFactors = 6;
    static constexpr int kTotalFactors = kIdentityFactors + kAttributeFactors;

    std::vector<double> concat() const;
    static WorldParams from_concat(const std::vector<double>& f);
};

const std::vector<std::string>& synthetic_attribute_names();

// L2-normalized identity feature vector.
struct FaceEmbedding {
    std::vector<double> v;

    double cosine(const FaceEmbedding& other) const;
    void normalize();
};

// K x 2 pixel coordinates: left eye, right eye, nose tip, left/right mouth corner.
struct LandmarkSet {
    std::vector<std::array<double, 2>> points;
    static constexpr int kCount = 5;
};

// The procedural face world. Holds the fixed linear factor<->latent map A
// (orthonormal columns, drawn once from the world seed), the identity-target
// lift M used by the identity probe, and the dataset manifold mixer.
class World {
public:
    World(const WorldConfig& cfg, uint64_t seed);

    const WorldConfig& config() const { return cfg_; }
    int image_size() const { return cfg_.image_size; }
    uint64_t seed() const { return seed_; }

    // --- rendering ------------------------------------------------------
    // Deterministic, pixel-exact given theta. Output is quantized to the
    // 1/255 grid so PPM round-trips are exact. Factors beyond the valid
    // range +-kValidRange are clamped; `clamped` reports it when non-null.
    Image render(const WorldParams& theta, bool* clamped = nullptr) const;

    LandmarkSet landmarks(const WorldParams& theta) const;

    // Conservative pixel mask covering every pixel the mouth band can touch
    // for the two given smile values (other factors shared). Pixels outside
    // it are untouched by a smile-only change.
    std::vector<uint8_t> mouth_region_mask(const WorldParams& a, const WorldParams& b) const;

    // Axis-aligned face region derived from landmarks, with margin in px.
    std::vector<uint8_t> face_region_mask(const LandmarkSet& lm, double margin_px) const;

    // Analytic geometry accessor backing the landmark tests: eye-center
    // distance in px as a function of the eye-spacing factor.
    double eye_distance_px(double eye_spacing_factor) const;

    // --- factor <-> latent map -----------------------------------------
    WPlusLatent embed_latent(const WorldParams& theta) const;
    WorldParams recover_factors(const WPlusLatent& w) const;

    // Unit direction for attribute factor k; applying it at strength alpha
    // moves recovered factor k by exactly alpha.
    AttributeDirection analytic_direction(int attr_index) const;
    DirectionBank analytic_bank() const;

    // Decode path standing in for the GAN decoder: recover factors, render.
    Image decode(const WPlusLatent& w) const;

    // --- sampling -------------------------------------------------------
    // Independent factors over the calibrated ranges (probe training).
    WorldParams sample_independent(Rng& rng) const;
    // Dataset manifold: attributes follow a fixed mix of the identity
    // factors plus noise, so edited latents leave the training manifold.
    WorldParams sample_dataset(Rng& rng) const;

    // Landmark heatmap for the spatial branch: sum of Gaussian blobs.
    Tensor landmark_heatmap(const LandmarkSet& lm, double sigma_px) const;

    // Identity-probe target: normalize(M * identity_factors).
    FaceEmbedding identity_target(const WorldParams& theta) const;

    void save(const std::string& path) const;
    static World load(const std::string& path);

    const Tensor& factor_map() const { return map_a_; }  // [d_latent, 10]

    static constexpr double kCalibratedRange = 1.0;
    static constexpr double kValidRange = 4.0;

private:
    WorldConfig cfg_;
    uint64_t seed_ = 0;
    Tensor map_a_;      // [d_latent, kTotalFactors], orthonormal columns
    Tensor id_lift_;    // [d_id, kIdentityFactors], orthonormal columns
    Tensor attr_mix_;   // [kAttributeFactors, kIdentityFactors]

    World() = default;
    void derive_matrices();
};

// Orthonormalize the columns of a random Gaussian draw (modified Gram-Schmidt).
Tensor orthonormal_columns(int rows, int cols, Rng& rng);

}  // namespace pstf

#endif  // PSTF_WORLD_WORLD_HPP
