#ifndef PSTF_METRICS_METRICS_HPP
#define PSTF_METRICS_METRICS_HPP

#include <string>
#include <vector>

#include "pstf/infer/sampler.hpp"
#include "pstf/world/probes.hpp"

namespace pstf {

// Dot product of unit-norm embeddings, in [-1, 1].
double cosine_similarity(const FaceEmbedding& a, const FaceEmbedding& b);

// Identity-probe cosine between each image and the reference image.
std::vector<double> sweep_similarity_curve(const std::vector<Image>& images,
                                           const Image& reference, const IdentityProbe& probe);

// Rank correlation for the monotonicity checks (average ranks on ties).
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

// One evaluation subject: a fresh world identity with its conditioning.
struct EvalRef {
    WorldParams theta;
    Image image;
    FaceEmbedding f;
    LandmarkSet landmarks;
    WPlusLatent w;
    int template_id = 1;
};

std::vector<EvalRef> make_eval_refs(const World& world, const IdentityProbe& probe, int count,
                                    uint64_t seed);

// Identity-similarity grid over refs x attributes x strengths. The absolute
// numbers come from the synthetic probe, not a real recognition model; the
// banner makes that explicit in every serialized report.
struct SimilarityReport {
    std::vector<std::string> attribute_names;
    std::vector<double> strengths;
    int n_refs = 0;
    std::vector<double> per_image;  // [ref][attr][strength] flattened
    std::vector<double> per_attribute_mean;
    std::vector<double> per_strength_mean;
    double aggregate = 0.0;
    double aggregate_filtered = 0.0;  // excluding cosines below the floor
    double similarity_floor = 0.6;
    std::string config_hash;
    std::string probe_banner = "probe=synthetic";

    double at(int ref, int attr, int strength) const;
    size_t grid_cells_per_ref() const {
        return attribute_names.size() * strengths.size();
    }
    std::string table_text() const;
    std::string to_json_string() const;
    void write(const std::string& json_path, const std::string& txt_path) const;
};

// Runs the sweep grid for one model.
SimilarityReport sweep_grid_report(Sampler& sampler, const std::vector<EvalRef>& refs,
                                   const DirectionBank& bank,
                                   const std::vector<double>& alphas,
                                   const IdentityProbe& probe, const std::string& config_hash,
                                   uint64_t seed_base, double similarity_floor);

// Paired comparison of two models over identical refs, seeds and grid.
struct AblationReport {
    SimilarityReport model_a;  // triplet
    SimilarityReport model_b;  // concat baseline
    std::vector<double> per_attribute_delta;
    std::vector<double> per_strength_delta;
    double aggregate_delta = 0.0;
    int positive_attribute_deltas = 0;

    std::string to_json_string() const;
};

AblationReport ablation_report(Sampler& model_a, Sampler& model_b,
                               const std::vector<EvalRef>& refs, const DirectionBank& bank,
                               const std::vector<double>& alphas, const IdentityProbe& probe,
                               const std::string& config_hash, uint64_t seed_base,
                               double similarity_floor);

std::vector<double> strength_grid(const MetricsConfig& cfg);

}  // namespace pstf

#endif  // PSTF_METRICS_METRICS_HPP
