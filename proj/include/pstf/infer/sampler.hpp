#ifndef PSTF_INFER_SAMPLER_HPP
#define PSTF_INFER_SAMPLER_HPP

#include <string>
#include <vector>

#include "pstf/model/model.hpp"
#include "pstf/model/schedule.hpp"
#include "pstf/world/world.hpp"

namespace pstf {

// Self-attention maps recorded during a reference generation, indexed by the
// generating schedule: per step, the unconditional then the conditional
// forward, each touching every self-attention site in network order.
struct AttentionTrace {
    int steps = 0;
    int entries_per_step = 0;
    std::vector<TraceIO::Entry> entries;

    void save(const std::string& path) const;
    static AttentionTrace load(const std::string& path);
};

struct GenerationInputs {
    FaceEmbedding f;
    LandmarkSet landmarks;
    WPlusLatent w;
    int template_id = 1;
};

struct GenerationResult {
    Image image;
    AttentionTrace trace;
    std::vector<double> initial_noise;
};

// Deterministic DDIM generation with classifier-free guidance. The
// unconditional branch runs the null prompt with both adapter gains at zero;
// the landmark branch stays on for both.
class Sampler {
public:
    Sampler(PstfModel& model, const World& world, const InferenceConfig& cfg);

    GenerationResult generate(const GenerationInputs& in, uint64_t seed) const;

    // Re-generation that substitutes the recorded self-attention maps at
    // every site (cross-attention is recomputed). Seed and inputs decide the
    // rest. Throws ConfigError when the trace does not match the schedule.
    Image generate_with_trace_replay(const GenerationInputs& in, const AttentionTrace& trace,
                                     uint64_t seed) const;

    struct SweepResult {
        std::vector<Image> images;  // one per alpha
        AttentionTrace trace;       // recorded at alpha = 0
        std::vector<double> initial_noise;
    };

    // Reference run at alpha 0 records the trace; every listed alpha is then
    // produced with the same seed and (when layout_lock) the same maps.
    SweepResult attribute_sweep_run(const GenerationInputs& in, const AttributeDirection& d,
                                    const std::vector<double>& alphas, uint64_t seed) const;

    const InferenceConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return schedule_; }

private:
    Image run(const GenerationInputs& in, uint64_t seed, TraceIO* hook,
              AttentionTrace* record_into, std::vector<double>* noise_out) const;

    PstfModel& model_;
    const World& world_;
    InferenceConfig cfg_;
    NoiseSchedule schedule_;
};

}  // namespace pstf

#endif  // PSTF_INFER_SAMPLER_HPP
