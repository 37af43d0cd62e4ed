#ifndef PSTF_TRAIN_TRAINER_HPP
#define PSTF_TRAIN_TRAINER_HPP

#include <functional>
#include <string>
#include <vector>

#include "pstf/core/adamw.hpp"
#include "pstf/train/augment.hpp"
#include "pstf/train/losses.hpp"

namespace pstf {

// The training loop. Owns the optimizer and the RNG streams; everything that
// influences a step (sample picks, noise, timesteps, prompt dropout,
// augmentation) is derived from checkpointed state, so k+n straight steps
// and k steps + checkpoint + n steps are bit-identical.
class Trainer {
public:
    Trainer(const ExperimentConfig& cfg, const World& world, const ProbePair& probes,
            PstfModel& model, const DirectionBank& bank,
            const std::vector<TrainingSample>& dataset);

    struct StepInfo {
        int64_t step = 0;
        double loss = 0.0;
        double loss_diffusion = 0.0;
        double loss_identity = 0.0;
        double grad_norm = 0.0;
        double wall_ms = 0.0;
    };

    // One batch + one optimizer update. Throws RuntimeAbort on a non-finite
    // loss, with the step and the loss pieces in the message.
    StepInfo step();

    int64_t step_count() const { return step_; }
    int64_t samples_consumed() const { return sample_counter_; }
    int64_t planned_steps() const;

    using AugLogFn =
        std::function<void(int64_t step, int sample_index, const AugProvenance&)>;
    void set_aug_log(AugLogFn fn) { aug_log_ = std::move(fn); }

    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

    const ExperimentConfig& config() const { return cfg_; }
    PstfModel& model() { return model_; }

private:
    ExperimentConfig cfg_;
    const World& world_;
    const ProbePair& probes_;
    PstfModel& model_;
    const DirectionBank& bank_;
    const std::vector<TrainingSample>& dataset_;
    NoiseSchedule schedule_;
    AdamW opt_;
    Rng data_rng_, noise_rng_, drop_rng_;
    int64_t step_ = 0;
    int64_t sample_counter_ = 0;
    AugLogFn aug_log_;
};

// Checkpoint archive. Round-trip save -> load -> save is byte-identical.
struct CheckpointMeta {
    std::string config_hash;
    AttnTopology topology = AttnTopology::kTriplet;
    int64_t step = 0;
    int64_t sample_counter = 0;
};
CheckpointMeta read_checkpoint_meta(const std::string& path);

// Parameter-only load for inference tools; optimizer and RNG state are
// skipped. Pass an empty hash to accept any config.
void load_model_params(const std::string& path, PstfModel& model,
                       const std::string& expected_hash);

}  // namespace pstf

#endif  // PSTF_TRAIN_TRAINER_HPP
