#ifndef PSTF_CORE_CONFIG_HPP
#define PSTF_CORE_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace pstf {

// All knobs an experiment run can turn. Loaded from a single JSON file with
// strict validation: unknown keys anywhere are rejected so a typo in a
// hyperparameter name cannot silently fall back to a default.

struct WorldConfig {
    int image_size = 32;
    int n_layers = 6;    // W+ rows
    int d_latent = 64;   // W+ columns
    int d_id = 32;       // identity embedding dim
    int dataset_size = 5000;
    // Dataset manifold: attribute factors = coupling * Mix * id_factors + noise.
    // Edited latents leave this manifold, which is what the no-augmentation
    // ablation is about.
    double attr_id_coupling = 1.0;
    double attr_noise = 0.25;
    int probe_dataset_size = 2000;
    int probe_train_steps = 3000;
    double probe_lr = 2e-3;
};

struct ModelConfig {
    int d_ctx = 48;     // conditioning token width
    int d_model = 128;  // attention width inside TDCA / self-attention
    int n_heads = 4;
    int id_tokens = 4;
    std::vector<int> channels = {32, 64, 96};  // per resolution level
    int gn_groups = 8;
    int time_embed_dim = 64;
    double heatmap_sigma = 1.5;  // px, landmark blobs
    // Self-attention (the layout-trace sites) lives at levels >= this index.
    int self_attn_min_level = 1;
    // Diffusion schedule.
    int timesteps = 200;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    std::vector<std::string> templates = {"a person", "portrait", "a face",
                                          "portrait of a person"};
};

struct TrainConfig {
    double lr = 1e-3;  // paper trains at 1e-5 on SDXL; desk-scale from-scratch needs more
    double weight_decay = 0.01;
    int epochs = 100;
    int max_steps = 2000;
    int batch_size = 8;
    double lambda_id = 1.0;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    std::string mode = "full";  // "full" | "paper_faithful"
    double uncond_drop_rate = 0.1;
    int id_loss_t_min = 0;  // skip the identity loss below this timestep
    int checkpoint_every = 500;
    int log_every = 25;
};

struct AugmentConfig {
    double rate = 0.3;
    double alpha_min = 0.0;
    double alpha_max = 2.5;
    std::vector<std::string> eligible_attributes;  // empty = every bank entry
    bool recompute_landmarks = false;
};

struct InferenceConfig {
    int steps = 50;
    double cfg_scale = 5.0;
    double lambda1 = 1.0;
    double lambda2 = 0.5;
    bool layout_lock = true;
    int replay_steps = -1;  // -1 = substitute traces at every step
};

struct MetricsConfig {
    double strength_start = 0.0;
    double strength_step = 0.2;
    int strength_count = 13;
    double similarity_floor = 0.6;  // the "*" filtering rule
    int eval_refs = 4;
};

struct ExperimentConfig {
    int format_version = 1;
    uint64_t seed = 42;
    std::string out_dir = "out";
    WorldConfig world;
    ModelConfig model;
    TrainConfig train;
    AugmentConfig augment;
    InferenceConfig inference;
    MetricsConfig metrics;

    void validate() const;

    // FNV-1a over the canonical JSON dump of the effective config.
    std::string hash_hex() const;
    std::string to_json_string() const;

    static ExperimentConfig from_json_string(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    void save(const std::string& path) const;
};

}  // namespace pstf

#endif  // PSTF_CORE_CONFIG_HPP
