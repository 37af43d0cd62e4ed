#include "pstf/core/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pstf/core/errors.hpp"

namespace pstf {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw ValidationError("config: unknown key '" + it.key() + "' in " + scope);
    }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

json world_to_json(const WorldConfig& c) {
    return json{{"image_size", c.image_size},
                {"n_layers", c.n_layers},
                {"d_latent", c.d_latent},
                {"d_id", c.d_id},
                {"dataset_size", c.dataset_size},
                {"attr_id_coupling", c.attr_id_coupling},
                {"attr_noise", c.attr_noise},
                {"probe_dataset_size", c.probe_dataset_size},
                {"probe_train_steps", c.probe_train_steps},
                {"probe_lr", c.probe_lr}};
}

json model_to_json(const ModelConfig& c) {
    return json{{"d_ctx", c.d_ctx},
                {"d_model", c.d_model},
                {"n_heads", c.n_heads},
                {"id_tokens", c.id_tokens},
                {"channels", c.channels},
                {"gn_groups", c.gn_groups},
                {"time_embed_dim", c.time_embed_dim},
                {"heatmap_sigma", c.heatmap_sigma},
                {"self_attn_min_level", c.self_attn_min_level},
                {"timesteps", c.timesteps},
                {"beta_min", c.beta_min},
                {"beta_max", c.beta_max},
                {"templates", c.templates}};
}

json train_to_json(const TrainConfig& c) {
    return json{{"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"epochs", c.epochs},
                {"max_steps", c.max_steps},
                {"batch_size", c.batch_size},
                {"lambda_id", c.lambda_id},
                {"lambda1", c.lambda1},
                {"lambda2", c.lambda2},
                {"mode", c.mode},
                {"uncond_drop_rate", c.uncond_drop_rate},
                {"id_loss_t_min", c.id_loss_t_min},
                {"checkpoint_every", c.checkpoint_every},
                {"log_every", c.log_every}};
}

json augment_to_json(const AugmentConfig& c) {
    return json{{"rate", c.rate},
                {"alpha_min", c.alpha_min},
                {"alpha_max", c.alpha_max},
                {"eligible_attributes", c.eligible_attributes},
                {"recompute_landmarks", c.recompute_landmarks}};
}

json inference_to_json(const InferenceConfig& c) {
    return json{{"steps", c.steps},          {"cfg_scale", c.cfg_scale},
                {"lambda1", c.lambda1},      {"lambda2", c.lambda2},
                {"layout_lock", c.layout_lock}, {"replay_steps", c.replay_steps}};
}

json metrics_to_json(const MetricsConfig& c) {
    return json{{"strength_start", c.strength_start},
                {"strength_step", c.strength_step},
                {"strength_count", c.strength_count},
                {"similarity_floor", c.similarity_floor},
                {"eval_refs", c.eval_refs}};
}

}  // namespace

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("config: " + msg); };
    if (format_version != 1) fail("unsupported format_version");
    if (world.image_size < 8 || world.image_size > 128 || world.image_size % 4 != 0)
        fail("world.image_size must be a multiple of 4 in [8,128]");
    if (world.n_layers < 1 || world.d_latent < 10) fail("bad W+ shape");
    if (world.d_id < 4) fail("world.d_id too small");
    if (world.dataset_size < 1) fail("world.dataset_size must be positive");
    if (model.channels.size() != 3) fail("model.channels needs 3 levels");
    for (int c : model.channels)
        if (c < model.gn_groups || c % model.gn_groups != 0)
            fail("model.channels must be divisible by gn_groups");
    if (model.d_model % model.n_heads != 0) fail("model.d_model must divide by n_heads");
    if (model.timesteps < 2) fail("model.timesteps must be >= 2");
    if (!(model.beta_min > 0.0 && model.beta_max < 1.0 && model.beta_min <= model.beta_max))
        fail("schedule betas must satisfy 0 < beta_min <= beta_max < 1");
    if (model.templates.empty()) fail("model.templates must not be empty");
    if (train.lr <= 0.0) fail("train.lr must be positive");
    if (train.lambda_id < 0.0) fail("train.lambda_id must be >= 0");
    if (train.batch_size < 1) fail("train.batch_size must be positive");
    if (train.mode != "full" && train.mode != "paper_faithful")
        fail("train.mode must be 'full' or 'paper_faithful'");
    if (train.uncond_drop_rate < 0.0 || train.uncond_drop_rate > 1.0)
        fail("train.uncond_drop_rate must be in [0,1]");
    if (augment.rate < 0.0 || augment.rate > 1.0) fail("augment.rate must be in [0,1]");
    if (augment.alpha_min > augment.alpha_max) fail("augment.alpha_min > alpha_max");
    if (inference.steps < 1) fail("inference.steps must be >= 1");
    if (metrics.strength_count < 1) fail("metrics.strength_count must be >= 1");
    if (metrics.eval_refs < 1) fail("metrics.eval_refs must be >= 1");
}

std::string ExperimentConfig::to_json_string() const {
    json j{{"format_version", format_version},
           {"seed", seed},
           {"out_dir", out_dir},
           {"world", world_to_json(world)},
           {"model", model_to_json(model)},
           {"train", train_to_json(train)},
           {"augment", augment_to_json(augment)},
           {"inference", inference_to_json(inference)},
           {"metrics", metrics_to_json(metrics)}};
    return j.dump(2);
}

std::string ExperimentConfig::hash_hex() const {
    const std::string s = to_json_string();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return std::string(buf);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("config: parse error: ") + e.what());
    }
    ExperimentConfig c;
    reject_unknown(j, {"format_version", "seed", "out_dir", "world", "model", "train", "augment",
                       "inference", "metrics"},
                   "top level");
    get(j, "format_version", c.format_version);
    get(j, "seed", c.seed);
    get(j, "out_dir", c.out_dir);
    if (j.contains("world")) {
        const json& w = j["world"];
        reject_unknown(w,
                       {"image_size", "n_layers", "d_latent", "d_id", "dataset_size",
                        "attr_id_coupling", "attr_noise", "probe_dataset_size",
                        "probe_train_steps", "probe_lr"},
                       "world");
        get(w, "image_size", c.world.image_size);
        get(w, "n_layers", c.world.n_layers);
        get(w, "d_latent", c.world.d_latent);
        get(w, "d_id", c.world.d_id);
        get(w, "dataset_size", c.world.dataset_size);
        get(w, "attr_id_coupling", c.world.attr_id_coupling);
        get(w, "attr_noise", c.world.attr_noise);
        get(w, "probe_dataset_size", c.world.probe_dataset_size);
        get(w, "probe_train_steps", c.world.probe_train_steps);
        get(w, "probe_lr", c.world.probe_lr);
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        reject_unknown(m,
                       {"d_ctx", "d_model", "n_heads", "id_tokens", "channels", "gn_groups",
                        "time_embed_dim", "heatmap_sigma", "self_attn_min_level", "timesteps",
                        "beta_min", "beta_max", "templates"},
                       "model");
        get(m, "d_ctx", c.model.d_ctx);
        get(m, "d_model", c.model.d_model);
        get(m, "n_heads", c.model.n_heads);
        get(m, "id_tokens", c.model.id_tokens);
        get(m, "channels", c.model.channels);
        get(m, "gn_groups", c.model.gn_groups);
        get(m, "time_embed_dim", c.model.time_embed_dim);
        get(m, "heatmap_sigma", c.model.heatmap_sigma);
        get(m, "self_attn_min_level", c.model.self_attn_min_level);
        get(m, "timesteps", c.model.timesteps);
        get(m, "beta_min", c.model.beta_min);
        get(m, "beta_max", c.model.beta_max);
        get(m, "templates", c.model.templates);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown(t,
                       {"lr", "weight_decay", "epochs", "max_steps", "batch_size", "lambda_id",
                        "lambda1", "lambda2", "mode", "uncond_drop_rate", "id_loss_t_min",
                        "checkpoint_every", "log_every"},
                       "train");
        get(t, "lr", c.train.lr);
        get(t, "weight_decay", c.train.weight_decay);
        get(t, "epochs", c.train.epochs);
        get(t, "max_steps", c.train.max_steps);
        get(t, "batch_size", c.train.batch_size);
        get(t, "lambda_id", c.train.lambda_id);
        get(t, "lambda1", c.train.lambda1);
        get(t, "lambda2", c.train.lambda2);
        get(t, "mode", c.train.mode);
        get(t, "uncond_drop_rate", c.train.uncond_drop_rate);
        get(t, "id_loss_t_min", c.train.id_loss_t_min);
        get(t, "checkpoint_every", c.train.checkpoint_every);
        get(t, "log_every", c.train.log_every);
    }
    if (j.contains("augment")) {
        const json& a = j["augment"];
        reject_unknown(
            a, {"rate", "alpha_min", "alpha_max", "eligible_attributes", "recompute_landmarks"},
            "augment");
        get(a, "rate", c.augment.rate);
        get(a, "alpha_min", c.augment.alpha_min);
        get(a, "alpha_max", c.augment.alpha_max);
        get(a, "eligible_attributes", c.augment.eligible_attributes);
        get(a, "recompute_landmarks", c.augment.recompute_landmarks);
    }
    if (j.contains("inference")) {
        const json& i = j["inference"];
        reject_unknown(
            i, {"steps", "cfg_scale", "lambda1", "lambda2", "layout_lock", "replay_steps"},
            "inference");
        get(i, "steps", c.inference.steps);
        get(i, "cfg_scale", c.inference.cfg_scale);
        get(i, "lambda1", c.inference.lambda1);
        get(i, "lambda2", c.inference.lambda2);
        get(i, "layout_lock", c.inference.layout_lock);
        get(i, "replay_steps", c.inference.replay_steps);
    }
    if (j.contains("metrics")) {
        const json& m = j["metrics"];
        reject_unknown(m,
                       {"strength_start", "strength_step", "strength_count", "similarity_floor",
                        "eval_refs"},
                       "metrics");
        get(m, "strength_start", c.metrics.strength_start);
        get(m, "strength_step", c.metrics.strength_step);
        get(m, "strength_count", c.metrics.strength_count);
        get(m, "similarity_floor", c.metrics.similarity_floor);
        get(m, "eval_refs", c.metrics.eval_refs);
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("config file not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_string(ss.str());
}

void ExperimentConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw RuntimeAbort("cannot write config: " + path);
    out << to_json_string() << "\n";
}

}  // namespace pstf
