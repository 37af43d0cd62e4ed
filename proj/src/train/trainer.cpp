#include "pstf/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "pstf/core/ops.hpp"
#include "pstf/core/serial.hpp"

namespace pstf {

Trainer::Trainer(const ExperimentConfig& cfg, const World& world, const ProbePair& probes,
                 PstfModel& model, const DirectionBank& bank,
                 const std::vector<TrainingSample>& dataset)
    : cfg_(cfg),
      world_(world),
      probes_(probes),
      model_(model),
      bank_(bank),
      dataset_(dataset),
      schedule_(cfg.model.timesteps, cfg.model.beta_min, cfg.model.beta_max),
      opt_(cfg.train.lr, cfg.train.weight_decay),
      data_rng_(cfg.seed, "train.data"),
      noise_rng_(cfg.seed, "train.noise"),
      drop_rng_(cfg.seed, "train.drop") {
    if (dataset_.empty()) throw UsageError("trainer: empty dataset");
    model_.set_train_mode(cfg.train.mode);
}

int64_t Trainer::planned_steps() const {
    const int64_t by_epochs = (int64_t)cfg_.train.epochs * (int64_t)dataset_.size() /
                              std::max(1, cfg_.train.batch_size);
    return std::min<int64_t>(cfg_.train.max_steps, std::max<int64_t>(1, by_epochs));
}

Trainer::StepInfo Trainer::step() {
    const auto t_start = std::chrono::steady_clock::now();
    model_.params.zero_grads();

    const int batch = cfg_.train.batch_size;
    Tensor total;
    double sum_diff = 0.0, sum_id = 0.0;
    for (int b = 0; b < batch; ++b) {
        const int idx = (int)data_rng_.uniform_index(dataset_.size());
        Rng aug_rng(Rng::mix(cfg_.seed ^ 0xau, (uint64_t)sample_counter_));
        TrainingSample sample = maybe_augment(dataset_[(size_t)idx], bank_, cfg_.augment,
                                              world_, aug_rng);
        if (aug_log_) aug_log_(step_, idx, sample.provenance);
        ++sample_counter_;

        const int t = (int)noise_rng_.uniform_index((uint64_t)cfg_.model.timesteps);
        Tensor eps = Tensor::zeros({3, world_.image_size(), world_.image_size()});
        for (auto& v : eps.data()) v = noise_rng_.normal();

        const bool drop = drop_rng_.uniform() < cfg_.train.uncond_drop_rate;
        ConditioningBundle bundle =
            drop ? model_.make_bundle(kNullTemplateId, sample.f, sample.w, 0.0, 0.0)
                 : model_.make_bundle(sample.template_id, sample.f, sample.w,
                                      cfg_.train.lambda1, cfg_.train.lambda2);
        Tensor heatmap =
            world_.landmark_heatmap(sample.landmarks, cfg_.model.heatmap_sigma);

        SampleLoss sl = sample_loss(model_, schedule_, probes_.identity, sample, bundle,
                                    heatmap, t, eps, cfg_.train.lambda_id,
                                    cfg_.train.id_loss_t_min);
        sum_diff += sl.diffusion;
        sum_id += sl.identity;
        total = total.defined() ? add(total, sl.total) : sl.total;
    }
    total = scale(total, 1.0 / batch);

    StepInfo info;
    info.step = step_;
    info.loss = total.item();
    info.loss_diffusion = sum_diff / batch;
    info.loss_identity = sum_id / batch;
    if (!std::isfinite(info.loss)) {
        std::ostringstream os;
        os << "non-finite loss at step " << step_ << " (diffusion=" << info.loss_diffusion
           << ", identity=" << info.loss_identity << ")";
        throw RuntimeAbort(os.str());
    }

    total.backward();
    double gn = 0.0;
    for (size_t i = 0; i < model_.params.size(); ++i) {
        auto& e = model_.params.at(i);
        if (!e.trainable) continue;
        for (double g : e.tensor.grad()) gn += g * g;
    }
    info.grad_norm = std::sqrt(gn);
    opt_.step(model_.params);
    ++step_;

    info.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t_start)
                       .count();
    return info;
}

namespace {
constexpr char kCkptMagic[8] = {'P', 'S', 'T', 'F', 'C', 'K', 'P', 'T'};

void write_rng(BinWriter& w, const Rng& rng) {
    const Rng::State st = rng.state();
    for (int i = 0; i < 4; ++i) w.u64(st.s[i]);
    w.u32(st.have_gauss);
    w.f64(st.gauss);
}

Rng::State read_rng_state(BinReader& r) {
    Rng::State st;
    for (int i = 0; i < 4; ++i) st.s[i] = r.u64();
    st.have_gauss = (uint8_t)r.u32();
    st.gauss = r.f64();
    return st;
}
}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
    BinWriter w(path);
    w.raw(kCkptMagic, 8);
    w.u32(1);
    w.str(cfg_.hash_hex());
    w.u32(model_.topology == AttnTopology::kTriplet ? 0u : 1u);
    w.i64(step_);
    w.i64(sample_counter_);
    w.i64(opt_.step_count());
    write_rng(w, data_rng_);
    write_rng(w, noise_rng_);
    write_rng(w, drop_rng_);
    std::map<std::string, Tensor> entries = model_.params.snapshot();
    for (auto& [name, t] : opt_.state_tensors()) entries.emplace(name, t);
    write_named_tensors(w, entries);
}

void Trainer::load_checkpoint(const std::string& path) {
    BinReader r(path);
    char magic[8];
    r.raw(magic, 8);
    if (std::string(magic, 8) != std::string(kCkptMagic, 8))
        throw RuntimeAbort("not a checkpoint: " + path);
    if (r.u32() != 1) throw RuntimeAbort("unsupported checkpoint version");
    const std::string hash = r.str();
    if (hash != cfg_.hash_hex())
        throw ValidationError("checkpoint config hash " + hash + " does not match config " +
                              cfg_.hash_hex());
    const uint32_t topo = r.u32();
    if ((topo == 0) != (model_.topology == AttnTopology::kTriplet))
        throw ValidationError("checkpoint attention topology does not match the model");
    step_ = r.i64();
    sample_counter_ = r.i64();
    const int64_t opt_steps = r.i64();
    data_rng_.set_state(read_rng_state(r));
    noise_rng_.set_state(read_rng_state(r));
    drop_rng_.set_state(read_rng_state(r));
    auto entries = read_named_tensors(r);
    std::map<std::string, Tensor> params, opt_state;
    for (auto& [name, t] : entries) {
        if (name.rfind("adam.", 0) == 0)
            opt_state.emplace(name, t);
        else
            params.emplace(name, t);
    }
    model_.params.load_snapshot(params);
    opt_.load_state_tensors(opt_state);
    opt_.set_step_count(opt_steps);
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
    BinReader r(path);
    char magic[8];
    r.raw(magic, 8);
    if (std::string(magic, 8) != std::string(kCkptMagic, 8))
        throw RuntimeAbort("not a checkpoint: " + path);
    if (r.u32() != 1) throw RuntimeAbort("unsupported checkpoint version");
    CheckpointMeta meta;
    meta.config_hash = r.str();
    meta.topology = r.u32() == 0 ? AttnTopology::kTriplet : AttnTopology::kConcat;
    meta.step = r.i64();
    meta.sample_counter = r.i64();
    return meta;
}

void load_model_params(const std::string& path, PstfModel& model,
                       const std::string& expected_hash) {
    BinReader r(path);
    char magic[8];
    r.raw(magic, 8);
    if (std::string(magic, 8) != std::string(kCkptMagic, 8))
        throw RuntimeAbort("not a checkpoint: " + path);
    if (r.u32() != 1) throw RuntimeAbort("unsupported checkpoint version");
    const std::string hash = r.str();
    if (!expected_hash.empty() && hash != expected_hash)
        throw ValidationError("checkpoint config hash " + hash + " does not match config " +
                              expected_hash);
    const uint32_t topo = r.u32();
    if ((topo == 0) != (model.topology == AttnTopology::kTriplet))
        throw ValidationError("checkpoint attention topology does not match the model");
    r.i64();  // step
    r.i64();  // sample counter
    r.i64();  // optimizer step count
    for (int s = 0; s < 3; ++s) {  // rng states
        for (int i = 0; i < 4; ++i) r.u64();
        r.u32();
        r.f64();
    }
    auto entries = read_named_tensors(r);
    std::map<std::string, Tensor> params;
    for (auto& [name, t] : entries)
        if (name.rfind("adam.", 0) != 0) params.emplace(name, t);
    model.params.load_snapshot(params);
}

}  // namespace pstf
