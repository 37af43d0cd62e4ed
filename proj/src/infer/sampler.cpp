#include "pstf/infer/sampler.hpp"

#include "pstf/core/errors.hpp"
#include "pstf/core/ops.hpp"
#include "pstf/core/serial.hpp"
#include "pstf/latent/latent.hpp"

namespace pstf {

namespace {
constexpr char kTraceMagic[8] = {'P', 'S', 'T', 'F', 'T', 'R', 'C', 'E'};
}

void AttentionTrace::save(const std::string& path) const {
    BinWriter w(path);
    w.raw(kTraceMagic, 8);
    w.u32(1);
    w.u32((uint32_t)steps);
    w.u32((uint32_t)entries_per_step);
    w.u64(entries.size());
    for (const auto& e : entries) {
        w.u32((uint32_t)e.rows);
        w.u32((uint32_t)e.cols);
        w.f64_array(e.probs);
    }
}

AttentionTrace AttentionTrace::load(const std::string& path) {
    BinReader r(path);
    char magic[8];
    r.raw(magic, 8);
    if (std::string(magic, 8) != std::string(kTraceMagic, 8))
        throw RuntimeAbort("not a trace file: " + path);
    if (r.u32() != 1) throw RuntimeAbort("unsupported trace version");
    AttentionTrace t;
    t.steps = (int)r.u32();
    t.entries_per_step = (int)r.u32();
    const uint64_t n = r.u64();
    t.entries.resize(n);
    for (auto& e : t.entries) {
        e.rows = (int)r.u32();
        e.cols = (int)r.u32();
        e.probs = r.f64_array();
    }
    return t;
}

Sampler::Sampler(PstfModel& model, const World& world, const InferenceConfig& cfg)
    : model_(model),
      world_(world),
      cfg_(cfg),
      schedule_(model.cfg.timesteps, model.cfg.beta_min, model.cfg.beta_max) {}

Image Sampler::run(const GenerationInputs& in, uint64_t seed, TraceIO* hook,
                   AttentionTrace* record_into, std::vector<double>* noise_out) const {
    NoGradGuard ng;
    const int s = world_.image_size();
    Rng rng(seed, "sample.noise");
    Tensor x = Tensor::randn({3, s, s}, rng);
    if (noise_out) *noise_out = x.data();

    Tensor heatmap = world_.landmark_heatmap(in.landmarks, model_.cfg.heatmap_sigma);
    ConditioningBundle cond =
        model_.make_bundle(in.template_id, in.f, in.w, cfg_.lambda1, cfg_.lambda2);
    ConditioningBundle uncond = model_.make_bundle(kNullTemplateId, in.f, in.w, 0.0, 0.0);

    const auto ts = sampling_timesteps(model_.cfg.timesteps, cfg_.steps);
    for (size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        Tensor eps_u = model_.predict_noise(x, t, uncond, heatmap, hook);
        Tensor eps_c = model_.predict_noise(x, t, cond, heatmap, hook);
        Tensor eps = cfg_combine(eps_c, eps_u, cfg_.cfg_scale);
        const int t_prev = i + 1 < ts.size() ? ts[i + 1] : -1;
        x = ddim_step(x, t, t_prev, eps, schedule_);
    }

    Image img = Image::from_tensor(clamp01(x));
    img.quantize8();
    if (record_into) {
        record_into->steps = cfg_.steps;
        record_into->entries_per_step =
            (int)record_into->entries.size() / std::max(1, cfg_.steps);
    }
    return img;
}

GenerationResult Sampler::generate(const GenerationInputs& in, uint64_t seed) const {
    GenerationResult out;
    TraceIO rec;
    rec.mode = TraceIO::Mode::kRecord;
    rec.entries = &out.trace.entries;
    out.image = run(in, seed, &rec, &out.trace, &out.initial_noise);
    return out;
}

Image Sampler::generate_with_trace_replay(const GenerationInputs& in,
                                          const AttentionTrace& trace, uint64_t seed) const {
    if (trace.steps != cfg_.steps)
        throw ConfigError("trace replay: trace has " + std::to_string(trace.steps) +
                          " steps, schedule has " + std::to_string(cfg_.steps));
    const int expected = 2 * model_.unet.trace_sites_per_forward();
    if (trace.entries_per_step != expected ||
        (int)trace.entries.size() != trace.steps * expected)
        throw ConfigError("trace replay: site count mismatch");

    TraceIO rep;
    rep.mode = TraceIO::Mode::kReplay;
    rep.entries = const_cast<std::vector<TraceIO::Entry>*>(&trace.entries);
    rep.cursor = 0;
    // replay_steps >= 0 restricts substitution to the early steps; the
    // remaining steps then compute their own maps
    if (cfg_.replay_steps < 0 || cfg_.replay_steps >= cfg_.steps)
        return run(in, seed, &rep, nullptr, nullptr);

    // mixed mode: substitute for the first replay_steps steps only
    NoGradGuard ng;
    const int s = world_.image_size();
    Rng rng(seed, "sample.noise");
    Tensor x = Tensor::randn({3, s, s}, rng);
    Tensor heatmap = world_.landmark_heatmap(in.landmarks, model_.cfg.heatmap_sigma);
    ConditioningBundle cond =
        model_.make_bundle(in.template_id, in.f, in.w, cfg_.lambda1, cfg_.lambda2);
    ConditioningBundle uncond = model_.make_bundle(kNullTemplateId, in.f, in.w, 0.0, 0.0);
    const auto ts = sampling_timesteps(model_.cfg.timesteps, cfg_.steps);
    for (size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        TraceIO* hook = (int)i < cfg_.replay_steps ? &rep : nullptr;
        if (hook) rep.cursor = i * (size_t)expected;
        Tensor eps_u = model_.predict_noise(x, t, uncond, heatmap, hook);
        Tensor eps_c = model_.predict_noise(x, t, cond, heatmap, hook);
        Tensor eps = cfg_combine(eps_c, eps_u, cfg_.cfg_scale);
        const int t_prev = i + 1 < ts.size() ? ts[i + 1] : -1;
        x = ddim_step(x, t, t_prev, eps, schedule_);
    }
    Image img = Image::from_tensor(clamp01(x));
    img.quantize8();
    return img;
}

Sampler::SweepResult Sampler::attribute_sweep_run(const GenerationInputs& in,
                                                  const AttributeDirection& d,
                                                  const std::vector<double>& alphas,
                                                  uint64_t seed) const {
    SweepResult out;
    GenerationResult ref = generate(in, seed);  // unedited W records the trace
    out.trace = std::move(ref.trace);
    out.initial_noise = std::move(ref.initial_noise);
    out.images.reserve(alphas.size());
    for (double a : alphas) {
        GenerationInputs edited = in;
        edited.w = apply_edit(in.w, d, a);
        if (cfg_.layout_lock)
            out.images.push_back(generate_with_trace_replay(edited, out.trace, seed));
        else
            out.images.push_back(generate(edited, seed).image);
    }
    return out;
}

}  // namespace pstf
