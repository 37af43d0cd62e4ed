#include "pstf/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pstf/core/errors.hpp"
#include "pstf/core/version.hpp"

namespace pstf {

using nlohmann::json;

double cosine_similarity(const FaceEmbedding& a, const FaceEmbedding& b) {
    if (a.v.size() != b.v.size()) throw ConfigError("cosine_similarity: dim mismatch");
    double dot = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) dot += a.v[i] * b.v[i];
    return std::max(-1.0, std::min(1.0, dot));
}

std::vector<double> sweep_similarity_curve(const std::vector<Image>& images,
                                           const Image& reference,
                                           const IdentityProbe& probe) {
    const FaceEmbedding ref = probe.embed(reference);
    std::vector<double> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(cosine_similarity(probe.embed(img), ref));
    return out;
}

namespace {

std::vector<double> ranks_with_ties(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * (double)(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw UsageError("spearman_rho: bad input");
    const auto rx = ranks_with_ties(x);
    const auto ry = ranks_with_ties(y);
    double mx = 0, my = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= rx.size();
    my /= ry.size();
    double num = 0, dx = 0, dy = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if (dx == 0.0 || dy == 0.0) return 0.0;
    return num / std::sqrt(dx * dy);
}

std::vector<EvalRef> make_eval_refs(const World& world, const IdentityProbe& probe, int count,
                                    uint64_t seed) {
    Rng rng(seed, "eval.refs");
    std::vector<EvalRef> refs;
    refs.reserve((size_t)count);
    for (int i = 0; i < count; ++i) {
        EvalRef r;
        r.theta = world.sample_dataset(rng);
        r.image = world.render(r.theta);
        r.f = probe.embed(r.image);
        r.landmarks = world.landmarks(r.theta);
        r.w = world.embed_latent(r.theta);
        r.template_id = 1;
        refs.push_back(std::move(r));
    }
    return refs;
}

double SimilarityReport::at(int ref, int attr, int strength) const {
    const size_t na = attribute_names.size(), ns = strengths.size();
    return per_image[((size_t)ref * na + (size_t)attr) * ns + (size_t)strength];
}

std::string SimilarityReport::table_text() const {
    std::ostringstream os;
    os << "# identity similarity (" << probe_banner << ", config " << config_hash << ")\n";
    os << "attribute";
    for (double s : strengths) os << "\t" << s;
    os << "\tmean\n";
    const size_t ns = strengths.size();
    for (size_t a = 0; a < attribute_names.size(); ++a) {
        os << attribute_names[a];
        for (size_t s = 0; s < ns; ++s) {
            double m = 0.0;
            for (int r = 0; r < n_refs; ++r) m += at(r, (int)a, (int)s);
            os << "\t" << m / std::max(1, n_refs);
        }
        os << "\t" << per_attribute_mean[a] << "\n";
    }
    os << "aggregate\t" << aggregate << "\n";
    os << "aggregate_filtered(>=" << similarity_floor << ")\t" << aggregate_filtered << "\n";
    return os.str();
}

std::string SimilarityReport::to_json_string() const {
    json j;
    j["probe"] = "synthetic";
    j["code_version"] = code_version();
    j["config_hash"] = config_hash;
    j["attributes"] = attribute_names;
    j["strengths"] = strengths;
    j["n_refs"] = n_refs;
    j["per_image"] = per_image;
    j["per_attribute_mean"] = per_attribute_mean;
    j["per_strength_mean"] = per_strength_mean;
    j["aggregate"] = aggregate;
    j["aggregate_filtered"] = aggregate_filtered;
    j["similarity_floor"] = similarity_floor;
    return j.dump(2);
}

void SimilarityReport::write(const std::string& json_path, const std::string& txt_path) const {
    std::ofstream js(json_path);
    js << to_json_string() << "\n";
    std::ofstream tx(txt_path);
    tx << table_text();
}

SimilarityReport sweep_grid_report(Sampler& sampler, const std::vector<EvalRef>& refs,
                                   const DirectionBank& bank,
                                   const std::vector<double>& alphas,
                                   const IdentityProbe& probe, const std::string& config_hash,
                                   uint64_t seed_base, double similarity_floor) {
    SimilarityReport rep;
    rep.attribute_names = bank.attribute_names();
    rep.strengths = alphas;
    rep.n_refs = (int)refs.size();
    rep.config_hash = config_hash;
    rep.similarity_floor = similarity_floor;
    const size_t na = bank.size(), ns = alphas.size();
    rep.per_image.assign(refs.size() * na * ns, 0.0);

    for (size_t r = 0; r < refs.size(); ++r) {
        GenerationInputs in{refs[r].f, refs[r].landmarks, refs[r].w, refs[r].template_id};
        for (size_t a = 0; a < na; ++a) {
            const uint64_t seed = Rng::mix(seed_base, r * 1000003ULL + a);
            auto sweep = sampler.attribute_sweep_run(in, bank.directions[a], alphas, seed);
            auto curve = sweep_similarity_curve(sweep.images, refs[r].image, probe);
            for (size_t s = 0; s < ns; ++s)
                rep.per_image[(r * na + a) * ns + s] = curve[s];
        }
    }

    rep.per_attribute_mean.assign(na, 0.0);
    rep.per_strength_mean.assign(ns, 0.0);
    double total = 0.0, filt_total = 0.0;
    size_t filt_n = 0;
    for (size_t r = 0; r < refs.size(); ++r)
        for (size_t a = 0; a < na; ++a)
            for (size_t s = 0; s < ns; ++s) {
                const double v = rep.per_image[(r * na + a) * ns + s];
                rep.per_attribute_mean[a] += v;
                rep.per_strength_mean[s] += v;
                total += v;
                if (v >= similarity_floor) {
                    filt_total += v;
                    ++filt_n;
                }
            }
    for (auto& v : rep.per_attribute_mean) v /= (double)(refs.size() * ns);
    for (auto& v : rep.per_strength_mean) v /= (double)(refs.size() * na);
    rep.aggregate = total / (double)rep.per_image.size();
    rep.aggregate_filtered = filt_n ? filt_total / (double)filt_n : 0.0;
    return rep;
}

std::string AblationReport::to_json_string() const {
    json j;
    j["triplet"] = json::parse(model_a.to_json_string());
    j["concat"] = json::parse(model_b.to_json_string());
    j["per_attribute_delta"] = per_attribute_delta;
    j["per_strength_delta"] = per_strength_delta;
    j["aggregate_delta"] = aggregate_delta;
    j["positive_attribute_deltas"] = positive_attribute_deltas;
    return j.dump(2);
}

AblationReport ablation_report(Sampler& model_a, Sampler& model_b,
                               const std::vector<EvalRef>& refs, const DirectionBank& bank,
                               const std::vector<double>& alphas, const IdentityProbe& probe,
                               const std::string& config_hash, uint64_t seed_base,
                               double similarity_floor) {
    if (model_a.config().steps != model_b.config().steps)
        throw ConfigError("ablation_report: models run mismatched schedules");
    AblationReport rep;
    rep.model_a = sweep_grid_report(model_a, refs, bank, alphas, probe, config_hash, seed_base,
                                    similarity_floor);
    rep.model_b = sweep_grid_report(model_b, refs, bank, alphas, probe, config_hash, seed_base,
                                    similarity_floor);
    const size_t na = bank.size(), ns = alphas.size();
    rep.per_attribute_delta.resize(na);
    rep.per_strength_delta.resize(ns);
    for (size_t a = 0; a < na; ++a) {
        rep.per_attribute_delta[a] =
            rep.model_a.per_attribute_mean[a] - rep.model_b.per_attribute_mean[a];
        if (rep.per_attribute_delta[a] > 0.0) ++rep.positive_attribute_deltas;
    }
    for (size_t s = 0; s < ns; ++s)
        rep.per_strength_delta[s] =
            rep.model_a.per_strength_mean[s] - rep.model_b.per_strength_mean[s];
    rep.aggregate_delta = rep.model_a.aggregate - rep.model_b.aggregate;
    return rep;
}

std::vector<double> strength_grid(const MetricsConfig& cfg) {
    std::vector<double> out;
    out.reserve((size_t)cfg.strength_count);
    for (int i = 0; i < cfg.strength_count; ++i)
        out.push_back(cfg.strength_start + cfg.strength_step * i);
    return out;
}

}  // namespace pstf
