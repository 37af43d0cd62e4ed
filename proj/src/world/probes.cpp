#include "pstf/world/probes.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pstf/core/adamw.hpp"
#include "pstf/core/ops.hpp"
#include "pstf/core/serial.hpp"

namespace pstf {

namespace {
constexpr int kC1 = 10, kC2 = 24, kC3 = 32, kHidden = 96;
}

ProbeNet::ProbeNet(int image_size_, int out_dim_, Rng& rng, const std::string& prefix_)
    : image_size(image_size_), out_dim(out_dim_), prefix(prefix_) {
    auto conv = [&](const std::string& name, int co, int ci) {
        params.add(prefix + name + ".w", kaiming_init({co, ci, 3, 3}, ci * 9, rng));
        params.add(prefix + name + ".b", Tensor::zeros({co}));
    };
    conv("conv1", kC1, 3);
    conv("conv2", kC2, kC1);
    conv("conv3", kC3, kC2);
    const int flat = kC3 * (image_size / 4) * (image_size / 4);
    params.add(prefix + "fc1.w", kaiming_init({kHidden, flat}, flat, rng));
    params.add(prefix + "fc1.b", Tensor::zeros({kHidden}));
    params.add(prefix + "head.w", kaiming_init({out_dim, kHidden}, kHidden, rng));
    params.add(prefix + "head.b", Tensor::zeros({out_dim}));
}

Tensor ProbeNet::forward(const Tensor& img) const {
    auto& p = const_cast<ParamStore&>(params);
    Tensor h = silu(conv2d(img, p.get(prefix + "conv1.w"), p.get(prefix + "conv1.b"), 1, 1));
    h = silu(conv2d(h, p.get(prefix + "conv2.w"), p.get(prefix + "conv2.b"), 2, 1));
    h = silu(conv2d(h, p.get(prefix + "conv3.w"), p.get(prefix + "conv3.b"), 2, 1));
    h = reshape(h, {1, (int)h.numel()});
    h = silu(linear(h, p.get(prefix + "fc1.w"), p.get(prefix + "fc1.b")));
    h = linear(h, p.get(prefix + "head.w"), p.get(prefix + "head.b"));
    return reshape(h, {out_dim});
}

Tensor IdentityProbe::embed_tensor(const Tensor& img) const {
    return l2_normalize(net.forward(img));
}

FaceEmbedding IdentityProbe::embed(const Image& img) const {
    NoGradGuard ng;
    Tensor e = embed_tensor(img.to_tensor());
    FaceEmbedding out;
    out.v = e.data();
    return out;
}

std::vector<double> AttributeProbe::predict(const Image& img) const {
    NoGradGuard ng;
    return net.forward(img.to_tensor()).data();
}

std::string ProbeMetrics::summary() const {
    std::ostringstream os;
    os << "r2=[";
    for (size_t i = 0; i < r2_per_factor.size(); ++i)
        os << (i ? "," : "") << r2_per_factor[i];
    os << "] auc=" << auc << " triplet_rate=" << triplet_rate;
    return os.str();
}

namespace {

// Probe training samples cover the edit range: half the draws push one
// attribute factor well past the calibrated interval, the way augmentation
// will at train time.
WorldParams sample_probe_theta(const World& world, Rng& rng) {
    WorldParams t = world.sample_independent(rng);
    if (rng.uniform() < 0.5) {
        const int k = (int)rng.uniform_index(WorldParams::kAttributeFactors);
        t.attribute[(size_t)k] = rng.uniform(-1.5, 3.2);
    }
    return t;
}

double mann_whitney_auc(std::vector<double> pos, std::vector<double> neg) {
    double wins = 0.0;
    for (double p : pos)
        for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    return wins / ((double)pos.size() * (double)neg.size());
}

}  // namespace

ProbePair train_probes(const World& world, int dataset_size, uint64_t seed,
                       const std::string& config_hash) {
    if (dataset_size < 1000)
        throw UsageError("train_probes: dataset_size must be >= 1000");

    const WorldConfig& wc = world.config();
    Rng data_rng(seed, "probes.data");
    Rng init_rng(seed, "probes.init");

    // build dataset: images + attribute targets + identity targets
    std::vector<WorldParams> thetas;
    std::vector<Tensor> images;
    thetas.reserve((size_t)dataset_size);
    images.reserve((size_t)dataset_size);
    for (int i = 0; i < dataset_size; ++i) {
        WorldParams t = sample_probe_theta(world, data_rng);
        thetas.push_back(t);
        images.push_back(world.render(t).to_tensor());
    }
    const int held = std::max(100, dataset_size / 10);
    const int n_train = dataset_size - held;

    ProbePair probes;
    probes.config_hash = config_hash;
    probes.identity.net = ProbeNet(wc.image_size, wc.d_id, init_rng, "id.");
    probes.attribute.net = ProbeNet(wc.image_size, WorldParams::kAttributeFactors, init_rng,
                                    "attr.");

    AdamW opt_id(wc.probe_lr, 0.0);
    AdamW opt_attr(wc.probe_lr, 0.0);
    probes.identity.net.params.set_trainable([](const std::string&) { return true; });
    probes.attribute.net.params.set_trainable([](const std::string&) { return true; });

    Rng batch_rng(seed, "probes.batches");
    const int batch = 16;
    for (int step = 0; step < wc.probe_train_steps; ++step) {
        probes.identity.net.params.zero_grads();
        probes.attribute.net.params.zero_grads();
        Tensor loss_id, loss_attr;
        for (int b = 0; b < batch; ++b) {
            const int i = (int)batch_rng.uniform_index((uint64_t)n_train);
            const WorldParams& t = thetas[(size_t)i];
            Tensor attr_target =
                Tensor::from_data({WorldParams::kAttributeFactors}, t.attribute);
            FaceEmbedding idt = world.identity_target(t);
            Tensor id_target = Tensor::from_data({(int)idt.v.size()}, idt.v);

            Tensor li = mse(probes.identity.embed_tensor(images[(size_t)i]), id_target);
            Tensor la = mse(probes.attribute.net.forward(images[(size_t)i]), attr_target);
            loss_id = loss_id.defined() ? add(loss_id, li) : li;
            loss_attr = loss_attr.defined() ? add(loss_attr, la) : la;
        }
        Tensor total = add(loss_id, loss_attr);
        total.backward();
        opt_id.step(probes.identity.net.params);
        opt_attr.step(probes.attribute.net.params);
    }

    // validation on held-out renders
    ProbeMetrics m;
    {
        NoGradGuard ng;
        std::vector<std::vector<double>> preds;
        for (int i = n_train; i < dataset_size; ++i)
            preds.push_back(probes.attribute.net.forward(images[(size_t)i]).data());

        m.r2_per_factor.assign(WorldParams::kAttributeFactors, 0.0);
        for (int k = 0; k < WorldParams::kAttributeFactors; ++k) {
            double mean = 0.0;
            for (int i = 0; i < held; ++i)
                mean += thetas[(size_t)(n_train + i)].attribute[(size_t)k];
            mean /= held;
            double ss_res = 0.0, ss_tot = 0.0;
            for (int i = 0; i < held; ++i) {
                const double truth = thetas[(size_t)(n_train + i)].attribute[(size_t)k];
                const double d = truth - preds[(size_t)i][(size_t)k];
                ss_res += d * d;
                ss_tot += (truth - mean) * (truth - mean);
            }
            m.r2_per_factor[(size_t)k] = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
        }

        // verification AUC and triplet agreement on fresh draws
        Rng eval_rng(seed, "probes.eval");
        std::vector<double> pos, neg;
        int triplet_ok = 0;
        const int n_trials = 300;
        for (int trial = 0; trial < n_trials; ++trial) {
            WorldParams anchor = world.sample_independent(eval_rng);
            WorldParams same = anchor;
            for (auto& f : same.attribute) f = eval_rng.uniform(-1.0, 1.0);
            WorldParams other = world.sample_independent(eval_rng);

            FaceEmbedding ea, es, eo;
            ea.v = probes.identity.embed_tensor(world.render(anchor).to_tensor()).data();
            es.v = probes.identity.embed_tensor(world.render(same).to_tensor()).data();
            eo.v = probes.identity.embed_tensor(world.render(other).to_tensor()).data();
            const double cp = ea.cosine(es), cn = ea.cosine(eo);
            pos.push_back(cp);
            neg.push_back(cn);
            if (cp >= cn) ++triplet_ok;
        }
        m.auc = mann_whitney_auc(pos, neg);
        m.triplet_rate = (double)triplet_ok / n_trials;
    }
    probes.metrics = m;

    bool ok = m.auc >= kProbeMinAuc && m.triplet_rate >= kProbeMinTripletRate;
    for (double r2 : m.r2_per_factor) ok = ok && r2 >= kProbeMinR2;
    if (!ok)
        throw ValidationError("train_probes: validation contract unmet: " + m.summary());
    return probes;
}

namespace {
constexpr char kProbeMagic[8] = {'P', 'S', 'T', 'F', 'P', 'R', 'O', 'B'};
}

void save_probes(const ProbePair& probes, const std::string& path) {
    BinWriter w(path);
    w.raw(kProbeMagic, 8);
    w.u32(1);
    w.str(probes.config_hash);
    w.u32((uint32_t)probes.identity.net.image_size);
    w.u32((uint32_t)probes.identity.net.out_dim);
    w.u32((uint32_t)probes.attribute.net.out_dim);
    w.u32((uint32_t)probes.metrics.r2_per_factor.size());
    for (double r2 : probes.metrics.r2_per_factor) w.f64(r2);
    w.f64(probes.metrics.auc);
    w.f64(probes.metrics.triplet_rate);
    std::map<std::string, Tensor> mats;
    for (size_t i = 0; i < probes.identity.net.params.size(); ++i) {
        const auto& e = probes.identity.net.params.at(i);
        mats.emplace(e.name, e.tensor);
    }
    for (size_t i = 0; i < probes.attribute.net.params.size(); ++i) {
        const auto& e = probes.attribute.net.params.at(i);
        mats.emplace(e.name, e.tensor);
    }
    write_named_tensors(w, mats);
}

ProbePair load_probes(const std::string& path) {
    BinReader r(path);
    char magic[8];
    r.raw(magic, 8);
    if (std::string(magic, 8) != std::string(kProbeMagic, 8))
        throw RuntimeAbort("not a probe file: " + path);
    if (r.u32() != 1) throw RuntimeAbort("unsupported probe version");
    ProbePair probes;
    probes.config_hash = r.str();
    const int image_size = (int)r.u32();
    const int d_id = (int)r.u32();
    const int d_attr = (int)r.u32();
    const uint32_t nr2 = r.u32();
    probes.metrics.r2_per_factor.resize(nr2);
    for (auto& v : probes.metrics.r2_per_factor) v = r.f64();
    probes.metrics.auc = r.f64();
    probes.metrics.triplet_rate = r.f64();

    Rng dummy(0);
    probes.identity.net = ProbeNet(image_size, d_id, dummy, "id.");
    probes.attribute.net = ProbeNet(image_size, d_attr, dummy, "attr.");
    auto mats = read_named_tensors(r);
    auto load_into = [&](ParamStore& store) {
        for (size_t i = 0; i < store.size(); ++i) {
            auto& e = store.at(i);
            auto it = mats.find(e.name);
            if (it == mats.end()) throw RuntimeAbort("probe file missing tensor: " + e.name);
            if (it->second.shape() != e.tensor.shape())
                throw RuntimeAbort("probe tensor shape mismatch: " + e.name);
            e.tensor.data() = it->second.data();
        }
    };
    load_into(probes.identity.net.params);
    load_into(probes.attribute.net.params);
    return probes;
}

}  // namespace pstf
