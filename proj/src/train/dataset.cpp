#include "pstf/train/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pstf/core/errors.hpp"
#include "pstf/core/serial.hpp"
#include "pstf/core/version.hpp"

namespace pstf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string image_name(int index) {
    char buf[32];
    snprintf(buf, sizeof(buf), "img/%06d.ppm", index);
    return buf;
}

}  // namespace

void emit_dataset(const World& world, const ExperimentConfig& cfg, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "img");
    const int n = cfg.world.dataset_size;
    Rng theta_rng(cfg.seed, "dataset.theta");
    Rng prompt_rng(cfg.seed, "dataset.prompt");

    BinWriter latents(fs::path(dir) / "latents.bin");
    latents.u32((uint32_t)cfg.world.n_layers);
    latents.u32((uint32_t)cfg.world.d_latent);
    latents.u32((uint32_t)n);

    std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
    if (!manifest) throw RuntimeAbort("cannot write manifest in " + dir);

    for (int i = 0; i < n; ++i) {
        const WorldParams theta = world.sample_dataset(theta_rng);
        const Image img = world.render(theta);
        const LandmarkSet lm = world.landmarks(theta);
        const WPlusLatent w = world.embed_latent(theta);
        const int tid = 1 + (int)prompt_rng.uniform_index(cfg.model.templates.size());

        write_ppm(img, (fs::path(dir) / image_name(i)).string());
        latents.f64_array(w.mat.data());

        json rec;
        rec["index"] = i;
        rec["image"] = image_name(i);
        rec["theta"] = {{"identity", theta.identity}, {"attribute", theta.attribute}};
        json pts = json::array();
        for (const auto& p : lm.points) pts.push_back({p[0], p[1]});
        rec["landmarks"] = pts;
        rec["latent"] = {{"file", "latents.bin"}, {"index", i}};
        rec["prompt"] = cfg.model.templates[(size_t)(tid - 1)];
        manifest << rec.dump() << "\n";
    }

    json meta;
    meta["format_version"] = 1;
    meta["config_hash"] = cfg.hash_hex();
    meta["seed"] = cfg.seed;
    meta["count"] = n;
    meta["code_version"] = code_version();
    std::ofstream mf(fs::path(dir) / "meta.json");
    mf << meta.dump(2) << "\n";
}

std::vector<TrainingSample> load_dataset(const std::string& dir, const World& world,
                                         const IdentityProbe& probe,
                                         const std::vector<std::string>& templates) {
    std::ifstream manifest(fs::path(dir) / "manifest.jsonl");
    if (!manifest) throw RuntimeAbort("dataset manifest not found in " + dir);

    BinReader latents((fs::path(dir) / "latents.bin").string());
    const int n_layers = (int)latents.u32();
    const int d_latent = (int)latents.u32();
    const uint32_t count = latents.u32();

    std::vector<TrainingSample> out;
    out.reserve(count);
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        TrainingSample s;
        s.index = rec.at("index").get<int>();
        s.image = read_ppm((fs::path(dir) / rec.at("image").get<std::string>()).string());
        s.theta.identity = rec.at("theta").at("identity").get<std::vector<double>>();
        s.theta.attribute = rec.at("theta").at("attribute").get<std::vector<double>>();
        const auto pts = rec.at("landmarks").get<std::vector<std::vector<double>>>();
        s.landmarks.points.clear();
        for (const auto& p : pts) s.landmarks.points.push_back({p[0], p[1]});
        s.w = WPlusLatent(n_layers, d_latent);
        s.w.mat.data() = latents.f64_array();
        const std::string prompt = rec.at("prompt").get<std::string>();
        s.template_id = 0;
        for (size_t t = 0; t < templates.size(); ++t)
            if (templates[t] == prompt) s.template_id = (int)t + 1;
        if (s.template_id == 0) throw RuntimeAbort("manifest prompt not in config: " + prompt);
        s.f = probe.embed(s.image);
        out.push_back(std::move(s));
    }
    if (out.size() != count)
        throw RuntimeAbort("manifest/latents record count mismatch in " + dir);
    (void)world;
    return out;
}

uint64_t file_fnv1a(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeAbort("cannot hash: " + path);
    uint64_t h = 1469598103934665603ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= (unsigned char)buf[i];
            h *= 1099511628211ULL;
        }
        if (in.eof()) break;
    }
    return h;
}

}  // namespace pstf
