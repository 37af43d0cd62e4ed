#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pstf/core/config.hpp"
#include "pstf/train/dataset.hpp"

namespace fs = std::filesystem;
using namespace pstf;

namespace {

const char* kCliPath = PSTF_CLI_PATH;

int run_cli(const std::string& args) {
    const std::string cmd = std::string(kCliPath) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("pstf_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string smoke_config(const TempDir& tmp, const std::string& name,
                         int dataset_size = 24) {
    ExperimentConfig cfg;
    cfg.seed = 7;
    cfg.out_dir = (tmp.path / name).string();
    cfg.world.image_size = 16;
    cfg.world.n_layers = 3;
    cfg.world.d_latent = 16;
    cfg.world.d_id = 8;
    cfg.world.dataset_size = dataset_size;
    cfg.world.probe_dataset_size = 1000;
    cfg.world.probe_train_steps = 1600;
    cfg.model.d_ctx = 8;
    cfg.model.d_model = 16;
    cfg.model.n_heads = 2;
    cfg.model.id_tokens = 2;
    cfg.model.channels = {8, 12, 16};
    cfg.model.gn_groups = 4;
    cfg.model.time_embed_dim = 16;
    cfg.model.timesteps = 40;
    cfg.model.templates = {"a person", "portrait"};
    cfg.train.max_steps = 6;
    cfg.train.batch_size = 2;
    cfg.train.checkpoint_every = 3;
    cfg.train.log_every = 2;
    cfg.inference.steps = 4;
    cfg.metrics.strength_count = 3;
    cfg.metrics.strength_step = 0.5;
    cfg.metrics.eval_refs = 1;
    cfg.validate();
    const std::string path = (tmp.path / (name + ".json")).string();
    cfg.save(path);
    return path;
}

}  // namespace

TEST_CASE("config schema: unknown keys and bad values are rejected") {
    CHECK_THROWS_AS(ExperimentConfig::from_json_string("{\"worlds\": {}}"), ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_string("{\"world\": {\"imagesize\": 16}}"),
                    ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_string("{\"train\": {\"lr\": -1.0}}"),
                    ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_string("{\"augment\": {\"rate\": 1.5}}"),
                    ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_string("not json"), ValidationError);
    ExperimentConfig ok = ExperimentConfig::from_json_string("{\"seed\": 9}");
    CHECK(ok.seed == 9);
}

TEST_CASE("config hash is stable and sensitive") {
    ExperimentConfig a, b;
    CHECK(a.hash_hex() == b.hash_hex());
    b.train.lr *= 2;
    CHECK(a.hash_hex() != b.hash_hex());
}

TEST_CASE("usage errors exit 2, missing artifacts exit 4") {
    TempDir tmp;
    const std::string cfg = smoke_config(tmp, "wk");
    CHECK(run_cli("") == 2);
    CHECK(run_cli("definitely-not-a-command") == 2);
    CHECK(run_cli("train") == 2);  // missing --config
    CHECK(run_cli("train --config /nonexistent.json") == 2);
    // prepared artifacts absent: runtime abort
    CHECK(run_cli("train --config " + cfg) == 4);
}

TEST_CASE("prepare/train/sweep/report round-trip with exit codes and idempotence") {
    TempDir tmp;
    const std::string cfg = smoke_config(tmp, "wk");
    const fs::path out = tmp.path / "wk";

    REQUIRE(run_cli("prepare --config " + cfg) == 0);
    CHECK(fs::exists(out / "world.bin"));
    CHECK(fs::exists(out / "probes.bin"));
    CHECK(fs::exists(out / "bank.bin"));
    CHECK(fs::exists(out / "dataset/manifest.jsonl"));

    // dataset size in config -> exactly that many manifest records
    std::ifstream manifest(out / "dataset/manifest.jsonl");
    int lines = 0;
    std::string line;
    while (std::getline(manifest, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 24);

    // idempotence: a second prepare reproduces the manifest bit for bit
    const uint64_t h1 = file_fnv1a((out / "dataset/manifest.jsonl").string());
    REQUIRE(run_cli("prepare --config " + cfg) == 0);
    CHECK(file_fnv1a((out / "dataset/manifest.jsonl").string()) == h1);

    REQUIRE(run_cli("train --config " + cfg) == 0);
    const fs::path ckpt = out / "runs/train/ckpt_final.bin";
    REQUIRE(fs::exists(ckpt));
    CHECK(fs::exists(out / "runs/train/metrics.jsonl"));
    CHECK(fs::exists(out / "runs/train/augment_log.jsonl"));
    CHECK(fs::exists(out / "runs/train/trainable_audit.json"));

    // sweep: single alpha emits a single image; unknown attribute exits 2
    REQUIRE(run_cli("sweep --config " + cfg + " --checkpoint " + ckpt.string() +
                    " --attribute smile --alphas [0]") == 0);
    CHECK(fs::exists(out / "sweeps/smile/alpha_00.00.ppm"));
    CHECK(fs::exists(out / "sweeps/smile/curve.json"));
    CHECK(fs::exists(out / "sweeps/smile/trace.bin"));
    CHECK_FALSE(fs::exists(out / "sweeps/smile/alpha_00.50.ppm"));
    CHECK(run_cli("sweep --config " + cfg + " --checkpoint " + ckpt.string() +
                  " --attribute eyebrows") == 2);

    // default sweep grid emits one image per configured strength
    REQUIRE(run_cli("sweep --config " + cfg + " --checkpoint " + ckpt.string() +
                    " --attribute glasses") == 0);
    int sweep_images = 0;
    for (const auto& e : fs::directory_iterator(out / "sweeps/glasses"))
        if (e.path().filename().string().rfind("alpha_", 0) == 0) ++sweep_images;
    CHECK(sweep_images == 3);

    REQUIRE(run_cli("report --config " + cfg + " --checkpoint " + ckpt.string()) == 0);
    CHECK(fs::exists(out / "reports/report.json"));
    CHECK(fs::exists(out / "reports/report.txt"));

    // checkpoint against a different config: validation failure
    const std::string cfg2 = smoke_config(tmp, "wk2", 25);
    REQUIRE(run_cli("prepare --config " + cfg2) == 0);
    CHECK(run_cli("report --config " + cfg2 + " --checkpoint " + ckpt.string()) == 3);
}

TEST_CASE("PSTF_OUT relocates the output root") {
    TempDir tmp;
    const std::string cfg = smoke_config(tmp, "wk");
    const fs::path moved = tmp.path / "moved_root";
    fs::create_directories(moved);
    // config validation failure surfaces as exit 3 regardless of the root;
    // use a quick failing command to avoid a full prepare
    std::ofstream bad(tmp.path / "bad.json");
    bad << "{\"train\": {\"lr\": -1}}";
    bad.close();
    const std::string env_cmd = "PSTF_OUT=" + moved.string() + " " + kCliPath +
                                " prepare --config " + (tmp.path / "bad.json").string() +
                                " >/dev/null 2>&1";
    CHECK(WEXITSTATUS(std::system(env_cmd.c_str())) == 3);

    // a real (tiny, probe-free) command path: lock check under the moved root
    fs::create_directories(moved / "wk");
    std::ofstream(moved / "wk/.pstf_lock") << "pid 0\n";
    const std::string locked_cmd = "PSTF_OUT=" + moved.string() + " " + kCliPath +
                                   " prepare --config " + cfg + " >/dev/null 2>&1";
    CHECK(WEXITSTATUS(std::system(locked_cmd.c_str())) == 4);
}

TEST_CASE("lock file blocks concurrent commands") {
    TempDir tmp;
    const std::string cfg = smoke_config(tmp, "wk");
    fs::create_directories(tmp.path / "wk");
    std::ofstream(tmp.path / "wk/.pstf_lock") << "pid 0\n";
    CHECK(run_cli("prepare --config " + cfg) == 4);
}
