// pstf: experiment driver for the synthetic personalized-generation testbed.
// Commands: prepare | train | sweep | ablate | report.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "pstf/core/chart.hpp"
#include "pstf/core/version.hpp"
#include "pstf/metrics/metrics.hpp"
#include "pstf/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace pstf;
using nlohmann::json;

namespace {

// One command process at a time per output directory.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".pstf_lock") {
        fs::create_directories(dir);
        std::ifstream existing(path_);
        if (existing.good())
            throw RuntimeAbort("output directory is locked by another run: " +
                              path_.string());
        std::ofstream out(path_);
        out << "pid " << ::getpid() << "\n";
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

struct CommonArgs {
    std::string config_path;
    std::string out_override;
    int64_t seed_override = -1;
};

ExperimentConfig load_effective_config(const CommonArgs& args) {
    ExperimentConfig cfg = ExperimentConfig::load(args.config_path);
    if (args.seed_override >= 0) cfg.seed = (uint64_t)args.seed_override;
    if (!args.out_override.empty()) cfg.out_dir = args.out_override;
    if (const char* env = std::getenv("PSTF_OUT"); env && *env)
        cfg.out_dir = (fs::path(env) / fs::path(cfg.out_dir).filename()).string();
    cfg.validate();
    return cfg;
}

std::vector<double> parse_alphas(std::string text) {
    std::erase(text, '[');
    std::erase(text, ']');
    std::erase(text, ' ');
    std::vector<double> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string tok = text.substr(pos, comma - pos);
        if (!tok.empty()) {
            try {
                out.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw UsageError("bad alpha value: '" + tok + "'");
            }
        }
        pos = comma + 1;
    }
    if (out.empty()) throw UsageError("empty alpha list");
    return out;
}

struct Artifacts {
    World world;
    ProbePair probes;
    DirectionBank bank;

    static Artifacts load(const ExperimentConfig& cfg) {
        const fs::path out(cfg.out_dir);
        if (!fs::exists(out / "world.bin"))
            throw RuntimeAbort("no prepared artifacts in " + cfg.out_dir +
                              " (run `pstf prepare` first)");
        Artifacts a{World::load((out / "world.bin").string()),
                    load_probes((out / "probes.bin").string()),
                    load_bank((out / "bank.bin").string())};
        if (a.probes.config_hash != cfg.hash_hex())
            throw ValidationError("prepared probes belong to config " + a.probes.config_hash +
                                  ", current config is " + cfg.hash_hex());
        return a;
    }
};

int cmd_prepare(const CommonArgs& args) {
    ExperimentConfig cfg = load_effective_config(args);
    const fs::path out(cfg.out_dir);
    DirLock lock(out);
    cfg.save((out / "config.json").string());

    std::cout << "[prepare] config " << cfg.hash_hex() << " -> " << cfg.out_dir << "\n";
    World world(cfg.world, cfg.seed);
    world.save((out / "world.bin").string());

    std::cout << "[prepare] rendering dataset (" << cfg.world.dataset_size << " images)\n";
    emit_dataset(world, cfg, (out / "dataset").string());

    DirectionBank bank = world.analytic_bank();
    // cross-check every analytic direction against a sampled extraction
    Rng check_rng(cfg.seed, "prepare.bankcheck");
    for (size_t k = 0; k < bank.size(); ++k) {
        std::vector<WPlusLatent> edited, unedited;
        for (int i = 0; i < 50; ++i) {
            WorldParams t = world.sample_independent(check_rng);
            WorldParams e = t;
            e.attribute[k] += check_rng.uniform(0.5, 1.5);
            unedited.push_back(world.embed_latent(t));
            edited.push_back(world.embed_latent(e));
        }
        AttributeDirection rec = extract_direction(edited, unedited);
        const double cos = latent_cosine(rec.delta, bank.directions[k].delta);
        if (cos < 0.999)
            throw ValidationError("direction bank cross-check failed for " +
                                  bank.directions[k].attribute_id + " (cosine " +
                                  std::to_string(cos) + ")");
    }
    save_bank(bank, (out / "bank.bin").string());
    std::cout << "[prepare] direction bank verified (" << bank.size() << " directions)\n";

    std::cout << "[prepare] training probes (dataset " << cfg.world.probe_dataset_size
              << ", steps " << cfg.world.probe_train_steps << ")\n";
    ProbePair probes =
        train_probes(world, cfg.world.probe_dataset_size, cfg.seed, cfg.hash_hex());
    save_probes(probes, (out / "probes.bin").string());
    std::cout << "[prepare] probes ok: " << probes.metrics.summary() << "\n";
    return 0;
}

int run_training(const ExperimentConfig& cfg, AttnTopology topology,
                 const std::string& run_name, const std::string& resume_from) {
    const fs::path out(cfg.out_dir);
    Artifacts art = Artifacts::load(cfg);
    auto dataset = load_dataset((out / "dataset").string(), art.world, art.probes.identity,
                                cfg.model.templates);

    PstfModel model;
    model.build(cfg.world, cfg.model, cfg.seed, topology);
    Trainer trainer(cfg, art.world, art.probes, model, art.bank, dataset);

    const fs::path run_dir = out / "runs" / run_name;
    fs::create_directories(run_dir);
    std::ofstream metrics(run_dir / "metrics.jsonl",
                          resume_from.empty() ? std::ios::trunc : std::ios::app);
    std::ofstream aug_log(run_dir / "augment_log.jsonl",
                          resume_from.empty() ? std::ios::trunc : std::ios::app);
    trainer.set_aug_log([&](int64_t step, int index, const AugProvenance& p) {
        json rec{{"step", step},
                 {"sample_index", index},
                 {"augmented", p.augmented},
                 {"attribute", p.attribute},
                 {"alpha", p.alpha}};
        aug_log << rec.dump() << "\n";
    });

    if (!resume_from.empty()) {
        trainer.load_checkpoint(resume_from);
        std::cout << "[train] resumed " << run_name << " at step " << trainer.step_count()
                  << "\n";
    }

    {
        json audit{{"run", run_name},
                   {"code_version", code_version()},
                   {"mode", cfg.train.mode},
                   {"trainable", model.trainable_parameter_names()},
                   {"total_parameters", model.params.total_count()}};
        std::ofstream(run_dir / "trainable_audit.json") << audit.dump(2) << "\n";
    }

    const int64_t total = trainer.planned_steps();
    std::cout << "[train] " << run_name << ": " << total << " steps, batch "
              << cfg.train.batch_size << ", mode " << cfg.train.mode << "\n";
    try {
        while (trainer.step_count() < total) {
            auto info = trainer.step();
            if (info.step % cfg.train.log_every == 0 || trainer.step_count() == total) {
                json rec{{"step", info.step},
                         {"loss", info.loss},
                         {"loss_diffusion", info.loss_diffusion},
                         {"loss_identity", info.loss_identity},
                         {"grad_norm", info.grad_norm},
                         {"wall_ms", info.wall_ms}};
                metrics << rec.dump() << "\n";
                metrics.flush();
                std::cout << "[train] " << run_name << " step " << info.step << " loss "
                          << info.loss << " (diff " << info.loss_diffusion << ", id "
                          << info.loss_identity << ")\n";
            }
            if (cfg.train.checkpoint_every > 0 &&
                trainer.step_count() % cfg.train.checkpoint_every == 0) {
                char name[64];
                snprintf(name, sizeof(name), "ckpt_%06lld.bin",
                         (long long)trainer.step_count());
                trainer.save_checkpoint((run_dir / name).string());
            }
        }
    } catch (const RuntimeAbort& e) {
        json diag{{"error", e.what()}, {"step", trainer.step_count()}};
        std::ofstream(run_dir / "diagnostic.json") << diag.dump(2) << "\n";
        throw;
    }
    trainer.save_checkpoint((run_dir / "ckpt_final.bin").string());
    std::cout << "[train] " << run_name << " done -> "
              << (run_dir / "ckpt_final.bin").string() << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& resume_from) {
    ExperimentConfig cfg = load_effective_config(args);
    DirLock lock(cfg.out_dir);
    return run_training(cfg, AttnTopology::kTriplet, "train", resume_from);
}

PstfModel model_from_checkpoint(const ExperimentConfig& cfg, const std::string& ckpt) {
    CheckpointMeta meta = read_checkpoint_meta(ckpt);
    PstfModel model;
    model.build(cfg.world, cfg.model, cfg.seed, meta.topology);
    load_model_params(ckpt, model, cfg.hash_hex());
    model.set_train_mode(cfg.train.mode);
    return model;
}

int cmd_sweep(const CommonArgs& args, const std::string& ckpt, const std::string& attribute,
              const std::string& alphas_text) {
    ExperimentConfig cfg = load_effective_config(args);
    DirLock lock(cfg.out_dir);
    Artifacts art = Artifacts::load(cfg);
    PstfModel model = model_from_checkpoint(cfg, ckpt);

    const AttributeDirection& dir = art.bank.by_name(attribute);
    std::vector<double> alphas = alphas_text.empty() ? strength_grid(cfg.metrics)
                                                     : parse_alphas(alphas_text);

    Sampler sampler(model, art.world, cfg.inference);
    auto refs = make_eval_refs(art.world, art.probes.identity, 1, cfg.seed + 1);
    const EvalRef& ref = refs[0];
    GenerationInputs in{ref.f, ref.landmarks, ref.w, ref.template_id};

    std::cout << "[sweep] attribute " << attribute << ", " << alphas.size()
              << " strengths\n";
    auto sweep = sampler.attribute_sweep_run(in, dir, alphas, cfg.seed + 2);

    const fs::path dir_out = fs::path(cfg.out_dir) / "sweeps" / attribute;
    fs::create_directories(dir_out);
    write_ppm(ref.image, (dir_out / "reference.ppm").string());
    for (size_t i = 0; i < sweep.images.size(); ++i) {
        char name[64];
        snprintf(name, sizeof(name), "alpha_%05.2f.ppm", alphas[i]);
        write_ppm(sweep.images[i], (dir_out / name).string());
    }
    sweep.trace.save((dir_out / "trace.bin").string());

    auto curve = sweep_similarity_curve(sweep.images, ref.image, art.probes.identity);
    const int k = art.bank.index_of(attribute);
    std::vector<double> probe_response;
    for (const auto& img : sweep.images)
        probe_response.push_back(art.probes.attribute.predict(img)[(size_t)k]);

    json j{{"config_hash", cfg.hash_hex()},
           {"probe", "synthetic"},
           {"attribute", attribute},
           {"alphas", alphas},
           {"identity_cosine", curve},
           {"attribute_response", probe_response},
           {"spearman_alpha_vs_response",
            alphas.size() > 1 ? spearman_rho(alphas, probe_response) : 0.0}};
    std::ofstream(dir_out / "curve.json") << j.dump(2) << "\n";

    if (alphas.size() > 1) {
        write_chart_ppm((dir_out / "chart_identity.ppm").string(), alphas,
                        {{curve, 0.1, 0.3, 0.8}});
        write_chart_ppm((dir_out / "chart_response.ppm").string(), alphas,
                        {{probe_response, 0.8, 0.2, 0.1}});
    }
    std::cout << "[sweep] wrote " << sweep.images.size() << " images and curves to "
              << dir_out.string() << "\n";
    return 0;
}

int cmd_ablate(const CommonArgs& args) {
    ExperimentConfig cfg = load_effective_config(args);
    DirLock lock(cfg.out_dir);

    // paired training from identical seeds; shared weights start equal
    {
        PstfModel a, b;
        a.build(cfg.world, cfg.model, cfg.seed, AttnTopology::kTriplet);
        b.build(cfg.world, cfg.model, cfg.seed, AttnTopology::kConcat);
        for (size_t i = 0; i < a.params.size(); ++i) {
            const auto& e = a.params.at(i);
            if (b.params.has(e.name) && b.params.get(e.name).data() != e.tensor.data())
                throw RuntimeAbort("ablation init mismatch on " + e.name);
        }
        std::cout << "[ablate] shared-weight initialization verified\n";
    }
    run_training(cfg, AttnTopology::kTriplet, "ablate_triplet", "");
    run_training(cfg, AttnTopology::kConcat, "ablate_concat", "");

    Artifacts art = Artifacts::load(cfg);
    const fs::path out(cfg.out_dir);
    PstfModel ma = model_from_checkpoint(
        cfg, (out / "runs/ablate_triplet/ckpt_final.bin").string());
    PstfModel mb = model_from_checkpoint(
        cfg, (out / "runs/ablate_concat/ckpt_final.bin").string());
    Sampler sa(ma, art.world, cfg.inference);
    Sampler sb(mb, art.world, cfg.inference);

    auto refs = make_eval_refs(art.world, art.probes.identity, cfg.metrics.eval_refs,
                               cfg.seed + 3);
    auto alphas = strength_grid(cfg.metrics);
    std::cout << "[ablate] evaluating " << refs.size() << " refs x " << art.bank.size()
              << " attributes x " << alphas.size() << " strengths per model\n";
    AblationReport rep = ablation_report(sa, sb, refs, art.bank, alphas,
                                         art.probes.identity, cfg.hash_hex(), cfg.seed + 4,
                                         cfg.metrics.similarity_floor);

    const fs::path rep_dir = out / "reports";
    fs::create_directories(rep_dir);
    std::ofstream(rep_dir / "ablation.json") << rep.to_json_string() << "\n";
    rep.model_a.write((rep_dir / "triplet.json").string(),
                      (rep_dir / "triplet.txt").string());
    rep.model_b.write((rep_dir / "concat.json").string(), (rep_dir / "concat.txt").string());

    std::vector<double> attr_idx;
    for (size_t i = 0; i < art.bank.size(); ++i) attr_idx.push_back((double)i);
    write_chart_ppm((rep_dir / "chart_per_attribute.ppm").string(), attr_idx,
                    {{rep.model_a.per_attribute_mean, 0.1, 0.3, 0.8},
                     {rep.model_b.per_attribute_mean, 0.8, 0.2, 0.1}});
    write_chart_ppm((rep_dir / "chart_per_strength.ppm").string(), alphas,
                    {{rep.model_a.per_strength_mean, 0.1, 0.3, 0.8},
                     {rep.model_b.per_strength_mean, 0.8, 0.2, 0.1}});

    std::cout << "[ablate] aggregate similarity delta (triplet - concat): "
              << rep.aggregate_delta << " ("
              << (rep.aggregate_delta > 0 ? "triplet ahead" : "concat ahead") << ")\n";
    return 0;
}

int cmd_report(const CommonArgs& args, const std::string& ckpt) {
    ExperimentConfig cfg = load_effective_config(args);
    DirLock lock(cfg.out_dir);
    Artifacts art = Artifacts::load(cfg);
    PstfModel model = model_from_checkpoint(cfg, ckpt);
    Sampler sampler(model, art.world, cfg.inference);

    auto refs = make_eval_refs(art.world, art.probes.identity, cfg.metrics.eval_refs,
                               cfg.seed + 3);
    auto alphas = strength_grid(cfg.metrics);
    std::cout << "[report] " << refs.size() << " refs x " << art.bank.size()
              << " attributes x " << alphas.size() << " strengths\n";
    SimilarityReport rep =
        sweep_grid_report(sampler, refs, art.bank, alphas, art.probes.identity,
                          cfg.hash_hex(), cfg.seed + 4, cfg.metrics.similarity_floor);

    const fs::path rep_dir = fs::path(cfg.out_dir) / "reports";
    fs::create_directories(rep_dir);
    rep.write((rep_dir / "report.json").string(), (rep_dir / "report.txt").string());
    write_chart_ppm((rep_dir / "chart_per_strength.ppm").string(), alphas,
                    {{rep.per_strength_mean, 0.1, 0.3, 0.8}});
    std::cout << "[report] aggregate similarity " << rep.aggregate << " (probe=synthetic)\n";
    std::cout << rep.table_text();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pstf: personalized generation with controllable face attributes, "
                 "on a synthetic test world"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string checkpoint, attribute = "smile", alphas, resume;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "experiment config (json)")
            ->required();
        cmd->add_option("--seed", common.seed_override, "override config seed");
        cmd->add_option("--out", common.out_override, "override output directory");
    };

    CLI::App* prepare = app.add_subcommand("prepare", "build world, dataset, bank, probes");
    add_common(prepare);
    CLI::App* train = app.add_subcommand("train", "train the generator");
    add_common(train);
    train->add_option("--checkpoint", resume, "resume from checkpoint");
    CLI::App* sweep = app.add_subcommand("sweep", "attribute sweep from a checkpoint");
    add_common(sweep);
    sweep->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    sweep->add_option("--attribute", attribute, "bank attribute name");
    sweep->add_option("--alphas", alphas, "strengths, e.g. 0,0.5,1.0 (default: metrics grid)");
    CLI::App* ablate = app.add_subcommand("ablate", "paired triplet-vs-concat study");
    add_common(ablate);
    CLI::App* report = app.add_subcommand("report", "similarity grid report");
    add_common(report);
    report->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();

    try {
        app.parse(argc, argv);
        if (prepare->parsed()) return cmd_prepare(common);
        if (train->parsed()) return cmd_train(common, resume);
        if (sweep->parsed()) return cmd_sweep(common, checkpoint, attribute, alphas);
        if (ablate->parsed()) return cmd_ablate(common);
        if (report->parsed()) return cmd_report(common, checkpoint);
        return 2;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "validation failure: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "validation failure: " << e.what() << "\n";
        return 3;
    } catch (const RuntimeAbort& e) {
        std::cerr << "runtime abort: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "runtime abort: " << e.what() << "\n";
        return 4;
    }
}
