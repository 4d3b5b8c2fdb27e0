// rvjscc: train, evaluate and probe the OFDM video JSCC system.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "rvjscc/config.hpp"
#include "rvjscc/experiment.hpp"
#include "rvjscc/report.hpp"
#include "rvjscc/trainer.hpp"

namespace fs = std::filesystem;
using namespace rvjscc;

namespace {

std::optional<uint64_t> seed_flag(const CLI::Option* opt, uint64_t value) {
    if (opt->count() == 0) return std::nullopt;
    return value;
}

void log_epoch(const std::string& tag, const EpochRecord& e) {
    spdlog::info("[{}] epoch {:3d}  lr {:.3g}  train {:.5f}  val {:.5f}  val psnr {:.2f} dB{}", tag, e.epoch, e.lr,
                 e.train_loss, e.val_loss, e.val_psnr_db, e.improved ? "  *" : "");
}

void print_metrics(const std::vector<MetricsRecord>& rows) {
    std::cout << "config_tag        snr_db   psnr_db   ms_ssim\n";
    for (const auto& r : rows) {
        std::cout << fmt::format("{:<16} {:7.1f} {:9.3f} {:9.4f}\n", r.config_tag, r.snr_db, r.psnr_db, r.ms_ssim);
    }
}

int cmd_train(const std::string& config_path, const std::string& out_dir, std::optional<uint64_t> seed,
              const std::string& variant, int epochs, int steps) {
    auto cfg = load_config(config_path);
    cfg.train.seed = resolve_seed(seed, cfg.train.seed);
    if (!variant.empty()) cfg.variant = variant;
    if (epochs > 0) cfg.train.epochs_max = epochs;
    if (steps > 0) cfg.train.steps_per_epoch = steps;
    cfg.validate();
    const auto dir = out_dir.empty() ? (fs::path(cfg.ablation.checkpoint_dir) / cfg.variant).string() : out_dir;
    auto data = make_datasets(cfg.data);
    spdlog::info("training {} ({} train / {} val / {} test sequences) -> {}", cfg.variant, data.train.size(),
                 data.val.size(), data.test.size(), dir);
    const auto start = std::chrono::steady_clock::now();
    auto run = run_experiment(cfg, data, dir, [&](const EpochRecord& e) { log_epoch(cfg.variant, e); });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    spdlog::info("best epoch {} (val loss {:.5f}), {:.1f} s{}", run.train.best_epoch, run.train.best_val_loss, secs,
                 run.train.stopped_early ? ", stopped early" : "");
    print_metrics(run.metrics);
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::vector<double>& snrs, const std::string& out_dir,
             std::optional<uint64_t> seed) {
    auto loaded = load_model(checkpoint);
    auto& cfg = loaded.config;
    cfg.train.seed = resolve_seed(seed, cfg.train.seed);
    cfg.train.eval_snrs_db = snrs;
    auto data = make_datasets(cfg.data);
    auto rows = evaluate(loaded.model, data.test, cfg.pdp(), snrs, cfg.train.seed, cfg.effective_lambda(), cfg.variant);
    fs::create_directories(out_dir);
    write_config((fs::path(out_dir) / "config_resolved.json").string(), cfg);
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), rows);
    write_metric_plots((fs::path(out_dir) / "plots").string(), rows);
    print_metrics(rows);
    spdlog::info("wrote {}", (fs::path(out_dir) / "metrics.csv").string());
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir, std::optional<uint64_t> seed,
               bool train_missing) {
    auto cfg = load_config(config_path);
    cfg.train.seed = resolve_seed(seed, cfg.train.seed);
    auto data = make_datasets(cfg.data);
    std::map<std::string, std::string> checkpoints;
    for (const auto& tag : cfg.ablation.variants) {
        const auto path = checkpoint_path_for(cfg.ablation.checkpoint_dir, tag);
        if (train_missing && !fs::exists(path)) {
            auto variant_cfg = cfg;
            variant_cfg.variant = tag;
            spdlog::info("no checkpoint for {}, training it", tag);
            run_experiment(variant_cfg, data, fs::path(path).parent_path().string(),
                           [&](const EpochRecord& e) { log_epoch(tag, e); });
        }
        checkpoints[tag] = path;
    }
    auto rows = run_ablation(checkpoints, cfg.ablation.variants, data.test, cfg.train.eval_snrs_db, cfg.train.seed);
    fs::create_directories(out_dir);
    write_config((fs::path(out_dir) / "config_resolved.json").string(), cfg);
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), rows);
    write_metric_plots((fs::path(out_dir) / "plots").string(), rows);
    print_metrics(rows);
    std::cout << "mean PSNR over the SNR grid:\n";
    for (const auto& [tag, mean] : mean_by_tag(rows, "psnr_db")) std::cout << fmt::format("  {:<16} {:.3f} dB\n", tag, mean);
    return 0;
}

int cmd_probe(const std::string& config_path, int draws, std::optional<uint64_t> seed, const std::string& out_dir) {
    auto cfg = load_config(config_path);
    cfg.train.seed = resolve_seed(seed, cfg.train.seed);
    auto rep = channel_probe(cfg, draws, cfg.train.seed);
    std::cout << rep.text;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_config((fs::path(out_dir) / "config_resolved.json").string(), cfg);
    }
    return 0;
}

int cmd_info(const std::string& checkpoint) {
    auto loaded = load_model(checkpoint);
    std::cout << "checkpoint: " << checkpoint << "\n";
    std::cout << "variant: " << loaded.config.variant << "\n";
    std::cout << "parameters: " << loaded.model->parameter_count() << "\n";
    for (const auto& [group, params] : loaded.model->parameter_groups()) {
        int64_t n = 0;
        for (const auto& p : params) n += p.numel();
        std::cout << fmt::format("  {:<20} {}\n", group, n);
    }
    std::cout << "config:\n" << serialize_config(loaded.config);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Video JSCC over OFDM multipath channels"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

    std::string config_path, checkpoint, out_dir, variant;
    uint64_t seed = 0;
    int epochs = 0, steps = 0, draws = 100000;
    bool train_missing = false;
    std::vector<double> snrs;

    auto* train = app.add_subcommand("train", "train one variant and evaluate it on the test split");
    train->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out_dir, "output directory (default <checkpoint_dir>/<variant>)");
    auto* train_seed = train->add_option("--seed", seed, "training seed (overrides RVJSCC_SEED and the config)");
    train->add_option("--variant", variant, "override the config variant")
        ->check(CLI::IsMember(Variant::tags()));
    train->add_option("--epochs", epochs, "override epochs_max");
    train->add_option("--steps", steps, "override steps_per_epoch");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over an SNR grid");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--snrs", snrs, "comma-separated SNRs in dB")->required()->delimiter(',');
    eval->add_option("--out", out_dir, "output directory")->capture_default_str();
    auto* eval_seed = eval->add_option("--seed", seed, "channel seed");

    auto* ablate = app.add_subcommand("ablate", "evaluate every ablation variant's checkpoint");
    ablate->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    ablate->add_option("--out", out_dir, "output directory");
    auto* ablate_seed = ablate->add_option("--seed", seed, "seed");
    ablate->add_flag("--train-missing", train_missing, "train variants whose checkpoint is absent");

    auto* probe = app.add_subcommand("channel-probe", "print channel and OFDM diagnostics");
    probe->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    probe->add_option("--draws", draws, "Monte-Carlo tap draws")->capture_default_str();
    probe->add_option("--out", out_dir, "write the resolved config here");
    auto* probe_seed = probe->add_option("--seed", seed, "seed");

    auto* info = app.add_subcommand("info", "print parameter counts and the stored config");
    info->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir, seed_flag(train_seed, seed), variant, epochs, steps);
        if (eval->parsed()) {
            return cmd_eval(checkpoint, snrs, out_dir.empty() ? "eval_out" : out_dir, seed_flag(eval_seed, seed));
        }
        if (ablate->parsed()) {
            return cmd_ablate(config_path, out_dir.empty() ? "ablation_out" : out_dir, seed_flag(ablate_seed, seed),
                              train_missing);
        }
        if (probe->parsed()) return cmd_probe(config_path, draws, seed_flag(probe_seed, seed), out_dir);
        if (info->parsed()) return cmd_info(checkpoint);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 2;
}
