#include "rvjscc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "rvjscc/denoiser.hpp"

namespace rvjscc {

namespace fs = std::filesystem;

ExperimentRun run_experiment(const ExperimentConfig& cfg, const DatasetSplit& data, const std::string& out_dir,
                             const std::function<void(const EpochRecord&)>& on_epoch) {
    cfg.validate();
    const auto config_json = serialize_config(cfg);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_config((fs::path(out_dir) / "config_resolved.json").string(), cfg);
    }
    ExperimentRun run;
    run.model = build_system(cfg);
    TrainOptions opts;
    opts.config_json = config_json;
    opts.on_epoch = on_epoch;
    if (!out_dir.empty()) {
        opts.checkpoint_path = (fs::path(out_dir) / "checkpoint.pt").string();
        opts.dump_dir = out_dir;
    }
    const auto pdp = cfg.pdp();
    run.train = train(run.model, data.train, data.val, pdp, cfg.train, opts);
    run.metrics = evaluate(run.model, data.test, pdp, cfg.train.eval_snrs_db, cfg.train.seed, cfg.effective_lambda(),
                           cfg.variant, run.train.best_epoch);
    if (!out_dir.empty()) {
        write_history_csv((fs::path(out_dir) / "history.csv").string(), run.train.history);
        write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), run.metrics);
        write_metric_plots((fs::path(out_dir) / "plots").string(), run.metrics);
    }
    return run;
}

namespace {

struct RoundTrip {
    double residual = 0.0;
    double ls_error = 0.0;
};

// Zero-noise OFDM round trips over random taps drawn from an L-path profile.
RoundTrip ofdm_round_trips(const OfdmConfig& ofdm, int num_paths, double gamma, int trials, torch::Generator& gen) {
    const auto pdp = make_pdp(num_paths, gamma);
    const int m = ofdm.m_key;
    auto pilots = make_pilots(ofdm, m);
    RoundTrip out;
    for (int t = 0; t < trials; ++t) {
        auto taps = sample_taps(pdp, gen);
        auto data = normalize_power(unit_complex_noise({1, m, ofdm.n_s, ofdm.n_c}, gen), ofdm.power, 1);
        auto rx = ofdm_rx(convolve_taps(ofdm_tx(OfdmGrid{pilots, data}, ofdm), taps), ofdm, m);
        auto h = freq_response(taps, ofdm.n_c);
        out.residual = std::max(out.residual, (rx.data - h * data).abs().max().item<double>());
        auto est = ls_channel_estimate(rx.pilots, pilots);
        out.ls_error = std::max(out.ls_error, (est.h_freq - h).abs().max().item<double>());
    }
    return out;
}

}  // namespace

ProbeReport channel_probe(const ExperimentConfig& cfg, int draws, uint64_t seed) {
    if (draws < 2) throw std::invalid_argument("channel_probe: need at least 2 draws");
    cfg.validate();
    ProbeReport rep;
    const auto pdp = cfg.pdp();
    rep.pdp = pdp.variances;
    for (double v : pdp.variances) rep.pdp_sum += v;

    auto gen = make_generator(seed);
    auto taps = sample_taps(pdp, gen, {draws});
    auto power = torch::real(taps.taps * taps.taps.conj());
    auto mean = power.mean(0);
    auto se = power.std(0) / std::sqrt(static_cast<double>(draws));
    for (int l = 0; l < pdp.num_paths; ++l) {
        rep.tap_var_empirical.push_back(mean[l].item<double>());
        rep.tap_var_stderr.push_back(se[l].item<double>());
    }

    const auto& ofdm = cfg.ofdm;
    const int fitting = std::min(cfg.channel.num_paths, ofdm.l_cp + 1);
    auto inside = ofdm_round_trips(ofdm, fitting, cfg.channel.gamma, 20, gen);
    auto outside = ofdm_round_trips(ofdm, ofdm.l_cp + 2, cfg.channel.gamma, 20, gen);
    rep.cp_residual = inside.residual;
    rep.ls_error = inside.ls_error;
    rep.overlong_residual = outside.residual;

    auto grid = normalize_power(unit_complex_noise({16, ofdm.m_key, ofdm.n_s, ofdm.n_c}, gen) * 3.0, ofdm.power, 1);
    rep.power_error = (mean_power(grid, 1) - ofdm.power).abs().max().item<double>();
    rep.rho_key = bandwidth_ratio(ofdm, ofdm.m_key, cfg.data.frame_size, cfg.data.frame_size);
    rep.rho_interp = bandwidth_ratio(ofdm, ofdm.m_interp, cfg.data.frame_size, cfg.data.frame_size);

    std::string& s = rep.text;
    s += fmt::format("preset {}: L = {}, gamma = {}, N_c = {}, L_cp = {}, N_p = {}, N_s = {}\n", cfg.preset,
                     pdp.num_paths, pdp.gamma, ofdm.n_c, ofdm.l_cp, ofdm.n_p, ofdm.n_s);
    s += "power delay profile:\n";
    for (int l = 0; l < pdp.num_paths; ++l) {
        const auto idx = static_cast<size_t>(l);
        const double z = (rep.tap_var_empirical[idx] - rep.pdp[idx]) / rep.tap_var_stderr[idx];
        s += fmt::format("  tap {:2d}: sigma^2 = {:.6f}  empirical = {:.6f} +/- {:.6f}  (z = {:+.2f})\n", l,
                         rep.pdp[idx], rep.tap_var_empirical[idx], rep.tap_var_stderr[idx], z);
    }
    s += fmt::format("sum sigma_l^2 = {:.6f}  ({} draws)\n", rep.pdp_sum, draws);
    s += fmt::format("OFDM round trip, L = {} <= L_cp + 1: max |Y_hat - H Y| = {:.3e}\n", fitting, rep.cp_residual);
    s += fmt::format("OFDM round trip, L = {} = L_cp + 2: max |Y_hat - H Y| = {:.3e}\n", ofdm.l_cp + 2,
                     rep.overlong_residual);
    s += fmt::format("noiseless LS estimate: max |H_hat - H| = {:.3e}\n", rep.ls_error);
    s += fmt::format("power constraint: max |mean |Y|^2 - P| = {:.3e} (P = {})\n", rep.power_error, ofdm.power);
    s += fmt::format("bandwidth ratio at {}x{}: key rho = {:.6f}, interp rho = {:.6f}\n", cfg.data.frame_size,
                     cfg.data.frame_size, rep.rho_key, rep.rho_interp);
    return rep;
}

}  // namespace rvjscc
