#pragma once

// End-to-end runs built from an ExperimentConfig: train + evaluate with
// artifacts on disk, and the channel/OFDM diagnostics printed by the CLI.

#include <string>
#include <vector>

#include "rvjscc/config.hpp"
#include "rvjscc/report.hpp"
#include "rvjscc/trainer.hpp"

namespace rvjscc {

struct ExperimentRun {
    TrainResult train;
    std::vector<MetricsRecord> metrics;  // test split at eval_snrs_db
    JsccSystem model{nullptr};
};

/// Trains cfg.variant on data.train/val and evaluates on data.test. With a
/// non-empty out_dir writes config_resolved.json, checkpoint.pt, history.csv,
/// metrics.csv and plots/ there.
ExperimentRun run_experiment(const ExperimentConfig& cfg, const DatasetSplit& data, const std::string& out_dir,
                             const std::function<void(const EpochRecord&)>& on_epoch = {});

struct ProbeReport {
    double pdp_sum = 0.0;
    std::vector<double> pdp;
    std::vector<double> tap_var_empirical;
    std::vector<double> tap_var_stderr;
    double cp_residual = 0.0;          // max |Y_hat - H Y| with L <= L_cp + 1
    double overlong_residual = 0.0;    // same with L = L_cp + 2
    double power_error = 0.0;          // max |mean |Y|^2 - P|
    double ls_error = 0.0;             // noiseless max |H_hat - H|
    double rho_key = 0.0;
    double rho_interp = 0.0;
    std::string text;
};

ProbeReport channel_probe(const ExperimentConfig& cfg, int draws, uint64_t seed);

}  // namespace rvjscc
