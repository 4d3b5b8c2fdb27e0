#pragma once

// Metrics table I/O, per-metric SNR plots and the ablation sweep.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rvjscc/config.hpp"
#include "rvjscc/trainer.hpp"

namespace rvjscc {

inline const std::vector<std::string>& metrics_csv_columns() {
    static const std::vector<std::string> cols{"config_tag", "snr_db", "psnr_db", "ms_ssim", "loss", "latent_mse", "epoch"};
    return cols;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

/// Per-epoch training history (lr, losses, validation PSNR, improved flag).
void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);
std::vector<EpochRecord> read_history_csv(const std::string& path);

/// One SVG per metric (psnr_db, ms_ssim, loss, latent_mse) with SNR on the
/// x axis and one line per config tag. Returns the written paths.
std::vector<std::string> write_metric_plots(const std::string& dir, const std::vector<MetricsRecord>& records);

/// Mean of one metric per config tag, over all SNR points.
std::map<std::string, double> mean_by_tag(const std::vector<MetricsRecord>& records, const std::string& metric);

class MissingCheckpoints : public std::runtime_error {
public:
    explicit MissingCheckpoints(std::vector<std::string> tags);
    const std::vector<std::string>& tags() const { return tags_; }

private:
    std::vector<std::string> tags_;
};

/// <checkpoint_dir>/<tag>/checkpoint.pt
std::string checkpoint_path_for(const std::string& checkpoint_dir, const std::string& tag);

/// Evaluates every listed variant's checkpoint on `sequences` at each SNR.
/// Throws MissingCheckpoints naming every absent variant before any work.
std::vector<MetricsRecord> run_ablation(const std::map<std::string, std::string>& checkpoints,
                                        const std::vector<std::string>& tags,
                                        const std::vector<VideoSequence>& sequences,
                                        const std::vector<double>& snrs_db, uint64_t seed);

}  // namespace rvjscc
