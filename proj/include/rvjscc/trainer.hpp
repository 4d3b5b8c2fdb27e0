#pragma once

// Joint reconstruction + denoising objective, the plateau learning-rate
// schedule with early stopping, the training loop and SNR-sweep evaluation.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rvjscc/channel.hpp"
#include "rvjscc/dataset.hpp"
#include "rvjscc/video_codec.hpp"

namespace rvjscc {

struct TrainConfig {
    double lambda = 0.7;
    double init_lr = 1e-4;
    double lr_factor = 0.8;
    int patience = 4;        // bad epochs before the lr drops
    int stop_patience = 8;   // consecutive bad epochs before training stops
    int batch_size = 1;
    double snr_lo_db = 0.0;
    double snr_hi_db = 20.0;
    int epochs_max = 200;
    int steps_per_epoch = 500;
    uint64_t seed = 1;
    std::vector<double> eval_snrs_db{0.0, 5.0, 10.0, 15.0, 20.0};

    bool operator==(const TrainConfig&) const = default;
};

struct MetricsRecord {
    std::string config_tag;
    double snr_db = 0.0;
    double psnr_db = 0.0;
    double ms_ssim = 0.0;
    double loss = 0.0;
    double latent_mse = 0.0;
    int epoch = 0;
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;        // drives the schedule
    double val_frame_mse = 0.0;   // reconstruction term alone
    double val_latent_mse = 0.0;
    double val_psnr_db = 0.0;
    bool improved = false;

    bool operator==(const EpochRecord&) const = default;
};

struct LossTerms {
    torch::Tensor total;
    torch::Tensor frame_mse;
    torch::Tensor latent_mse;
};

/// Mean MSE over complex latents viewed as real pairs.
torch::Tensor latent_mse(const torch::Tensor& z, const torch::Tensor& z_tilde);

/// (1 / TN) sum [MSE(x, x_hat) + lambda MSE(z, z_tilde)] over the frames of the
/// batch window. `latents` and `latents_tilde` hold one (B, k) tensor per frame.
LossTerms joint_loss(const torch::Tensor& frames, const torch::Tensor& frames_hat,
                     const std::vector<torch::Tensor>& latents, const std::vector<torch::Tensor>& latents_tilde,
                     double lambda);

struct LrState {
    double lr = 0.0;
    int bad_epochs = 0;        // resets on improvement and after each reduction
    int stagnant_epochs = 0;   // resets on improvement only
    int reductions = 0;
    bool stop = false;

    static LrState initial(const TrainConfig& cfg) { return LrState{cfg.init_lr}; }
};

/// One epoch of the plateau schedule: lr = init_lr * factor^reductions.
LrState lr_step(const LrState& state, bool improved, const TrainConfig& cfg);

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    std::string checkpoint_path;   // best-validation checkpoint, when non-empty
    std::string config_json;       // snapshot stored with the checkpoint
    std::string dump_dir;          // where a divergence dump goes
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    bool stopped_early = false;
};

/// Trains on GoP windows (bootstrap frame + N frames) drawn from `train_set`,
/// validating on every window of `val_set` once per epoch. On return the
/// model holds the best-validation parameters.
TrainResult train(JsccSystem& model, const std::vector<VideoSequence>& train_set,
                  const std::vector<VideoSequence>& val_set, const PowerDelayProfile& pdp, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

/// Sends whole sequences (bootstrap + chained GoPs) at each SNR and reports
/// PSNR / MS-SSIM averaged over every GoP frame.
std::vector<MetricsRecord> evaluate(JsccSystem& model, const std::vector<VideoSequence>& sequences,
                                    const PowerDelayProfile& pdp, const std::vector<double>& snrs_db,
                                    uint64_t seed, double lambda, const std::string& tag = "", int epoch = 0);

}  // namespace rvjscc
