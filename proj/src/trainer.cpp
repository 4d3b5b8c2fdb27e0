#include "rvjscc/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>

#include <spdlog/spdlog.h>

#include "rvjscc/metrics.hpp"

namespace rvjscc {

torch::Tensor latent_mse(const torch::Tensor& z, const torch::Tensor& z_tilde) {
    auto diff = (z - z_tilde).contiguous();
    if (diff.is_complex()) diff = torch::view_as_real(diff);
    return (diff * diff).mean();
}

LossTerms joint_loss(const torch::Tensor& frames, const torch::Tensor& frames_hat,
                     const std::vector<torch::Tensor>& latents, const std::vector<torch::Tensor>& latents_tilde,
                     double lambda) {
    if (frames.sizes() != frames_hat.sizes()) throw std::invalid_argument("joint_loss: frame shapes differ");
    if (latents.size() != latents_tilde.size()) throw std::invalid_argument("joint_loss: latent counts differ");
    auto diff = frames - frames_hat;
    LossTerms terms;
    terms.frame_mse = (diff * diff).mean();
    terms.latent_mse = torch::zeros({}, terms.frame_mse.options());
    if (!latents.empty()) {
        for (size_t i = 0; i < latents.size(); ++i) {
            terms.latent_mse = terms.latent_mse + latent_mse(latents[i], latents_tilde[i]).to(terms.frame_mse.scalar_type());
        }
        terms.latent_mse = terms.latent_mse / static_cast<double>(latents.size());
    }
    terms.total = terms.frame_mse + lambda * terms.latent_mse;
    return terms;
}

LrState lr_step(const LrState& state, bool improved, const TrainConfig& cfg) {
    LrState next = state;
    if (improved) {
        next.bad_epochs = 0;
        next.stagnant_epochs = 0;
        return next;
    }
    ++next.bad_epochs;
    ++next.stagnant_epochs;
    if (next.bad_epochs >= cfg.patience) {
        ++next.reductions;
        next.lr = cfg.init_lr * std::pow(cfg.lr_factor, next.reductions);
        next.bad_epochs = 0;
    }
    if (next.stagnant_epochs >= cfg.stop_patience) next.stop = true;
    return next;
}

namespace {

struct Window {
    size_t sequence;
    int64_t start;
};

std::vector<Window> gop_windows(const std::vector<VideoSequence>& set, int gop_len) {
    std::vector<Window> windows;
    for (size_t s = 0; s < set.size(); ++s) {
        for (int64_t g = 0; g < set[s].gop_count(gop_len); ++g) windows.push_back({s, g * gop_len});
    }
    return windows;
}

torch::Tensor gather_clips(const std::vector<VideoSequence>& set, const std::vector<Window>& windows,
                           const std::vector<int64_t>& picks, int gop_len, torch::ScalarType dtype) {
    std::vector<torch::Tensor> clips;
    clips.reserve(picks.size());
    for (auto p : picks) {
        const auto& w = windows[static_cast<size_t>(p)];
        clips.push_back(set[w.sequence].frames.narrow(0, w.start, gop_len + 1));
    }
    return torch::stack(clips).to(dtype);
}

LossTerms gop_loss(const GopResult& result, const torch::Tensor& frames, double lambda) {
    std::vector<torch::Tensor> z, z_tilde;
    for (const auto& rec : result.records) {
        if (rec.display_index == 0) continue;
        // The latent term trains the denoiser alone. Through the encoder it
        // rewards predictable latents and drowns the reconstruction gradient.
        z.push_back(rec.latent.symbols.detach());
        z_tilde.push_back(rec.z_tilde_supervised.defined() ? rec.z_tilde_supervised : rec.z_tilde);
    }
    return joint_loss(frames, result.decoded, z, z_tilde, lambda);
}

ChannelSampler make_sampler(const Variant& variant, const PowerDelayProfile& pdp, const torch::Generator& gen) {
    return variant.fading ? fading_sampler(pdp, gen) : awgn_sampler(gen);
}

struct ValidationSummary {
    double loss = 0.0;
    double frame_mse = 0.0;
    double latent_mse = 0.0;
    double psnr_db = 0.0;
};

ValidationSummary validate(JsccSystem& model, const std::vector<VideoSequence>& set,
                           const std::vector<Window>& windows, const PowerDelayProfile& pdp,
                           const TrainConfig& cfg, double lambda) {
    torch::NoGradGuard no_grad;
    model->eval();
    const auto& sys = model->config();
    const int n = sys.gop_len;
    auto gen = make_generator(cfg.seed ^ 0x5DEECE66DULL);
    auto sampler = make_sampler(sys.variant, pdp, gen);
    constexpr int64_t chunk = 16;
    ValidationSummary sum;
    double psnr_total = 0.0;
    int64_t frame_count = 0;
    for (int64_t begin = 0; begin < static_cast<int64_t>(windows.size()); begin += chunk) {
        const int64_t count = std::min<int64_t>(chunk, static_cast<int64_t>(windows.size()) - begin);
        std::vector<int64_t> picks(static_cast<size_t>(count));
        std::vector<double> snrs(static_cast<size_t>(count));
        for (int64_t i = 0; i < count; ++i) {
            picks[static_cast<size_t>(i)] = begin + i;
            snrs[static_cast<size_t>(i)] = cfg.eval_snrs_db[static_cast<size_t>(begin + i) % cfg.eval_snrs_db.size()];
        }
        auto clips = gather_clips(set, windows, picks, n, model->real_dtype());
        auto snr = SnrContext::from_db(torch::tensor(snrs, torch::kFloat64), sys.ofdm.power);
        GopBatch gop{clips.narrow(1, 1, n), 1, clips.select(1, 0)};
        auto result = model->transmit_gop(gop, std::nullopt, sampler, snr);
        auto terms = gop_loss(result, gop.frames, lambda);
        const auto weight = static_cast<double>(count);
        sum.loss += weight * terms.total.item<double>();
        sum.frame_mse += weight * terms.frame_mse.item<double>();
        sum.latent_mse += weight * terms.latent_mse.item<double>();
        auto per_frame = psnr_per_frame(gop.frames, result.decoded);
        psnr_total += per_frame.sum().item<double>();
        frame_count += per_frame.numel();
    }
    const auto total = static_cast<double>(windows.size());
    sum.loss /= total;
    sum.frame_mse /= total;
    sum.latent_mse /= total;
    sum.psnr_db = psnr_total / static_cast<double>(frame_count);
    model->train();
    return sum;
}

std::vector<torch::Tensor> snapshot(const JsccSystem& model) {
    std::vector<torch::Tensor> copy;
    for (const auto& p : model->parameters()) copy.push_back(p.detach().clone());
    return copy;
}

void restore(JsccSystem& model, const std::vector<torch::Tensor>& copy) {
    torch::NoGradGuard no_grad;
    auto params = model->parameters();
    for (size_t i = 0; i < params.size(); ++i) params[i].copy_(copy[i]);
}

}  // namespace

TrainResult train(JsccSystem& model, const std::vector<VideoSequence>& train_set,
                  const std::vector<VideoSequence>& val_set, const PowerDelayProfile& pdp, const TrainConfig& cfg,
                  const TrainOptions& opts) {
    const auto& sys = model->config();
    const int n = sys.gop_len;
    const auto train_windows = gop_windows(train_set, n);
    const auto val_windows = gop_windows(val_set, n);
    if (train_windows.empty()) throw std::invalid_argument("train: training set holds no complete GoP");
    if (val_windows.empty()) throw std::invalid_argument("train: validation set holds no complete GoP");
    if (cfg.eval_snrs_db.empty()) throw std::invalid_argument("train: eval_snrs_db is empty");
    const double lambda = sys.variant.denoiser ? cfg.lambda : 0.0;

    auto gen = make_generator(cfg.seed);
    auto sampler = make_sampler(sys.variant, pdp, gen);
    torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(cfg.init_lr));
    model->train();

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    auto best_params = snapshot(model);
    auto state = LrState::initial(cfg);

    for (int epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
        for (auto& group : optimizer.param_groups()) {
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(state.lr);
        }
        double loss_sum = 0.0;
        for (int step = 0; step < cfg.steps_per_epoch; ++step) {
            auto picks_t = torch::randint(0, static_cast<int64_t>(train_windows.size()), {cfg.batch_size}, gen,
                                          torch::TensorOptions().dtype(torch::kLong));
            std::vector<int64_t> picks(picks_t.data_ptr<int64_t>(), picks_t.data_ptr<int64_t>() + cfg.batch_size);
            auto clips = gather_clips(train_set, train_windows, picks, n, model->real_dtype());
            auto snr_db = torch::rand({cfg.batch_size}, gen, torch::TensorOptions().dtype(torch::kFloat64)) *
                              (cfg.snr_hi_db - cfg.snr_lo_db) +
                          cfg.snr_lo_db;
            auto snr = SnrContext::from_db(snr_db, sys.ofdm.power);
            GopBatch gop{clips.narrow(1, 1, n), 1, clips.select(1, 0)};
            auto gop_result = model->transmit_gop(gop, std::nullopt, sampler, snr);
            auto terms = gop_loss(gop_result, gop.frames, lambda);
            const double loss = terms.total.item<double>();
            if (!std::isfinite(loss)) {
                std::string where = "epoch " + std::to_string(epoch) + ", step " + std::to_string(step);
                if (!opts.dump_dir.empty()) {
                    std::filesystem::create_directories(opts.dump_dir);
                    const auto dump = (std::filesystem::path(opts.dump_dir) / "divergence_dump.pt").string();
                    save_checkpoint(dump, model, opts.config_json);
                    where += ", state dumped to " + dump;
                }
                throw TrainingDiverged("training diverged (non-finite loss) at " + where);
            }
            optimizer.zero_grad();
            terms.total.backward();
            optimizer.step();
            loss_sum += loss;
        }

        auto val = validate(model, val_set, val_windows, pdp, cfg, lambda);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = state.lr;
        rec.train_loss = loss_sum / cfg.steps_per_epoch;
        rec.val_loss = val.loss;
        rec.val_frame_mse = val.frame_mse;
        rec.val_latent_mse = val.latent_mse;
        rec.val_psnr_db = val.psnr_db;
        rec.improved = val.loss < result.best_val_loss;
        if (rec.improved) {
            result.best_val_loss = val.loss;
            result.best_epoch = epoch;
            best_params = snapshot(model);
        }
        state = lr_step(state, rec.improved, cfg);
        result.history.push_back(rec);
        spdlog::debug("[{}] epoch {} lr {:.3g} train {:.5f} val {:.5f} psnr {:.2f}", sys.variant.tag, epoch, rec.lr,
                      rec.train_loss, rec.val_loss, rec.val_psnr_db);
        if (opts.on_epoch) opts.on_epoch(rec);
        if (state.stop) {
            result.stopped_early = true;
            break;
        }
    }
    restore(model, best_params);
    if (!opts.checkpoint_path.empty()) save_checkpoint(opts.checkpoint_path, model, opts.config_json);
    return result;
}

std::vector<MetricsRecord> evaluate(JsccSystem& model, const std::vector<VideoSequence>& sequences,
                                    const PowerDelayProfile& pdp, const std::vector<double>& snrs_db,
                                    uint64_t seed, double lambda, const std::string& tag, int epoch) {
    torch::NoGradGuard no_grad;
    model->eval();
    const auto& sys = model->config();
    const int n = sys.gop_len;

    std::map<int64_t, std::vector<size_t>> by_length;
    for (size_t i = 0; i < sequences.size(); ++i) {
        const int64_t gops = sequences[i].gop_count(n);
        if (gops > 0) by_length[gops].push_back(i);
    }
    if (by_length.empty()) throw std::invalid_argument("evaluate: no sequence holds a complete GoP");

    std::vector<MetricsRecord> records;
    for (size_t si = 0; si < snrs_db.size(); ++si) {
        auto gen = make_generator(seed + 1000003ULL * (si + 1));
        auto sampler = make_sampler(sys.variant, pdp, gen);
        double psnr_sum = 0.0, ssim_sum = 0.0, frame_mse_sum = 0.0, latent_sum = 0.0;
        int64_t frames_seen = 0, latents_seen = 0;
        for (const auto& [gops, members] : by_length) {
            std::vector<torch::Tensor> stacked;
            for (auto i : members) stacked.push_back(sequences[i].frames.narrow(0, 0, 1 + gops * n));
            auto batch = torch::stack(stacked).to(model->real_dtype());
            const int64_t b = batch.size(0);
            auto snr = SnrContext::uniform(snrs_db[si], b, sys.ofdm.power);
            std::optional<torch::Tensor> prev;
            for (int64_t g = 0; g < gops; ++g) {
                GopBatch gop{batch.narrow(1, 1 + g * n, n), static_cast<int>(g + 1), std::nullopt};
                if (!prev) gop.bootstrap = batch.select(1, 0);
                auto result = model->transmit_gop(gop, prev, sampler, snr);
                prev = result.key_decoded();
                psnr_sum += psnr_per_frame(gop.frames, result.decoded).sum().item<double>();
                ssim_sum += ms_ssim_per_frame(gop.frames, result.decoded).sum().item<double>();
                auto diff = (gop.frames - result.decoded).to(torch::kFloat64);
                frame_mse_sum += (diff * diff).mean({2, 3, 4}).sum().item<double>();
                frames_seen += b * n;
                for (const auto& rec : result.records) {
                    if (rec.display_index == 0) continue;
                    auto d = torch::view_as_real((rec.latent.symbols - rec.z_tilde).contiguous()).to(torch::kFloat64);
                    latent_sum += (d * d).mean({1, 2}).sum().item<double>();
                    latents_seen += b;
                }
            }
        }
        MetricsRecord m;
        m.config_tag = tag.empty() ? sys.variant.tag : tag;
        m.snr_db = snrs_db[si];
        m.psnr_db = psnr_sum / static_cast<double>(frames_seen);
        m.ms_ssim = ssim_sum / static_cast<double>(frames_seen);
        m.latent_mse = latent_sum / static_cast<double>(latents_seen);
        m.loss = frame_mse_sum / static_cast<double>(frames_seen) + lambda * m.latent_mse;
        m.epoch = epoch;
        records.push_back(m);
    }
    model->train();
    return records;
}

}  // namespace rvjscc
