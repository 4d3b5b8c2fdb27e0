#pragma once

// Key-frame and interpolation-frame JSCC codecs and the GoP pipeline that
// chains decoded references: key frame first, then interpolation frames by
// recursive bisection of the reference interval (4, 2, 1, 3 for N = 4).

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rvjscc/channel.hpp"
#include "rvjscc/denoiser.hpp"
#include "rvjscc/nn_blocks.hpp"
#include "rvjscc/ofdm.hpp"

namespace rvjscc {

enum class FrameKind { key, interp };

/// Which parts of the system are active. The five named variants make up the
/// ablation ladder.
struct Variant {
    std::string tag = "proposed";
    bool ofdm = true;      // OFDM framing with pilots; otherwise raw latent symbols
    bool fading = true;    // multipath taps; otherwise h = [1]
    bool context = true;   // feature-domain conditional coding; otherwise pixel residual coding
    bool denoiser = true;  // LS + ZF + refiner ahead of the decoders

    bool operator==(const Variant&) const = default;

    static Variant from_tag(const std::string& tag);
    static const std::vector<std::string>& tags();
};

struct CodecConfig {
    int feature_channels = 16;  // C_f
    ScaleSpaceConfig scale_space;
    int decoded_channels = 16;  // C_d
    int latent_channels_key = 144;
    int latent_channels_interp = 48;
    int width = 64;
    int downsample_stages = 4;  // spatial reduction 2^stages
    int ssf_width = 32;
    int context_width = 32;
    int denoiser_width = 32;
    int af_hidden = 16;

    bool operator==(const CodecConfig&) const = default;
};

struct SystemConfig {
    OfdmConfig ofdm;
    CodecConfig codec;
    int frame_h = 256;
    int frame_w = 256;
    int gop_len = 4;
    Variant variant;

    void validate() const;
    int packets(FrameKind kind) const { return kind == FrameKind::key ? ofdm.m_key : ofdm.m_interp; }
    int latent_h() const { return frame_h >> codec.downsample_stages; }
    int latent_w() const { return frame_w >> codec.downsample_stages; }
    int latent_channels(FrameKind kind) const {
        return kind == FrameKind::key ? codec.latent_channels_key : codec.latent_channels_interp;
    }
    /// Complex symbols emitted by the encoder before padding.
    int64_t raw_latent_len(FrameKind kind) const;
    /// Complex symbols handed to the channel after padding (M * N_s * N_c).
    int64_t latent_len(FrameKind kind) const { return ofdm.capacity(packets(kind)); }
    /// Channel uses of one transmitted frame.
    int64_t channel_len(FrameKind kind) const;
};

/// Taps and a unit-variance noise draw for one transmitted frame.
struct FrameChannel {
    ChannelTaps taps;          // (B, L)
    torch::Tensor unit_noise;  // (B, n), CN(0, 1)
};

using ChannelSampler =
    std::function<FrameChannel(int64_t batch, int64_t length, torch::ScalarType complex_dtype)>;

/// Independent multipath realization per call.
ChannelSampler fading_sampler(const PowerDelayProfile& pdp, torch::Generator gen);
/// h = [1] with Gaussian noise.
ChannelSampler awgn_sampler(torch::Generator gen);
/// h = [1] with a zero noise draw.
ChannelSampler ideal_sampler();

class AnalysisNetImpl : public torch::nn::Module {
public:
    AnalysisNetImpl(int64_t in_channels, int64_t latent_channels, int64_t width, int stages,
                    int64_t af_hidden);
    torch::Tensor forward(const torch::Tensor& x, const SnrContext& snr);

private:
    std::vector<torch::nn::Conv2d> convs_;
    std::vector<AfModule> gates_;
    torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(AnalysisNet);

class SynthesisNetImpl : public torch::nn::Module {
public:
    SynthesisNetImpl(int64_t latent_channels, int64_t width, int stages, int64_t af_hidden);
    /// (B, latent, h, w) -> (B, width, h * 2^stages, w * 2^stages)
    torch::Tensor forward(const torch::Tensor& latent, const SnrContext& snr);

private:
    torch::nn::Conv2d head_{nullptr};
    AfModule head_gate_{nullptr};
    std::vector<torch::nn::ConvTranspose2d> ups_;
    std::vector<AfModule> gates_;
};
TORCH_MODULE(SynthesisNet);

/// Learned per-symbol receiver front end used when the decoders get the raw
/// OFDM output: sees received data, pilot observations de-rotated by the known
/// pilots, and sigma^2, with no explicit estimation or equalization.
class PilotFrontEndImpl : public torch::nn::Module {
public:
    PilotFrontEndImpl(int64_t pilots_per_packet, int64_t width);
    torch::Tensor forward(const torch::Tensor& y_hat, const torch::Tensor& y_p_hat,
                          const torch::Tensor& y_p, const SnrContext& snr);

private:
    torch::nn::Conv1d in_{nullptr}, mid_{nullptr}, out_{nullptr};
};
TORCH_MODULE(PilotFrontEnd);

struct GopBatch {
    torch::Tensor frames;                    // (B, N, 3, H, W) in [0, 1]
    int gop_index = 1;
    std::optional<torch::Tensor> bootstrap;  // (B, 3, H, W) frame 0 of the sequence
};

struct InterpConditions {
    torch::Tensor volume_minus, volume_plus;  // (B, V+1, C, H, W)
    torch::Tensor ssf_minus, ssf_plus;        // (B, 3, H, W)
    torch::Tensor ctx_minus, ctx_plus;        // warped contexts (features or pixels)
};

struct InterpDecoded {
    torch::Tensor d_hat;      // (B, C_d, H, W); a pixel residual without context coding
    torch::Tensor ssf_minus;  // (B, 3, H, W)
    torch::Tensor ssf_plus;
};

struct FrameRecord {
    int display_index = 0;  // 1..N, 0 for the bootstrap frame
    FrameKind kind = FrameKind::key;
    int ref_minus = -1;
    int ref_plus = -1;
    Latent latent;             // channel input, power-normalized
    torch::Tensor z_tilde;     // (B, k) receiver latent
    torch::Tensor z_tilde_supervised;  // denoiser output on the detached channel output, set while training
    torch::Tensor decoded;     // (B, 3, H, W)
};

struct GopResult {
    torch::Tensor decoded;               // (B, N, 3, H, W) in display order
    std::vector<FrameRecord> records;    // transmission order, bootstrap first when present
    std::vector<int> decode_order;       // display indices of the GoP frames
    torch::Tensor key_decoded() const;   // decoded x_N, the next GoP's x_0
};

struct TransmitOptions {
    bool bypass_channel = false;  // z_tilde = z, no OFDM or channel
};

/// (lo, hi) reference pairs in coding order for a GoP of n frames; index 0 is
/// the previous key frame.
struct InterpStep {
    int index;
    int ref_minus;
    int ref_plus;
};
std::vector<InterpStep> interpolation_schedule(int gop_len);

class JsccSystemImpl : public torch::nn::Module {
public:
    explicit JsccSystemImpl(SystemConfig cfg);

    const SystemConfig& config() const { return cfg_; }

    Latent encode_key(const torch::Tensor& frame, const SnrContext& snr);
    torch::Tensor decode_key(const torch::Tensor& z_tilde, const SnrContext& snr);

    /// Warped contexts from decoded references (transmitter side).
    InterpConditions interp_conditions(const torch::Tensor& frame, const torch::Tensor& ref_minus,
                                       const torch::Tensor& ref_plus);
    /// Context mode: encodes concat(frame, ctx_minus, ctx_plus), 2 C_f + 3 channels.
    Latent encode_interp(const torch::Tensor& frame, const torch::Tensor& ctx_minus,
                         const torch::Tensor& ctx_plus, const SnrContext& snr);
    /// Either mode, from the conditions built by interp_conditions.
    Latent encode_interp(const torch::Tensor& frame, const InterpConditions& cond, const SnrContext& snr);
    InterpDecoded decode_interp(const torch::Tensor& z_tilde, const SnrContext& snr);
    /// Receiver side: rebuilds the reference volumes, warps them with the
    /// decoded flows and fuses.
    torch::Tensor reconstruct_interp(const torch::Tensor& d_hat, const torch::Tensor& ssf_minus,
                                     const torch::Tensor& ssf_plus, const torch::Tensor& ref_minus,
                                     const torch::Tensor& ref_plus);
    torch::Tensor reconstruct_interp(const InterpDecoded& decoded, const torch::Tensor& volume_minus,
                                     const torch::Tensor& volume_plus);

    /// Reference volume of one decoded frame: features (context mode) or pixels.
    torch::Tensor reference_volume(const torch::Tensor& reference);

    /// Sends a latent through OFDM (or raw symbols), the channel and the
    /// receiver front end. Returns the receiver latent (B, k). With a
    /// denoiser and grad mode on, `supervised` receives a second denoiser pass
    /// whose input is cut from the encoder graph.
    torch::Tensor transmit(const Latent& z, FrameKind kind, const FrameChannel& channel,
                           const SnrContext& snr, const TransmitOptions& opts = {},
                           torch::Tensor* supervised = nullptr);

    /// Complete GoP: bootstraps x_0 when `prev_key` is empty, then codes the
    /// key frame and the interpolation frames in schedule order, drawing one
    /// channel realization per frame from `sampler`.
    GopResult transmit_gop(const GopBatch& gop, const std::optional<torch::Tensor>& prev_key,
                           const ChannelSampler& sampler, const SnrContext& snr,
                           const TransmitOptions& opts = {});

    torch::Tensor pilots(FrameKind kind, torch::ScalarType complex_dtype) const;
    torch::ScalarType real_dtype() const;
    torch::ScalarType complex_dtype() const;

    /// Parameters grouped by top-level submodule.
    std::map<std::string, std::vector<torch::Tensor>> parameter_groups() const;
    int64_t parameter_count() const;

    AnalysisNet key_encoder{nullptr};
    SynthesisNet key_decoder{nullptr};
    torch::nn::Conv2d key_out{nullptr};
    AnalysisNet interp_encoder{nullptr};
    SynthesisNet interp_decoder{nullptr};
    torch::nn::Conv2d d_head{nullptr}, ssf_minus_head{nullptr}, ssf_plus_head{nullptr};
    SsfEstimator ssf_estimator{nullptr};
    FeatureExtractor feature_extractor{nullptr};
    ContextualDecoder contextual_decoder{nullptr};
    Denoiser denoiser{nullptr};
    PilotFrontEnd front_end{nullptr};

private:
    Latent to_latent(const torch::Tensor& encoded, FrameKind kind) const;
    torch::Tensor from_latent(const torch::Tensor& z_tilde, FrameKind kind) const;
    FrameRecord run_key(const torch::Tensor& frame, int display_index, const ChannelSampler& sampler,
                        const SnrContext& snr, const TransmitOptions& opts);

    SystemConfig cfg_;
    torch::Tensor pilots_key_;
    torch::Tensor pilots_interp_;
};
TORCH_MODULE(JsccSystem);

inline constexpr int64_t kCheckpointFormatVersion = 1;

struct CheckpointHeader {
    int64_t format_version = 0;
    std::string config_json;
};

/// Writes every parameter group plus the resolved configuration snapshot.
void save_checkpoint(const std::string& path, const JsccSystem& system, const std::string& config_json);
/// Fails when the file is missing or its format version differs.
CheckpointHeader read_checkpoint_header(const std::string& path);
void load_checkpoint_parameters(const std::string& path, JsccSystem& system);

}  // namespace rvjscc
