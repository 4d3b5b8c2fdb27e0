#include "rvjscc/video_codec.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace rvjscc {

namespace {

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

// He initialization for ReLU trunks.
torch::nn::Conv2d he_init(torch::nn::Conv2d conv) {
    torch::NoGradGuard no_grad;
    torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
    conv->bias.zero_();
    return conv;
}

// A stride-2, 4x4 transposed conv feeds each output from 2x2 taps per input channel.
torch::nn::ConvTranspose2d he_init(torch::nn::ConvTranspose2d conv) {
    torch::NoGradGuard no_grad;
    const auto fan_in = static_cast<double>(conv->weight.size(0) * 4);
    conv->weight.normal_(0.0, std::sqrt(2.0 / fan_in));
    conv->bias.zero_();
    return conv;
}

torch::nn::Conv2d zero_conv3x3(int64_t in, int64_t out) {
    auto conv = conv3x3(in, out);
    torch::NoGradGuard no_grad;
    conv->weight.zero_();
    conv->bias.zero_();
    return conv;
}

torch::ScalarType complex_of(torch::ScalarType real) {
    return real == torch::kFloat64 ? torch::kComplexDouble : torch::kComplexFloat;
}

void bisect(int lo, int hi, std::vector<InterpStep>& out) {
    if (hi - lo < 2) return;
    const int mid = (lo + hi) / 2;
    out.push_back({mid, lo, hi});
    bisect(lo, mid, out);
    bisect(mid, hi, out);
}

}  // namespace

Variant Variant::from_tag(const std::string& tag) {
    if (tag == "baseline_awgn") return {tag, false, false, false, false};
    if (tag == "baseline_fading") return {tag, false, true, false, false};
    if (tag == "ofdm") return {tag, true, true, false, false};
    if (tag == "ofdm_context") return {tag, true, true, true, false};
    if (tag == "proposed") return {tag, true, true, true, true};
    throw std::invalid_argument("unknown variant '" + tag + "'");
}

const std::vector<std::string>& Variant::tags() {
    static const std::vector<std::string> all{"baseline_awgn", "baseline_fading", "ofdm", "ofdm_context",
                                              "proposed"};
    return all;
}

void SystemConfig::validate() const {
    ofdm.validate();
    const int factor = 1 << codec.downsample_stages;
    if (codec.downsample_stages < 1) throw std::invalid_argument("codec: downsample_stages must be >= 1");
    if (frame_h < 1 || frame_w < 1 || frame_h % factor != 0 || frame_w % factor != 0 || frame_h % 4 != 0 ||
        frame_w % 4 != 0) {
        throw std::invalid_argument("frame size " + std::to_string(frame_h) + "x" + std::to_string(frame_w) +
                                    " must be divisible by the downsampling factor " + std::to_string(factor) +
                                    " and by 4");
    }
    if (gop_len < 1) throw std::invalid_argument("gop_len must be >= 1");
    if (codec.scale_space.levels < 1 || !(codec.scale_space.base_sigma > 0.0)) {
        throw std::invalid_argument("codec: scale space needs levels >= 1 and base_sigma > 0");
    }
    if (variant.denoiser && !variant.ofdm) {
        throw std::invalid_argument("variant: the denoiser needs OFDM pilots");
    }
    for (auto kind : {FrameKind::key, FrameKind::interp}) {
        const int64_t reals = static_cast<int64_t>(latent_channels(kind)) * latent_h() * latent_w();
        const char* name = kind == FrameKind::key ? "key" : "interp";
        if (reals < 2 || reals % 2 != 0) {
            throw std::invalid_argument(std::string("codec: ") + name +
                                        " latent must hold an even, non-zero number of reals");
        }
        if (reals / 2 > latent_len(kind)) {
            throw std::invalid_argument(std::string("codec: ") + name + " latent of " +
                                        std::to_string(reals / 2) + " complex symbols exceeds the " +
                                        std::to_string(latent_len(kind)) + "-symbol OFDM budget");
        }
    }
}

int64_t SystemConfig::raw_latent_len(FrameKind kind) const {
    return static_cast<int64_t>(latent_channels(kind)) * latent_h() * latent_w() / 2;
}

int64_t SystemConfig::channel_len(FrameKind kind) const {
    return variant.ofdm ? ofdm.tx_length(packets(kind)) : latent_len(kind);
}

ChannelSampler fading_sampler(const PowerDelayProfile& pdp, torch::Generator gen) {
    return [pdp, gen](int64_t batch, int64_t length, torch::ScalarType dtype) mutable {
        auto taps = sample_taps(pdp, gen, {batch}, dtype);
        return FrameChannel{taps, unit_complex_noise({batch, length}, gen, dtype)};
    };
}

ChannelSampler awgn_sampler(torch::Generator gen) {
    return [gen](int64_t batch, int64_t length, torch::ScalarType dtype) mutable {
        return FrameChannel{identity_taps({batch}, dtype), unit_complex_noise({batch, length}, gen, dtype)};
    };
}

ChannelSampler ideal_sampler() {
    return [](int64_t batch, int64_t length, torch::ScalarType dtype) {
        return FrameChannel{identity_taps({batch}, dtype),
                            torch::zeros({batch, length}, torch::TensorOptions().dtype(dtype))};
    };
}

AnalysisNetImpl::AnalysisNetImpl(int64_t in_channels, int64_t latent_channels, int64_t width, int stages,
                                 int64_t af_hidden) {
    for (int s = 0; s < stages; ++s) {
        convs_.push_back(register_module("conv" + std::to_string(s), he_init(conv3x3(s == 0 ? in_channels : width, width, 2))));
        gates_.push_back(register_module("af" + std::to_string(s), AfModule(width, af_hidden)));
    }
    out_ = register_module("out", conv3x3(width, latent_channels));
}

torch::Tensor AnalysisNetImpl::forward(const torch::Tensor& x, const SnrContext& snr) {
    auto y = x;
    for (size_t s = 0; s < convs_.size(); ++s) {
        y = gates_[s](torch::relu(convs_[s](y)), snr);
    }
    return out_(y);
}

SynthesisNetImpl::SynthesisNetImpl(int64_t latent_channels, int64_t width, int stages, int64_t af_hidden) {
    head_ = register_module("head", he_init(conv3x3(latent_channels, width)));
    head_gate_ = register_module("head_af", AfModule(width, af_hidden));
    for (int s = 0; s < stages; ++s) {
        ups_.push_back(register_module(
            "up" + std::to_string(s),
            he_init(torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(width, width, 4).stride(2).padding(1)))));
        gates_.push_back(register_module("af" + std::to_string(s), AfModule(width, af_hidden)));
    }
}

torch::Tensor SynthesisNetImpl::forward(const torch::Tensor& latent, const SnrContext& snr) {
    auto y = head_gate_(torch::relu(head_(latent)), snr);
    for (size_t s = 0; s < ups_.size(); ++s) {
        y = gates_[s](torch::relu(ups_[s](y)), snr);
    }
    return y;
}

PilotFrontEndImpl::PilotFrontEndImpl(int64_t pilots_per_packet, int64_t width) {
    auto conv = [](int64_t in_ch, int64_t out_ch) {
        return torch::nn::Conv1d(torch::nn::Conv1dOptions(in_ch, out_ch, 3).padding(1));
    };
    in_ = register_module("input", conv(3 + 2 * pilots_per_packet, width));
    mid_ = register_module("mid", conv(width, width));
    out_ = register_module("out", conv(width, 2));
    torch::NoGradGuard no_grad;
    out_->weight.zero_();
    out_->bias.zero_();
}

torch::Tensor PilotFrontEndImpl::forward(const torch::Tensor& y_hat, const torch::Tensor& y_p_hat,
                                         const torch::Tensor& y_p, const SnrContext& snr) {
    const int64_t batch = y_hat.size(0);
    const int64_t packets = y_hat.size(1);
    const int64_t symbols = y_hat.size(2);
    const int64_t n_c = y_hat.size(3);
    const int64_t n_p = y_p_hat.size(2);

    // (B, M, S, C, N_c) with C = data (2) + de-rotated pilots (2 N_p) + sigma^2 (1).
    auto data = torch::view_as_real(y_hat.contiguous()).permute({0, 1, 2, 4, 3});
    auto observed = (y_p_hat * y_p.to(y_p_hat.scalar_type()).conj()).contiguous();
    auto pilots = torch::view_as_real(observed)
                      .permute({0, 1, 2, 4, 3})
                      .reshape({batch, packets, 1, 2 * n_p, n_c})
                      .expand({batch, packets, symbols, 2 * n_p, n_c});
    auto sigma2 = snr.sigma2.to(data.scalar_type())
                      .view({batch, 1, 1, 1, 1})
                      .expand({batch, packets, symbols, 1, n_c});
    auto features = torch::cat({data, pilots, sigma2}, 3).reshape({batch * packets * symbols, -1, n_c});
    auto r = out_(torch::relu(mid_(torch::relu(in_(features)))));
    auto residual = torch::view_as_complex(
        r.reshape({batch, packets, symbols, 2, n_c}).transpose(-1, -2).contiguous());
    return (y_hat + residual).flatten(1);
}

std::vector<InterpStep> interpolation_schedule(int gop_len) {
    std::vector<InterpStep> steps;
    bisect(0, gop_len, steps);
    return steps;
}

torch::Tensor GopResult::key_decoded() const {
    return decoded.select(1, decoded.size(1) - 1);
}

JsccSystemImpl::JsccSystemImpl(SystemConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto& c = cfg_.codec;
    const int stages = c.downsample_stages;
    key_encoder = register_module("key_encoder", AnalysisNet(3, c.latent_channels_key, c.width, stages, c.af_hidden));
    key_decoder = register_module("key_decoder", SynthesisNet(c.latent_channels_key, c.width, stages, c.af_hidden));
    key_out = register_module("key_out", conv3x3(c.width, 3));

    const int64_t interp_in = cfg_.variant.context ? 2 * c.feature_channels + 3 : 9;
    const int64_t d_channels = cfg_.variant.context ? c.decoded_channels : 3;
    interp_encoder = register_module("interp_encoder",
                                     AnalysisNet(interp_in, c.latent_channels_interp, c.width, stages, c.af_hidden));
    interp_decoder = register_module("interp_decoder",
                                     SynthesisNet(c.latent_channels_interp, c.width, stages, c.af_hidden));
    d_head = register_module("d_head", conv3x3(c.width, d_channels));
    ssf_minus_head = register_module("ssf_minus_head", zero_conv3x3(c.width, 3));
    ssf_plus_head = register_module("ssf_plus_head", zero_conv3x3(c.width, 3));
    ssf_estimator = register_module("ssf_estimator", SsfEstimator(c.ssf_width));
    if (cfg_.variant.context) {
        feature_extractor = register_module("feature_extractor", FeatureExtractor(c.feature_channels));
        contextual_decoder = register_module("contextual_decoder",
                                             ContextualDecoder(c.decoded_channels, c.feature_channels, c.context_width));
    }
    if (cfg_.variant.ofdm) {
        if (cfg_.variant.denoiser) {
            denoiser = register_module("denoiser", Denoiser(c.denoiser_width));
        } else {
            front_end = register_module("front_end", PilotFrontEnd(cfg_.ofdm.n_p, c.denoiser_width));
        }
    }
    pilots_key_ = make_pilots(cfg_.ofdm, cfg_.ofdm.m_key);
    pilots_interp_ = make_pilots(cfg_.ofdm, cfg_.ofdm.m_interp);
}

torch::ScalarType JsccSystemImpl::real_dtype() const {
    return key_out->weight.scalar_type();
}

torch::ScalarType JsccSystemImpl::complex_dtype() const {
    return complex_of(real_dtype());
}

torch::Tensor JsccSystemImpl::pilots(FrameKind kind, torch::ScalarType complex_dtype) const {
    return (kind == FrameKind::key ? pilots_key_ : pilots_interp_).to(complex_dtype);
}

Latent JsccSystemImpl::to_latent(const torch::Tensor& encoded, FrameKind kind) const {
    const int64_t batch = encoded.size(0);
    auto pairs = encoded.reshape({batch, -1, 2}).contiguous();
    auto packed = pack_latent(torch::view_as_complex(pairs), cfg_.ofdm, cfg_.packets(kind));
    packed.symbols = normalize_power(packed.symbols, cfg_.ofdm.power, 1);
    return packed;
}

torch::Tensor JsccSystemImpl::from_latent(const torch::Tensor& z_tilde, FrameKind kind) const {
    if (z_tilde.dim() != 2 || z_tilde.size(1) != cfg_.latent_len(kind)) {
        throw std::invalid_argument("decoder input must be (B, " + std::to_string(cfg_.latent_len(kind)) +
                                    ") complex symbols");
    }
    auto raw = z_tilde.narrow(1, 0, cfg_.raw_latent_len(kind)).contiguous();
    return torch::view_as_real(raw).reshape(
        {z_tilde.size(0), cfg_.latent_channels(kind), cfg_.latent_h(), cfg_.latent_w()});
}

Latent JsccSystemImpl::encode_key(const torch::Tensor& frame, const SnrContext& snr) {
    return to_latent(key_encoder(frame - 0.5, snr), FrameKind::key);  // zero-mean input
}

torch::Tensor JsccSystemImpl::decode_key(const torch::Tensor& z_tilde, const SnrContext& snr) {
    return torch::sigmoid(key_out(key_decoder(from_latent(z_tilde, FrameKind::key), snr)));
}

torch::Tensor JsccSystemImpl::reference_volume(const torch::Tensor& reference) {
    auto base = cfg_.variant.context ? feature_extractor(reference) : reference;
    return build_scale_space_volume(base, cfg_.codec.scale_space);
}

InterpConditions JsccSystemImpl::interp_conditions(const torch::Tensor& frame, const torch::Tensor& ref_minus,
                                                   const torch::Tensor& ref_plus) {
    InterpConditions c;
    c.volume_minus = reference_volume(ref_minus);
    c.volume_plus = reference_volume(ref_plus);
    c.ssf_minus = ssf_estimator(frame, ref_minus);
    c.ssf_plus = ssf_estimator(frame, ref_plus);
    c.ctx_minus = fsw(c.volume_minus, c.ssf_minus);
    c.ctx_plus = fsw(c.volume_plus, c.ssf_plus);
    return c;
}

Latent JsccSystemImpl::encode_interp(const torch::Tensor& frame, const torch::Tensor& ctx_minus,
                                     const torch::Tensor& ctx_plus, const SnrContext& snr) {
    if (!cfg_.variant.context) {
        throw std::logic_error("encode_interp: context inputs are only used with conditional coding");
    }
    return to_latent(interp_encoder(torch::cat({frame, ctx_minus, ctx_plus}, 1), snr), FrameKind::interp);
}

Latent JsccSystemImpl::encode_interp(const torch::Tensor& frame, const InterpConditions& cond,
                                     const SnrContext& snr) {
    if (cfg_.variant.context) return encode_interp(frame, cond.ctx_minus, cond.ctx_plus, snr);
    auto prediction = 0.5 * (cond.ctx_minus + cond.ctx_plus);
    auto input = torch::cat({frame - prediction, cond.ssf_minus, cond.ssf_plus}, 1);
    return to_latent(interp_encoder(input, snr), FrameKind::interp);
}

InterpDecoded JsccSystemImpl::decode_interp(const torch::Tensor& z_tilde, const SnrContext& snr) {
    auto trunk = interp_decoder(from_latent(z_tilde, FrameKind::interp), snr);
    return InterpDecoded{d_head(trunk), ssf_minus_head(trunk), ssf_plus_head(trunk)};
}

torch::Tensor JsccSystemImpl::reconstruct_interp(const InterpDecoded& decoded, const torch::Tensor& volume_minus,
                                                 const torch::Tensor& volume_plus) {
    auto ctx_minus = fsw(volume_minus, decoded.ssf_minus);
    auto ctx_plus = fsw(volume_plus, decoded.ssf_plus);
    if (cfg_.variant.context) return contextual_decoder(decoded.d_hat, ctx_minus, ctx_plus);
    return torch::clamp(0.5 * (ctx_minus + ctx_plus) + decoded.d_hat, 0.0, 1.0);
}

torch::Tensor JsccSystemImpl::reconstruct_interp(const torch::Tensor& d_hat, const torch::Tensor& ssf_minus,
                                                 const torch::Tensor& ssf_plus, const torch::Tensor& ref_minus,
                                                 const torch::Tensor& ref_plus) {
    return reconstruct_interp(InterpDecoded{d_hat, ssf_minus, ssf_plus}, reference_volume(ref_minus),
                              reference_volume(ref_plus));
}

torch::Tensor JsccSystemImpl::transmit(const Latent& z, FrameKind kind, const FrameChannel& channel,
                                       const SnrContext& snr, const TransmitOptions& opts,
                                       torch::Tensor* supervised) {
    if (opts.bypass_channel) return z.symbols;
    const int64_t batch = z.symbols.size(0);
    const auto ctype = z.symbols.scalar_type();
    auto sigma2 = snr.sigma2.to(torch::kFloat64).view({batch, 1}).to(torch::real(z.symbols).scalar_type());
    if (!cfg_.variant.ofdm) return apply_channel(z.symbols, channel.taps, sigma2, channel.unit_noise);

    const int packets = cfg_.packets(kind);
    auto y_p = pilots(kind, ctype);
    auto y = ofdm_tx(OfdmGrid{y_p, latent_to_grid(z, cfg_.ofdm, packets)}, cfg_.ofdm);
    auto rx = ofdm_rx(apply_channel(y, channel.taps, sigma2, channel.unit_noise), cfg_.ofdm, packets);
    if (cfg_.variant.denoiser) {
        if (supervised != nullptr && torch::GradMode::is_enabled()) {
            *supervised = denoiser(rx.data.detach(), rx.pilots.detach(), y_p, snr);
        }
        return denoiser(rx.data, rx.pilots, y_p, snr);
    }
    return front_end(rx.data, rx.pilots, y_p, snr);
}

FrameRecord JsccSystemImpl::run_key(const torch::Tensor& frame, int display_index, const ChannelSampler& sampler,
                                    const SnrContext& snr, const TransmitOptions& opts) {
    FrameRecord rec;
    rec.display_index = display_index;
    rec.kind = FrameKind::key;
    rec.latent = encode_key(frame, snr);
    FrameChannel channel;
    if (!opts.bypass_channel) channel = sampler(frame.size(0), cfg_.channel_len(FrameKind::key), complex_dtype());
    rec.z_tilde = transmit(rec.latent, FrameKind::key, channel, snr, opts, &rec.z_tilde_supervised);
    rec.decoded = decode_key(rec.z_tilde, snr);
    return rec;
}

GopResult JsccSystemImpl::transmit_gop(const GopBatch& gop, const std::optional<torch::Tensor>& prev_key,
                                       const ChannelSampler& sampler, const SnrContext& snr,
                                       const TransmitOptions& opts) {
    const auto& frames = gop.frames;
    const int n = cfg_.gop_len;
    if (frames.dim() != 5 || frames.size(1) != n || frames.size(3) != cfg_.frame_h || frames.size(4) != cfg_.frame_w) {
        throw std::invalid_argument("transmit_gop: frames must be (B, " + std::to_string(n) + ", 3, " +
                                    std::to_string(cfg_.frame_h) + ", " + std::to_string(cfg_.frame_w) + ")");
    }
    GopResult result;
    std::vector<torch::Tensor> decoded(static_cast<size_t>(n + 1));
    if (prev_key.has_value()) {
        decoded[0] = *prev_key;
    } else if (gop.bootstrap.has_value()) {
        auto rec = run_key(*gop.bootstrap, 0, sampler, snr, opts);
        decoded[0] = rec.decoded;
        result.records.push_back(std::move(rec));
    } else {
        throw std::invalid_argument("transmit_gop: GoP " + std::to_string(gop.gop_index) +
                                    " has neither a previous key frame nor a bootstrap frame");
    }

    auto key = run_key(frames.select(1, n - 1), n, sampler, snr, opts);
    decoded[static_cast<size_t>(n)] = key.decoded;
    result.decode_order.push_back(n);
    result.records.push_back(std::move(key));

    for (const auto& step : interpolation_schedule(n)) {
        const auto& ref_minus = decoded[static_cast<size_t>(step.ref_minus)];
        const auto& ref_plus = decoded[static_cast<size_t>(step.ref_plus)];
        if (!ref_minus.defined() || !ref_plus.defined()) {
            throw std::logic_error("transmit_gop: reference decoded after frame " + std::to_string(step.index));
        }
        auto frame = frames.select(1, step.index - 1);
        FrameRecord rec;
        rec.display_index = step.index;
        rec.kind = FrameKind::interp;
        rec.ref_minus = step.ref_minus;
        rec.ref_plus = step.ref_plus;
        auto cond = interp_conditions(frame, ref_minus, ref_plus);
        rec.latent = encode_interp(frame, cond, snr);
        FrameChannel channel;
        if (!opts.bypass_channel) {
            channel = sampler(frame.size(0), cfg_.channel_len(FrameKind::interp), complex_dtype());
        }
        rec.z_tilde = transmit(rec.latent, FrameKind::interp, channel, snr, opts, &rec.z_tilde_supervised);
        // The receiver rebuilds these volumes from the same decoded references.
        rec.decoded = reconstruct_interp(decode_interp(rec.z_tilde, snr), cond.volume_minus, cond.volume_plus);
        decoded[static_cast<size_t>(step.index)] = rec.decoded;
        result.decode_order.push_back(step.index);
        result.records.push_back(std::move(rec));
    }

    result.decoded = torch::stack(std::vector<torch::Tensor>(decoded.begin() + 1, decoded.end()), 1);
    return result;
}

std::map<std::string, std::vector<torch::Tensor>> JsccSystemImpl::parameter_groups() const {
    std::map<std::string, std::vector<torch::Tensor>> groups;
    for (const auto& item : named_parameters(true)) {
        const auto& name = item.key();
        groups[name.substr(0, name.find('.'))].push_back(item.value());
    }
    return groups;
}

int64_t JsccSystemImpl::parameter_count() const {
    int64_t total = 0;
    for (const auto& p : parameters()) total += p.numel();
    return total;
}

void save_checkpoint(const std::string& path, const JsccSystem& system, const std::string& config_json) {
    torch::serialize::OutputArchive archive;
    system->save(archive);
    archive.write("rvjscc_format_version", torch::IValue(kCheckpointFormatVersion));
    archive.write("rvjscc_config", torch::IValue(config_json));
    archive.save_to(path);
}

namespace {

torch::serialize::InputArchive open_checkpoint(const std::string& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
    torch::serialize::InputArchive archive;
    archive.load_from(path);
    return archive;
}

}  // namespace

CheckpointHeader read_checkpoint_header(const std::string& path) {
    auto archive = open_checkpoint(path);
    torch::IValue value;
    if (!archive.try_read("rvjscc_format_version", value)) {
        throw std::runtime_error("checkpoint " + path + " carries no format version");
    }
    CheckpointHeader header;
    header.format_version = value.toInt();
    if (header.format_version != kCheckpointFormatVersion) {
        throw std::runtime_error("checkpoint " + path + " has format version " +
                                 std::to_string(header.format_version) + ", expected " +
                                 std::to_string(kCheckpointFormatVersion));
    }
    if (!archive.try_read("rvjscc_config", value)) {
        throw std::runtime_error("checkpoint " + path + " carries no configuration snapshot");
    }
    header.config_json = value.toStringRef();
    return header;
}

void load_checkpoint_parameters(const std::string& path, JsccSystem& system) {
    auto archive = open_checkpoint(path);
    system->load(archive);
}

}  // namespace rvjscc
