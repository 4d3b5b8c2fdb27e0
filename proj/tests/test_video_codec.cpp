#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <set>

#include "rvjscc/config.hpp"
#include "rvjscc/dataset.hpp"
#include "rvjscc/trainer.hpp"
#include "rvjscc/video_codec.hpp"

using namespace rvjscc;
namespace fs = std::filesystem;

namespace {

SystemConfig tiny(const std::string& tag = "proposed", int frame = 16) {
    SystemConfig s;
    s.ofdm.m_key = 3;
    s.ofdm.m_interp = 1;
    s.ofdm.n_p = 2;
    s.ofdm.n_s = 4;
    s.ofdm.n_c = 16;
    s.ofdm.l_cp = 4;
    s.frame_h = frame;
    s.frame_w = frame;
    s.codec.downsample_stages = 2;
    // latent (frame/4)^2 cells; fill key capacity 192 and interp capacity 64 at 16x16
    s.codec.latent_channels_key = 24;
    s.codec.latent_channels_interp = 8;
    s.codec.feature_channels = 4;
    s.codec.decoded_channels = 4;
    s.codec.width = 8;
    s.codec.ssf_width = 8;
    s.codec.context_width = 8;
    s.codec.denoiser_width = 8;
    s.codec.af_hidden = 4;
    s.variant = Variant::from_tag(tag);
    return s;
}

JsccSystem make(const SystemConfig& s, uint64_t seed = 1) {
    torch::manual_seed(seed);
    JsccSystem sys(s);
    sys->to(torch::kFloat64);
    sys->eval();
    return sys;
}

torch::Tensor frames(uint64_t seed, int64_t batch, int64_t n, int size) {
    auto gen = make_generator(seed);
    return torch::rand({batch, n, 3, size, size}, gen, torch::kFloat64);
}

double avg_power(const torch::Tensor& z) {
    return torch::real(z * z.conj()).mean().item<double>();
}

// Perturbs every parameter so no warp sits exactly on the sampling grid.
void jitter(JsccSystem& sys, uint64_t seed, double scale) {
    auto gen = make_generator(seed);
    torch::NoGradGuard ng;
    for (auto& p : sys->parameters()) p.add_(scale * torch::randn(p.sizes(), gen, p.options()));
}

}  // namespace

TEST_CASE("variant tags") {
    CHECK(Variant::tags().size() == 5);
    auto b = Variant::from_tag("baseline_awgn");
    CHECK_FALSE(b.ofdm);
    CHECK_FALSE(b.fading);
    CHECK_FALSE(b.context);
    CHECK_FALSE(b.denoiser);
    auto p = Variant::from_tag("proposed");
    CHECK(p.ofdm);
    CHECK(p.fading);
    CHECK(p.context);
    CHECK(p.denoiser);
    auto oc = Variant::from_tag("ofdm_context");
    CHECK(oc.context);
    CHECK_FALSE(oc.denoiser);
    CHECK_THROWS_AS(Variant::from_tag("bogus"), std::invalid_argument);
}

TEST_CASE("latent arithmetic and capacity errors") {
    // paper preset: 256x256, factor 16, key latent fills 6 packets, interp fills 2
    SystemConfig paper;
    CHECK(paper.latent_h() == 16);
    CHECK(paper.raw_latent_len(FrameKind::key) == 16 * 16 * 144 / 2);
    CHECK(paper.latent_len(FrameKind::key) == 6 * 12 * 256);
    CHECK(paper.latent_len(FrameKind::interp) == 2 * 12 * 256);
    CHECK(paper.latent_len(FrameKind::interp) == 6144);
    CHECK(paper.raw_latent_len(FrameKind::interp) <= paper.latent_len(FrameKind::interp));
    CHECK(paper.channel_len(FrameKind::key) == 6 * 14 * 272);
    CHECK_NOTHROW(paper.validate());

    auto desk = preset_config("desk").system();
    desk.frame_h = desk.frame_w = 64;
    const int c_key = desk.codec.latent_channels_key;
    CHECK(desk.raw_latent_len(FrameKind::key) == (64 / 4) * (64 / 4) * c_key / 2);
    CHECK(desk.raw_latent_len(FrameKind::key) > desk.latent_len(FrameKind::key));
    CHECK_THROWS_AS(JsccSystem{desk}, std::invalid_argument);

    auto over = tiny();
    over.codec.latent_channels_interp = 10;
    CHECK_THROWS_AS(JsccSystem{over}, std::invalid_argument);
    auto odd = tiny();
    odd.frame_h = odd.frame_w = 18;
    CHECK_THROWS_AS(JsccSystem{odd}, std::invalid_argument);
    auto bad = tiny("baseline_fading");
    bad.variant.denoiser = true;
    CHECK_THROWS_AS(JsccSystem{bad}, std::invalid_argument);
}

TEST_CASE("key codec: power, determinism, range") {
    auto sys = make(tiny());
    auto x = frames(1, 3, 1, 16).select(1, 0);
    auto snr = SnrContext::uniform(10.0, 3, 1.0);
    auto z = sys->encode_key(x, snr);
    CHECK(z.symbols.sizes() == torch::IntArrayRef({3, 192}));
    CHECK(z.valid_len == 192);
    for (int64_t b = 0; b < 3; ++b) CHECK(std::abs(avg_power(z.symbols[b]) - 1.0) < 1e-6);
    CHECK(torch::equal(z.symbols, sys->encode_key(x, snr).symbols));

    auto x_hat = sys->decode_key(z.symbols, snr);
    CHECK(x_hat.sizes() == torch::IntArrayRef({3, 3, 16, 16}));
    CHECK(x_hat.min().item<double>() >= 0.0);
    CHECK(x_hat.max().item<double>() <= 1.0);
    CHECK_THROWS_AS(sys->decode_key(z.symbols.narrow(1, 0, 191), snr), std::invalid_argument);
}

TEST_CASE("padding when the latent does not fill the packets") {
    auto s = tiny();
    s.codec.latent_channels_key = 20;
    auto sys = make(s);
    auto x = frames(2, 2, 1, 16).select(1, 0);
    auto snr = SnrContext::uniform(5.0, 2, 1.0);
    auto z = sys->encode_key(x, snr);
    CHECK(z.valid_len == 160);
    CHECK(z.length() == 192);
    CHECK(z.symbols.narrow(1, 160, 32).abs().max().item<double>() == 0.0);
    CHECK(std::abs(avg_power(z.symbols[0]) - 1.0) < 1e-6);
}

TEST_CASE("interp codec shapes and input width") {
    auto s = tiny();
    auto sys = make(s);
    auto enc_w = sys->interp_encoder->named_parameters(true)["conv0.weight"];
    CHECK(enc_w.size(1) == 2 * s.codec.feature_channels + 3);

    auto f = frames(3, 2, 3, 16);
    auto snr = SnrContext::uniform(7.0, 2, 1.0);
    auto cond = sys->interp_conditions(f.select(1, 1), f.select(1, 0), f.select(1, 2));
    CHECK(cond.ctx_minus.sizes() == torch::IntArrayRef({2, 4, 16, 16}));
    auto z = sys->encode_interp(f.select(1, 1), cond.ctx_minus, cond.ctx_plus, snr);
    CHECK(z.symbols.sizes() == torch::IntArrayRef({2, 64}));
    CHECK(std::abs(avg_power(z.symbols[1]) - 1.0) < 1e-6);

    auto dec = sys->decode_interp(z.symbols, snr);
    CHECK(dec.d_hat.sizes() == torch::IntArrayRef({2, 4, 16, 16}));
    CHECK(dec.ssf_minus.sizes() == torch::IntArrayRef({2, 3, 16, 16}));
    CHECK(dec.ssf_plus.sizes() == torch::IntArrayRef({2, 3, 16, 16}));
    auto again = sys->decode_interp(z.symbols, snr);
    CHECK(torch::equal(dec.d_hat, again.d_hat));
    CHECK(torch::equal(dec.ssf_plus, again.ssf_plus));
    CHECK_THROWS_AS(sys->decode_interp(z.symbols.narrow(1, 0, 63), snr), std::invalid_argument);

    auto pixel = make(tiny("ofdm"));
    CHECK(pixel->interp_encoder->named_parameters(true)["conv0.weight"].size(1) == 9);
    CHECK_THROWS_AS(pixel->encode_interp(f.select(1, 1), cond.ctx_minus, cond.ctx_plus, snr), std::logic_error);
}

TEST_CASE("reconstruct_interp: receiver volumes match the transmitter") {
    auto sys = make(tiny());
    jitter(sys, 4, 0.05);
    auto f = frames(4, 2, 3, 16);
    auto ref_m = f.select(1, 0);
    auto ref_p = f.select(1, 2);
    auto snr = SnrContext::uniform(12.0, 2, 1.0);
    auto cond = sys->interp_conditions(f.select(1, 1), ref_m, ref_p);
    CHECK(torch::equal(cond.volume_minus, sys->reference_volume(ref_m)));
    CHECK(torch::equal(cond.volume_plus, sys->reference_volume(ref_p)));

    auto dec = sys->decode_interp(sys->encode_interp(f.select(1, 1), cond, snr).symbols, snr);
    auto tx_side = sys->reconstruct_interp(dec, cond.volume_minus, cond.volume_plus);
    auto rx_side = sys->reconstruct_interp(dec.d_hat, dec.ssf_minus, dec.ssf_plus, ref_m, ref_p);
    CHECK(torch::equal(tx_side, rx_side));
    CHECK(tx_side.sizes() == torch::IntArrayRef({2, 3, 16, 16}));
    CHECK(tx_side.min().item<double>() >= 0.0);
    CHECK(tx_side.max().item<double>() <= 1.0);

    // zero residual and zero flow: a function of the references only
    auto zero_d = torch::zeros_like(dec.d_hat);
    auto zero_f = torch::zeros_like(dec.ssf_minus);
    auto a = sys->reconstruct_interp(zero_d, zero_f, zero_f, ref_m, ref_p);
    auto b = sys->reconstruct_interp(zero_d, zero_f, zero_f, ref_m.clone(), ref_p.clone());
    CHECK(torch::equal(a, b));
    auto c = sys->reconstruct_interp(zero_d, zero_f, zero_f, ref_p, ref_m);
    CHECK_FALSE(torch::equal(a, c));
}

TEST_CASE("interpolation schedule") {
    std::vector<int> order;
    for (const auto& s : interpolation_schedule(4)) order.push_back(s.index);
    CHECK(order == std::vector<int>{2, 1, 3});
    auto steps = interpolation_schedule(4);
    CHECK(steps[0].ref_minus == 0);
    CHECK(steps[0].ref_plus == 4);
    CHECK(steps[1].ref_minus == 0);
    CHECK(steps[1].ref_plus == 2);
    CHECK(steps[2].ref_minus == 2);
    CHECK(steps[2].ref_plus == 4);
    for (int n : {1, 2, 3, 5, 8}) {
        std::set<int> decoded{0, n};
        for (const auto& s : interpolation_schedule(n)) {
            CHECK(decoded.count(s.ref_minus) == 1);
            CHECK(decoded.count(s.ref_plus) == 1);
            CHECK(s.ref_minus < s.index);
            CHECK(s.index < s.ref_plus);
            decoded.insert(s.index);
        }
        CHECK(decoded.size() == static_cast<size_t>(n + 1));
    }
}

TEST_CASE("transmit_gop order, packets, bootstrap") {
    auto s = tiny();
    s.ofdm.m_key = 6;
    s.ofdm.m_interp = 2;
    auto sys = make(s);
    auto f = frames(5, 1, 4, 16);
    auto boot = frames(6, 1, 1, 16).select(1, 0);
    auto snr = SnrContext::uniform(10.0, 1, 1.0);
    int64_t samples = 0;
    std::vector<int64_t> lengths;
    auto inner = fading_sampler(make_pdp(4, 4.0), make_generator(7));
    ChannelSampler counting = [&](int64_t b, int64_t len, torch::ScalarType t) {
        samples += len;
        lengths.push_back(len);
        return inner(b, len, t);
    };
    torch::NoGradGuard ng;
    auto out = sys->transmit_gop(GopBatch{f, 1, boot}, std::nullopt, counting, snr);
    CHECK(out.decode_order == std::vector<int>{4, 2, 1, 3});
    REQUIRE(out.records.size() == 5);
    CHECK(out.records[0].display_index == 0);
    CHECK(out.decoded.sizes() == torch::IntArrayRef({1, 4, 3, 16, 16}));
    CHECK(torch::equal(out.key_decoded(), out.records[1].decoded));
    CHECK(out.records[2].ref_minus == 0);
    CHECK(out.records[2].ref_plus == 4);

    // one GoP after the bootstrap: 6 + 2 + 2 + 2 packets, one channel draw per frame
    lengths.clear();
    samples = 0;
    auto second = sys->transmit_gop(GopBatch{f, 2, std::nullopt}, out.key_decoded(), counting, snr);
    CHECK(lengths.size() == 4);
    const int64_t per_packet = (s.ofdm.n_s + s.ofdm.n_p) * (s.ofdm.n_c + s.ofdm.l_cp);
    CHECK(samples == 12 * per_packet);
    int packets = 0;
    for (const auto& r : second.records) packets += s.packets(r.kind);
    CHECK(packets == 12);
    for (const auto& r : second.records) {
        CHECK(std::abs(avg_power(r.latent.symbols) - 1.0) < 1e-6);
    }

    CHECK_THROWS_AS(sys->transmit_gop(GopBatch{f, 1, std::nullopt}, std::nullopt, counting, snr),
                    std::invalid_argument);
    CHECK_THROWS_AS(sys->transmit_gop(GopBatch{f.narrow(1, 0, 3), 1, boot}, std::nullopt, counting, snr),
                    std::invalid_argument);
}

TEST_CASE("identity channel with zero noise is transparent") {
    for (const auto& tag : Variant::tags()) {
        auto sys = make(tiny(tag), 8);
        auto f = frames(9, 2, 4, 16);
        auto boot = frames(10, 2, 1, 16).select(1, 0);
        auto snr = SnrContext::uniform(20.0, 2, 1.0);
        torch::NoGradGuard ng;
        auto through = sys->transmit_gop(GopBatch{f, 1, boot}, std::nullopt, ideal_sampler(), snr);
        auto bypass = sys->transmit_gop(GopBatch{f, 1, boot}, std::nullopt, ideal_sampler(), snr,
                                        TransmitOptions{true});
        CHECK_MESSAGE((through.decoded - bypass.decoded).abs().max().item<double>() < 1e-5, tag);
    }
}

TEST_CASE("every parameter group receives gradient through the channel") {
    for (const std::string tag : {"proposed", "ofdm", "baseline_awgn"}) {
        auto sys = make(tiny(tag), 11);
        sys->train();
        auto f = frames(12, 2, 4, 16);
        auto boot = frames(13, 2, 1, 16).select(1, 0);
        auto snr = SnrContext::uniform(10.0, 2, 1.0);
        auto x_in = f.clone().requires_grad_(true);
        auto out = sys->transmit_gop(GopBatch{x_in, 1, boot}, std::nullopt,
                                     fading_sampler(make_pdp(4, 4.0), make_generator(14)), snr);
        auto loss = (out.decoded - f).pow(2).mean();
        loss.backward();
        for (const auto& [group, params] : sys->parameter_groups()) {
            double g = 0.0;
            for (const auto& p : params) {
                if (p.grad().defined()) g += p.grad().abs().sum().item<double>();
            }
            CHECK_MESSAGE(g > 0.0, tag, " group ", group);
        }
        CHECK(x_in.grad().abs().sum().item<double>() > 0.0);
        // the key frame is encoder input for the decoded key frame itself
        CHECK(x_in.grad().select(1, 3).abs().sum().item<double>() > 0.0);
    }
}

TEST_CASE("latent supervision reaches the denoiser only") {
    auto sys = make(tiny("proposed"), 21);
    auto f = frames(22, 2, 4, 16);
    auto boot = frames(23, 2, 1, 16).select(1, 0);
    auto snr = SnrContext::uniform(5.0, 2, 1.0);
    auto sampler = fading_sampler(make_pdp(4, 4.0), make_generator(24));
    auto out = sys->transmit_gop(GopBatch{f, 1, boot}, std::nullopt, sampler, snr);
    torch::Tensor loss = torch::zeros({}, torch::kFloat64);
    for (const auto& rec : out.records) {
        REQUIRE(rec.z_tilde_supervised.defined());
        // same forward value, different graph
        CHECK((rec.z_tilde_supervised - rec.z_tilde).abs().max().item<double>() < 1e-6);
        loss = loss + latent_mse(rec.latent.symbols.detach(), rec.z_tilde_supervised).to(torch::kFloat64);
    }
    loss.backward();
    for (const auto& [group, params] : sys->parameter_groups()) {
        double g = 0.0;
        for (const auto& p : params) {
            if (p.grad().defined()) g += p.grad().abs().sum().item<double>();
        }
        if (group == "denoiser") {
            CHECK(g > 0.0);
        } else {
            CHECK_MESSAGE(g == 0.0, "group ", group);
        }
    }

    torch::NoGradGuard ng;
    auto eval = sys->transmit_gop(GopBatch{f, 1, boot}, std::nullopt, sampler, snr);
    CHECK_FALSE(eval.records.front().z_tilde_supervised.defined());
    auto plain = make(tiny("ofdm_context"), 21);
    auto no_denoiser = plain->transmit_gop(GopBatch{f, 1, boot}, std::nullopt, sampler, snr);
    CHECK_FALSE(no_denoiser.records.front().z_tilde_supervised.defined());
}

TEST_CASE("tiny pipeline gradient matches finite differences") {
    auto s = tiny("proposed", 8);
    s.codec.latent_channels_key = 96;
    s.codec.latent_channels_interp = 32;
    auto sys = make(s, 15);
    jitter(sys, 16, 0.05);
    auto f = frames(17, 1, 4, 8);
    auto boot = frames(18, 1, 1, 8).select(1, 0);
    auto snr = SnrContext::uniform(8.0, 1, 1.0);
    auto pdp = make_pdp(4, 4.0);
    auto loss = [&]() {
        // same taps and noise on every call
        auto out = sys->transmit_gop(GopBatch{f, 1, boot}, std::nullopt, fading_sampler(pdp, make_generator(19)), snr);
        return (out.decoded - f).pow(2).mean();
    };

    auto gen = make_generator(20);
    for (const auto& [group, params] : sys->parameter_groups()) {
        std::vector<torch::Tensor> dirs;
        for (const auto& p : params) dirs.push_back(torch::randn(p.sizes(), gen, p.options()));
        sys->zero_grad();
        loss().backward();
        double analytic = 0.0;
        for (size_t i = 0; i < params.size(); ++i) analytic += (params[i].grad() * dirs[i]).sum().item<double>();

        // ReLU and warp-cell boundaries are dense across the pipeline; a smaller
        // step keeps the central difference on one linear piece
        const double eps = 1e-7;
        auto shift = [&](double t) {
            torch::NoGradGuard ng;
            for (size_t i = 0; i < params.size(); ++i) params[i].add_(t * dirs[i]);
        };
        double plus, minus;
        {
            torch::NoGradGuard ng;
            shift(eps);
            plus = loss().item<double>();
            shift(-2.0 * eps);
            minus = loss().item<double>();
            shift(eps);
        }
        const double numeric = (plus - minus) / (2.0 * eps);
        const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-12});
        CHECK_MESSAGE(rel < 1e-2, group, " analytic ", analytic, " numeric ", numeric);
        CHECK_MESSAGE(std::abs(analytic) > 0.0, group);
    }
}

TEST_CASE("checkpoint round trip and version check") {
    auto s = tiny();
    auto a = make(s, 21);
    const auto dir = fs::temp_directory_path() / "rvjscc_test_ckpt";
    fs::create_directories(dir);
    const auto path = (dir / "model.pt").string();
    save_checkpoint(path, a, "{\"variant\": \"proposed\"}");

    auto header = read_checkpoint_header(path);
    CHECK(header.format_version == kCheckpointFormatVersion);
    CHECK(header.config_json == "{\"variant\": \"proposed\"}");

    auto b = make(s, 22);
    load_checkpoint_parameters(path, b);
    auto pa = a->named_parameters(true);
    auto pb = b->named_parameters(true);
    REQUIRE(pa.size() == pb.size());
    for (const auto& item : pa) CHECK_MESSAGE(torch::equal(item.value(), pb[item.key()]), item.key());

    torch::serialize::OutputArchive stale;
    a->save(stale);
    stale.write("rvjscc_format_version", torch::IValue(kCheckpointFormatVersion + 1));
    stale.write("rvjscc_config", torch::IValue(std::string("{}")));
    const auto stale_path = (dir / "stale.pt").string();
    stale.save_to(stale_path);
    CHECK_THROWS_AS(read_checkpoint_header(stale_path), std::runtime_error);
    CHECK_THROWS_AS(read_checkpoint_header((dir / "missing.pt").string()), std::runtime_error);

    auto other = make(tiny("ofdm"), 23);
    CHECK_THROWS(load_checkpoint_parameters(path, other));
    fs::remove_all(dir);
}

TEST_CASE("key codec beats the mean frame after a short fit") {
    // 50 frames of toy video, noiseless channel
    auto clip = synth_video(31, 50, 16).frames.to(torch::kFloat64);
    auto mean_frame = clip.mean(0, true);
    const double mse_mean = (clip - mean_frame).pow(2).mean().item<double>();

    auto s = tiny("baseline_awgn");
    auto sys = make(s, 32);
    sys->train();
    torch::optim::Adam opt(sys->parameters(), torch::optim::AdamOptions(3e-3));
    auto gen = make_generator(33);
    for (int step = 0; step < 300; ++step) {
        auto idx = torch::randint(0, 50, {10}, gen, torch::kLong);
        auto x = clip.index_select(0, idx);
        auto snr = SnrContext::uniform(20.0, 10, 1.0);
        auto z = sys->encode_key(x, snr);
        auto loss = (sys->decode_key(z.symbols, snr) - x).pow(2).mean();
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
    sys->eval();
    torch::NoGradGuard ng;
    auto snr = SnrContext::uniform(20.0, 50, 1.0);
    const double mse = (sys->decode_key(sys->encode_key(clip, snr).symbols, snr) - clip).pow(2).mean().item<double>();
    const double psnr_codec = 10.0 * std::log10(1.0 / mse);
    const double psnr_mean = 10.0 * std::log10(1.0 / mse_mean);
    MESSAGE("codec ", psnr_codec, " dB vs mean frame ", psnr_mean, " dB");
    CHECK(psnr_codec > psnr_mean);
}
