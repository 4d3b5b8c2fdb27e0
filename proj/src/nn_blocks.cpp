#include "rvjscc/nn_blocks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rvjscc {

SnrContext SnrContext::from_db(const torch::Tensor& snr_db, double power) {
    auto db = snr_db.to(torch::kFloat64);
    return SnrContext{db, power * torch::pow(10.0, -db / 10.0)};
}

SnrContext SnrContext::uniform(double snr_db, int64_t batch, double power) {
    return from_db(torch::full({batch}, snr_db, torch::TensorOptions().dtype(torch::kFloat64)), power);
}

double ScaleSpaceConfig::level_sigma(int v) const {
    if (v <= 0) return 0.0;
    return std::ldexp(base_sigma, v - 1);
}

int ScaleSpaceConfig::level_radius(int v) const {
    if (v <= 0) return 0;
    if (kernel_radius > 0) return kernel_radius;
    return static_cast<int>(std::ceil(3.0 * level_sigma(v)));
}

std::vector<double> gaussian_kernel(double std_dev, int radius) {
    if (!(std_dev > 0.0) || radius < 0) {
        throw std::invalid_argument("gaussian_kernel: std must be positive and radius non-negative");
    }
    std::vector<double> w(static_cast<size_t>(2 * radius + 1));
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double v = std::exp(-0.5 * k * k / (std_dev * std_dev));
        w[static_cast<size_t>(k + radius)] = v;
        total += v;
    }
    for (auto& v : w) v /= total;
    return w;
}

int64_t reflect_index(int64_t i, int64_t n) {
    if (n == 1) return 0;
    const int64_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

torch::Tensor gaussian_blur_matrix(int64_t n, double std_dev, int radius, torch::ScalarType dtype) {
    const auto w = gaussian_kernel(std_dev, radius);
    auto m = torch::zeros({n, n}, torch::TensorOptions().dtype(torch::kFloat64));
    auto acc = m.accessor<double, 2>();
    for (int64_t i = 0; i < n; ++i) {
        for (int k = -radius; k <= radius; ++k) {
            acc[i][reflect_index(i + k, n)] += w[static_cast<size_t>(k + radius)];
        }
    }
    return m.to(dtype);
}

torch::Tensor gaussian_blur(const torch::Tensor& x, double std_dev, int radius) {
    const auto dtype = x.scalar_type();
    auto rows = gaussian_blur_matrix(x.size(-2), std_dev, radius, dtype);
    auto cols = gaussian_blur_matrix(x.size(-1), std_dev, radius, dtype);
    return torch::matmul(torch::matmul(rows, x), cols.t());
}

torch::Tensor build_scale_space_volume(const torch::Tensor& features, const ScaleSpaceConfig& cfg) {
    if (features.dim() != 4) throw std::invalid_argument("build_scale_space_volume: expected (B, C, H, W)");
    if (cfg.levels < 1) throw std::invalid_argument("build_scale_space_volume: levels must be >= 1");
    std::vector<torch::Tensor> slices{features};
    for (int v = 1; v <= cfg.levels; ++v) {
        slices.push_back(gaussian_blur(features, cfg.level_sigma(v), cfg.level_radius(v)));
    }
    return torch::stack(slices, 1);
}

torch::Tensor fsw(const torch::Tensor& volume, const torch::Tensor& ssf) {
    if (volume.dim() != 5 || ssf.dim() != 4 || ssf.size(1) != 3) {
        throw std::invalid_argument("fsw: expected volume (B, V+1, C, H, W) and flow (B, 3, H, W)");
    }
    const int64_t batch = volume.size(0);
    const int64_t levels = volume.size(1);
    const int64_t channels = volume.size(2);
    const int64_t h = volume.size(3);
    const int64_t w = volume.size(4);
    if (ssf.size(0) != batch || ssf.size(2) != h || ssf.size(3) != w) {
        throw std::invalid_argument("fsw: flow and volume dimensions differ");
    }
    const auto opts = ssf.options();
    auto xs = torch::arange(w, opts).view({1, 1, w});
    auto ys = torch::arange(h, opts).view({1, h, 1});
    auto sx = torch::clamp(xs + ssf.select(1, 0), 0.0, static_cast<double>(w - 1));
    auto sy = torch::clamp(ys + ssf.select(1, 1), 0.0, static_cast<double>(h - 1));
    auto sz = torch::clamp(static_cast<double>(levels - 1) * torch::sigmoid(ssf.select(1, 2)), 0.0,
                           static_cast<double>(levels - 1));

    // NaN coordinates index cell 0 and still poison the weights, so a
    // diverged model reports a non-finite loss instead of reading out of bounds
    auto x0 = torch::floor(torch::nan_to_num(sx.detach(), 0.0));
    auto y0 = torch::floor(torch::nan_to_num(sy.detach(), 0.0));
    auto z0 = torch::floor(torch::nan_to_num(sz.detach(), 0.0));
    auto wx = (sx - x0).unsqueeze(1);
    auto wy = (sy - y0).unsqueeze(1);
    auto wz = (sz - z0).unsqueeze(1);
    auto x0i = x0.to(torch::kLong);
    auto y0i = y0.to(torch::kLong);
    auto z0i = z0.to(torch::kLong);
    auto x1i = torch::clamp_max(x0i + 1, w - 1);
    auto y1i = torch::clamp_max(y0i + 1, h - 1);
    auto z1i = torch::clamp_max(z0i + 1, levels - 1);

    // all eight corners in one gather keeps the backward to a single scatter
    auto flat = volume.permute({0, 2, 1, 3, 4}).reshape({batch, channels, levels * h * w});
    auto index = [&](const torch::Tensor& zi, const torch::Tensor& yi, const torch::Tensor& xi) {
        return ((zi * h + yi) * w + xi).reshape({batch, 1, h * w});
    };
    auto idx = torch::cat({index(z0i, y0i, x0i), index(z0i, y0i, x1i), index(z0i, y1i, x0i), index(z0i, y1i, x1i),
                           index(z1i, y0i, x0i), index(z1i, y0i, x1i), index(z1i, y1i, x0i), index(z1i, y1i, x1i)},
                          2);
    auto corners = flat.gather(2, idx.expand({batch, channels, 8 * h * w})).reshape({batch, channels, 8, h, w});
    auto one_x = 1.0 - wx;
    auto one_y = 1.0 - wy;
    auto one_z = 1.0 - wz;
    auto weights = torch::stack({one_z * one_y * one_x, one_z * one_y * wx, one_z * wy * one_x, one_z * wy * wx,
                                 wz * one_y * one_x, wz * one_y * wx, wz * wy * one_x, wz * wy * wx},
                                2);  // (B, 1, 8, H, W)
    return (corners * weights).sum(2);
}

AfModuleImpl::AfModuleImpl(int64_t channels, int64_t hidden) {
    fc1 = register_module("fc1", torch::nn::Linear(channels + 1, hidden));
    fc2 = register_module("fc2", torch::nn::Linear(hidden, channels));
    // gates start mostly open (sigmoid(2) ~ 0.88); stacked half-closed gates starve deep codecs of signal
    torch::NoGradGuard no_grad;
    fc2->bias.fill_(2.0);
}

torch::Tensor AfModuleImpl::gate(const torch::Tensor& features, const SnrContext& snr) {
    auto pooled = features.mean({2, 3});
    auto snr_feature = (snr.snr_db / 20.0).to(features.scalar_type()).view({-1, 1});
    auto hidden = torch::relu(fc1(torch::cat({pooled, snr_feature}, 1)));
    return torch::sigmoid(fc2(hidden));
}

torch::Tensor AfModuleImpl::forward(const torch::Tensor& features, const SnrContext& snr) {
    auto g = gate(features, snr);
    return features * g.unsqueeze(-1).unsqueeze(-1);
}

namespace {

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::ConvTranspose2d up2x(int64_t in, int64_t out) {
    return torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
}

}  // namespace

FeatureExtractorImpl::FeatureExtractorImpl(int64_t feature_channels) : channels_(feature_channels) {
    head = register_module("head", conv3x3(3, feature_channels));
    res1 = register_module("res1", conv3x3(feature_channels, feature_channels));
    res2 = register_module("res2", conv3x3(feature_channels, feature_channels));
    if (feature_channels < 3) throw std::invalid_argument("FeatureExtractor: need at least 3 feature channels");
    // channels 0..2 start as the frame itself
    torch::NoGradGuard no_grad;
    head->weight.narrow(0, 0, 3).zero_();
    head->bias.narrow(0, 0, 3).zero_();
    for (int64_t c = 0; c < 3; ++c) head->weight[c][c][1][1] = 1.0;
    res2->weight.narrow(0, 0, 3).zero_();
    res2->bias.narrow(0, 0, 3).zero_();
}

torch::Tensor FeatureExtractorImpl::forward(const torch::Tensor& frame) {
    auto x = head(frame);
    return x + res2(torch::relu(res1(torch::relu(x))));
}

SsfEstimatorImpl::SsfEstimatorImpl(int64_t width) {
    in = register_module("input", conv3x3(6, width));
    down1 = register_module("down1", conv3x3(width, width, 2));
    down2 = register_module("down2", conv3x3(width, width, 2));
    up1 = register_module("up1", up2x(width, width));
    up2 = register_module("up2", up2x(width, width));
    out = register_module("out", conv3x3(width, 3));
    torch::NoGradGuard no_grad;
    out->weight.zero_();
    out->bias.zero_();
}

torch::Tensor SsfEstimatorImpl::forward(const torch::Tensor& current, const torch::Tensor& reference) {
    if (current.sizes() != reference.sizes()) {
        throw std::invalid_argument("estimate_ssf: current and reference frames differ in shape");
    }
    if (current.size(-1) % 4 != 0 || current.size(-2) % 4 != 0) {
        throw std::invalid_argument("estimate_ssf: frame dimensions must be multiples of 4");
    }
    auto a = torch::relu(in(torch::cat({current, reference}, 1)));
    auto b = torch::relu(down1(a));
    auto c = torch::relu(down2(b));
    auto u = torch::relu(up1(c)) + b;
    auto u2 = torch::relu(up2(u)) + a;
    return out(u2);
}

ContextualDecoderImpl::ContextualDecoderImpl(int64_t decoded_channels, int64_t feature_channels,
                                             int64_t width) {
    fuse = register_module("fuse", conv3x3(decoded_channels + 2 * feature_channels, width));
    mid = register_module("mid", conv3x3(width, width));
    mid2 = register_module("mid2", conv3x3(width, width));
    out = register_module("out", conv3x3(width, 3));
    skip = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(feature_channels, 3, 1)));
    // starts from the mean of the warped pixel channels of both contexts
    torch::NoGradGuard no_grad;
    skip->weight.zero_();
    skip->bias.zero_();
    for (int64_t c = 0; c < std::min<int64_t>(3, feature_channels); ++c) skip->weight[c][c][0][0] = 1.0;
}

torch::Tensor ContextualDecoderImpl::forward(const torch::Tensor& d_hat, const torch::Tensor& ctx_minus,
                                             const torch::Tensor& ctx_plus) {
    if (d_hat.size(-1) != ctx_minus.size(-1) || d_hat.size(-2) != ctx_minus.size(-2) ||
        ctx_minus.sizes() != ctx_plus.sizes()) {
        throw std::invalid_argument("contextual_decode: spatial dimensions differ");
    }
    auto x = torch::relu(fuse(torch::cat({d_hat, ctx_minus, ctx_plus}, 1)));
    x = x + mid2(torch::relu(mid(x)));
    return torch::clamp(skip(0.5 * (ctx_minus + ctx_plus)) + out(torch::relu(x)), 0.0, 1.0);
}

}  // namespace rvjscc
