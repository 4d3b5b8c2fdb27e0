#include "rvjscc/metrics.hpp"

#include <algorithm>
#include <stdexcept>

#include "rvjscc/nn_blocks.hpp"

namespace rvjscc {

namespace {

void check_frames(const torch::Tensor& x, const torch::Tensor& x_hat) {
    if (x.sizes() != x_hat.sizes() || x.dim() < 3) {
        throw std::invalid_argument("metrics: expected two frame tensors of identical shape (..., C, H, W)");
    }
}

torch::Tensor as_frames(const torch::Tensor& t) {
    return t.reshape({-1, t.size(-3), t.size(-2), t.size(-1)}).to(torch::kFloat64);
}

}  // namespace

torch::Tensor psnr_per_frame(const torch::Tensor& x, const torch::Tensor& x_hat) {
    check_frames(x, x_hat);
    auto diff = (as_frames(x) - as_frames(x_hat)) * 255.0;
    auto mse = (diff * diff).mean({1, 2, 3});
    auto db = 10.0 * torch::log10((255.0 * 255.0) / mse);
    return torch::where(mse > 0, torch::clamp_max(db, kPsnrCapDb), torch::full_like(db, kPsnrCapDb));
}

double psnr(const torch::Tensor& x, const torch::Tensor& x_hat) {
    return psnr_per_frame(x, x_hat).mean().item<double>();
}

torch::Tensor ms_ssim_per_frame(const torch::Tensor& x, const torch::Tensor& x_hat, const MsSsimOptions& opts,
                                MsSsimResult* info) {
    check_frames(x, x_hat);
    auto a = as_frames(x);
    auto b = as_frames(x_hat);
    const int64_t channels = a.size(1);
    const int64_t min_dim = std::min(a.size(2), a.size(3));

    int window = opts.window;
    bool reduced = false;
    if (min_dim < window) {
        window = static_cast<int>(min_dim % 2 == 1 ? min_dim : min_dim - 1);
        reduced = true;
    }
    int scales = 1;
    while (scales < static_cast<int>(opts.weights.size()) && (min_dim >> scales) >= window) ++scales;
    if (scales < static_cast<int>(opts.weights.size())) reduced = true;

    std::vector<double> weights(opts.weights.begin(), opts.weights.begin() + scales);
    double total = 0.0;
    for (double w : weights) total += w;
    for (double& w : weights) w /= total;

    auto kernel = torch::tensor(gaussian_kernel(opts.window_sigma, window / 2),
                                torch::TensorOptions().dtype(torch::kFloat64));
    auto kx = kernel.view({1, 1, 1, window}).expand({channels, 1, 1, window}).contiguous();
    auto ky = kernel.view({1, 1, window, 1}).expand({channels, 1, window, 1}).contiguous();
    const std::vector<int64_t> one{1, 1};
    const std::vector<int64_t> zero{0, 0};
    auto filt = [&](const torch::Tensor& t) {
        return torch::conv2d(torch::conv2d(t, kx, torch::Tensor(), one, zero, one, channels), ky, torch::Tensor(), one, zero, one,
                             channels);
    };
    const double c1 = opts.k1 * opts.k1;
    const double c2 = opts.k2 * opts.k2;

    torch::Tensor result = torch::ones({a.size(0), channels}, a.options());
    for (int s = 0; s < scales; ++s) {
        auto mu_a = filt(a);
        auto mu_b = filt(b);
        auto mu_ab = mu_a * mu_b;
        auto var_a = filt(a * a) - mu_a * mu_a;
        auto var_b = filt(b * b) - mu_b * mu_b;
        auto cov = filt(a * b) - mu_ab;
        auto cs = (2.0 * cov + c2) / (var_a + var_b + c2);
        if (s + 1 < scales) {
            result = result * torch::pow(torch::relu(cs.mean({2, 3})), weights[static_cast<size_t>(s)]);
            a = torch::avg_pool2d(a, 2);
            b = torch::avg_pool2d(b, 2);
        } else {
            auto luminance = (2.0 * mu_ab + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
            result = result * torch::pow(torch::relu((luminance * cs).mean({2, 3})), weights[static_cast<size_t>(s)]);
        }
    }
    if (info != nullptr) {
        info->scales = scales;
        info->window = window;
        info->reduced = reduced;
    }
    return result.mean(1);
}

MsSsimResult ms_ssim(const torch::Tensor& x, const torch::Tensor& x_hat, const MsSsimOptions& opts) {
    MsSsimResult info;
    info.value = ms_ssim_per_frame(x, x_hat, opts, &info).mean().item<double>();
    return info;
}

}  // namespace rvjscc
