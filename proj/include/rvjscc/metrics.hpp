#pragma once

// Frame quality metrics on [0, 1] RGB tensors of shape (..., 3, H, W).
// Per-frame values are averaged over all leading (frame) axes.

#include <array>

#include <torch/torch.h>

namespace rvjscc {

inline constexpr double kPsnrCapDb = 100.0;

/// 10 log10(255^2 / MSE) with MSE measured in 8-bit units; identical frames
/// give the cap.
torch::Tensor psnr_per_frame(const torch::Tensor& x, const torch::Tensor& x_hat);
double psnr(const torch::Tensor& x, const torch::Tensor& x_hat);

struct MsSsimOptions {
    int window = 11;
    double window_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    std::array<double, 5> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
};

struct MsSsimResult {
    double value = 0.0;
    int scales = 0;       // scales actually evaluated
    int window = 0;       // window size actually used
    bool reduced = false; // fewer than five scales or a shrunken window
};

/// Multi-scale SSIM. Frames too small for five scales use the largest number
/// that keeps the window inside the coarsest scale (weights renormalized);
/// frames smaller than the window shrink the window. Both cases are flagged.
MsSsimResult ms_ssim(const torch::Tensor& x, const torch::Tensor& x_hat, const MsSsimOptions& opts = {});
torch::Tensor ms_ssim_per_frame(const torch::Tensor& x, const torch::Tensor& x_hat,
                                const MsSsimOptions& opts = {}, MsSsimResult* info = nullptr);

}  // namespace rvjscc
