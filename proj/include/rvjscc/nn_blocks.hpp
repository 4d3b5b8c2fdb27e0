#pragma once

// Learned and fixed building blocks shared by the key and interpolation
// codecs: SNR-adaptive channel attention, feature extraction, scaled space
// flow estimation, Gaussian scale-space volumes and feature-space warping.

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace rvjscc {

/// Channel quality known at both link ends, one entry per batch item.
struct SnrContext {
    torch::Tensor snr_db;  // (B,)
    torch::Tensor sigma2;  // (B,)

    static SnrContext from_db(const torch::Tensor& snr_db, double power);
    static SnrContext uniform(double snr_db, int64_t batch, double power);
    int64_t batch() const { return snr_db.size(0); }
};

struct ScaleSpaceConfig {
    int levels = 3;            // V
    double base_sigma = 1.5;   // sigma_0
    int kernel_radius = 0;     // 0: ceil(3 * std) per level

    bool operator==(const ScaleSpaceConfig&) const = default;

    /// Gaussian std of slice v; slice 0 is unblurred.
    double level_sigma(int v) const;
    int level_radius(int v) const;
};

/// Normalized samples of exp(-x^2 / 2 std^2) on [-radius, radius].
std::vector<double> gaussian_kernel(double std_dev, int radius);

/// Maps an out-of-range index into [0, n) by mirror reflection that does not
/// repeat the edge sample (d c b | a b c d | c b a).
int64_t reflect_index(int64_t i, int64_t n);

/// (n, n) matrix applying a 1-D Gaussian blur with reflective borders.
torch::Tensor gaussian_blur_matrix(int64_t n, double std_dev, int radius,
                                   torch::ScalarType dtype = torch::kFloat64);

/// Separable Gaussian blur of (..., H, W).
torch::Tensor gaussian_blur(const torch::Tensor& x, double std_dev, int radius);

/// (B, C, H, W) -> (B, V+1, C, H, W); slice 0 is `features` itself.
torch::Tensor build_scale_space_volume(const torch::Tensor& features, const ScaleSpaceConfig& cfg);

/// Trilinear lookup of a scale-space volume (B, V+1, C, H, W) under a scaled
/// space flow (B, 3, H, W) holding (dx, dy, scale logit). The scale coordinate
/// is V * sigmoid(logit); spatial coordinates clamp to the frame border.
torch::Tensor fsw(const torch::Tensor& volume, const torch::Tensor& ssf);

/// Attention-feature gate: features * sigmoid(MLP([mean_hw(features), snr_db / 20])).
class AfModuleImpl : public torch::nn::Module {
public:
    AfModuleImpl(int64_t channels, int64_t hidden);

    torch::Tensor forward(const torch::Tensor& features, const SnrContext& snr);
    /// Per-channel gate values, (B, C).
    torch::Tensor gate(const torch::Tensor& features, const SnrContext& snr);

    torch::nn::Linear fc1{nullptr};
    torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(AfModule);

class FeatureExtractorImpl : public torch::nn::Module {
public:
    explicit FeatureExtractorImpl(int64_t feature_channels);

    torch::Tensor forward(const torch::Tensor& frame);
    int64_t channels() const { return channels_; }

private:
    int64_t channels_;
    torch::nn::Conv2d head{nullptr}, res1{nullptr}, res2{nullptr};
};
TORCH_MODULE(FeatureExtractor);

/// Maps the 6-channel concatenation (current, reference) to a full-resolution
/// scaled space flow. The output layer starts at zero (identity warp).
class SsfEstimatorImpl : public torch::nn::Module {
public:
    explicit SsfEstimatorImpl(int64_t width);

    torch::Tensor forward(const torch::Tensor& current, const torch::Tensor& reference);

    torch::nn::Conv2d in{nullptr}, down1{nullptr}, down2{nullptr};
    torch::nn::ConvTranspose2d up1{nullptr}, up2{nullptr};
    torch::nn::Conv2d out{nullptr};
};
TORCH_MODULE(SsfEstimator);

/// Fuses the preliminary decoded representation with both warped contexts
/// into a frame in [0, 1]. Feature channels 0..2 start as pixels, and the
/// fusion starts from their mean over both contexts.
class ContextualDecoderImpl : public torch::nn::Module {
public:
    ContextualDecoderImpl(int64_t decoded_channels, int64_t feature_channels, int64_t width);

    torch::Tensor forward(const torch::Tensor& d_hat, const torch::Tensor& ctx_minus,
                          const torch::Tensor& ctx_plus);

private:
    torch::nn::Conv2d fuse{nullptr}, mid{nullptr}, mid2{nullptr}, out{nullptr}, skip{nullptr};
};
TORCH_MODULE(ContextualDecoder);

}  // namespace rvjscc
