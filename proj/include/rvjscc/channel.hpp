#pragma once

// Multipath Rayleigh fading channel with an exponential power-delay profile
// and additive complex Gaussian noise.

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace rvjscc {

/// Per-tap variances sigma_l^2 = alpha * exp(-l / gamma), normalized to unit sum.
struct PowerDelayProfile {
    int num_paths = 1;
    double gamma = 1.0;
    std::vector<double> variances;
};

/// One channel realization: complex taps of shape (..., L).
struct ChannelTaps {
    torch::Tensor taps;

    int64_t num_paths() const { return taps.size(-1); }
};

struct NoiseSpec {
    double sigma2 = 0.0;
    double snr_db = 0.0;

    static NoiseSpec from_snr_db(double snr_db, double power);
};

PowerDelayProfile make_pdp(int num_paths, double gamma);

double snr_to_sigma2(double snr_db, double power);

torch::Generator make_generator(uint64_t seed);

/// Draws independent CN(0, sigma_l^2) taps. `batch_shape` prefixes the tap
/// axis; an empty shape yields a single (L,) realization.
ChannelTaps sample_taps(const PowerDelayProfile& pdp, torch::Generator& gen,
                        torch::IntArrayRef batch_shape = {},
                        torch::ScalarType dtype = torch::kComplexDouble);

/// Taps of the ideal channel h = [1].
ChannelTaps identity_taps(torch::IntArrayRef batch_shape = {},
                          torch::ScalarType dtype = torch::kComplexDouble);

/// CN(0, 1) samples with the given shape and complex dtype.
torch::Tensor unit_complex_noise(torch::IntArrayRef shape, torch::Generator& gen,
                                 torch::ScalarType dtype = torch::kComplexDouble);

/// h * signal, linear convolution along the last axis truncated to the input
/// length. Taps broadcast against the signal's leading axes.
torch::Tensor convolve_taps(const torch::Tensor& signal, const ChannelTaps& taps);

/// h * signal + sigma * unit_noise with a caller-supplied noise realization.
/// Differentiable w.r.t. signal (and sigma2 when given as a tensor).
torch::Tensor apply_channel(const torch::Tensor& signal, const ChannelTaps& taps,
                            const torch::Tensor& sigma2, const torch::Tensor& unit_noise);

/// Draws the noise from `gen`; sigma2 is shared by every sample.
torch::Tensor apply_channel(const torch::Tensor& signal, const ChannelTaps& taps,
                            const NoiseSpec& noise, torch::Generator& gen);

}  // namespace rvjscc
