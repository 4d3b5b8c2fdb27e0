#pragma once

// Decoupled denoising stage: least-squares channel estimation from the known
// pilots, regularized zero-forcing equalization, and a small residual network
// that refines the equalized symbols into the latent handed to the decoders.

#include <cstdint>

#include <torch/torch.h>

#include "rvjscc/nn_blocks.hpp"

namespace rvjscc {

struct ChannelEstimate {
    torch::Tensor h_freq;      // (..., N_c), averaged over packets and pilots
    torch::Tensor per_packet;  // (..., M, N_c)
};

inline constexpr double kEqualizerEpsilon = 1e-6;

/// H_hat[m] = mean over packets and pilot symbols of Y_p_hat / Y_p.
ChannelEstimate ls_channel_estimate(const torch::Tensor& y_p_hat, const torch::Tensor& y_p);

/// Y_eq = Y_hat * conj(H_hat) / (|H_hat|^2 + eps), with H_hat broadcast over
/// packets and data symbols.
torch::Tensor equalize(const torch::Tensor& y_hat, const ChannelEstimate& est,
                       double eps = kEqualizerEpsilon);

class DenoiserImpl : public torch::nn::Module {
public:
    explicit DenoiserImpl(int64_t width);

    /// Returns the refined latent (B, M*N_s*N_c) for (B, M, N_s, N_c) data.
    torch::Tensor forward(const torch::Tensor& y_hat, const torch::Tensor& y_p_hat,
                          const torch::Tensor& y_p, const SnrContext& snr);

    /// Equalized symbols flattened to (B, k), i.e. the refiner's starting point.
    static torch::Tensor equalized_latent(const torch::Tensor& y_hat, const torch::Tensor& y_p_hat,
                                          const torch::Tensor& y_p);

    torch::nn::Conv1d in{nullptr}, mid{nullptr}, out{nullptr};
};
TORCH_MODULE(Denoiser);

}  // namespace rvjscc
