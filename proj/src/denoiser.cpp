#include "rvjscc/denoiser.hpp"

#include <stdexcept>

namespace rvjscc {

ChannelEstimate ls_channel_estimate(const torch::Tensor& y_p_hat, const torch::Tensor& y_p) {
    if (y_p_hat.dim() < 3 || y_p.dim() != 3 ||
        y_p_hat.sizes().slice(y_p_hat.dim() - 3) != y_p.sizes()) {
        throw std::invalid_argument("ls_channel_estimate: pilot grids must be (..., M, N_p, N_c) and (M, N_p, N_c)");
    }
    if ((torch::abs(y_p) == 0).any().item<bool>()) {
        throw std::invalid_argument("ls_channel_estimate: zero pilot entry");
    }
    auto per_pilot = y_p_hat / y_p.to(y_p_hat.scalar_type());
    auto per_packet = per_pilot.mean(-2);
    return ChannelEstimate{per_packet.mean(-2), per_packet};
}

torch::Tensor equalize(const torch::Tensor& y_hat, const ChannelEstimate& est, double eps) {
    auto h = est.h_freq.unsqueeze(-2).unsqueeze(-2);
    auto mag2 = torch::real(h * h.conj());
    return y_hat * h.conj() / (mag2 + eps);
}

DenoiserImpl::DenoiserImpl(int64_t width) {
    auto conv = [](int64_t in_ch, int64_t out_ch) {
        return torch::nn::Conv1d(torch::nn::Conv1dOptions(in_ch, out_ch, 3).padding(1));
    };
    in = register_module("input", conv(5, width));
    mid = register_module("mid", conv(width, width));
    out = register_module("out", conv(width, 2));
    torch::NoGradGuard no_grad;
    out->weight.zero_();
    out->bias.zero_();
}

torch::Tensor DenoiserImpl::equalized_latent(const torch::Tensor& y_hat, const torch::Tensor& y_p_hat,
                                             const torch::Tensor& y_p) {
    return equalize(y_hat, ls_channel_estimate(y_p_hat, y_p)).flatten(1);
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& y_hat, const torch::Tensor& y_p_hat,
                                    const torch::Tensor& y_p, const SnrContext& snr) {
    if (y_hat.dim() != 4 || y_p_hat.dim() != 4 || y_hat.size(0) != y_p_hat.size(0) ||
        y_hat.size(1) != y_p_hat.size(1) || y_hat.size(3) != y_p_hat.size(3)) {
        throw std::invalid_argument("denoise: expected (B, M, N_s, N_c) data and (B, M, N_p, N_c) pilots");
    }
    const int64_t batch = y_hat.size(0);
    const int64_t packets = y_hat.size(1);
    const int64_t symbols = y_hat.size(2);
    const int64_t n_c = y_hat.size(3);

    auto est = ls_channel_estimate(y_p_hat, y_p);
    auto y_eq = equalize(y_hat, est);
    auto h = est.h_freq.view({batch, 1, 1, n_c}).expand_as(y_eq);
    auto eq_pairs = torch::view_as_real(y_eq.contiguous());
    auto h_pairs = torch::view_as_real(h.contiguous());
    auto real_type = eq_pairs.scalar_type();
    auto sigma2 = snr.sigma2.to(real_type).view({batch, 1, 1, 1}).expand({batch, packets, symbols, n_c});

    // One row per OFDM symbol, channels = (Re Y_eq, Im Y_eq, Re H, Im H, sigma^2).
    auto features = torch::stack({eq_pairs.select(-1, 0), eq_pairs.select(-1, 1), h_pairs.select(-1, 0),
                                  h_pairs.select(-1, 1), sigma2},
                                 -2)
                        .reshape({batch * packets * symbols, 5, n_c});
    auto r = out(torch::relu(mid(torch::relu(in(features)))));
    auto residual = torch::view_as_complex(
        r.reshape({batch, packets, symbols, 2, n_c}).transpose(-1, -2).contiguous());
    return (y_eq + residual).flatten(1);
}

}  // namespace rvjscc
