#pragma once

// OFDM framing of a frame's latent: pilot insertion, unitary IDFT with cyclic
// prefix on transmit, and CP removal plus DFT on receive.
//
// Grids keep arbitrary leading batch axes; the trailing axes are
// (packet, symbol, subcarrier).

#include <cstdint>

#include <torch/torch.h>

#include "rvjscc/channel.hpp"

namespace rvjscc {

struct OfdmConfig {
    int m_key = 6;      // packets per key frame
    int m_interp = 2;   // packets per interpolation frame
    int n_p = 2;        // pilot symbols per packet
    int n_s = 12;       // data symbols per packet
    int n_c = 256;      // subcarriers
    int l_cp = 16;      // cyclic prefix length
    double power = 1.0;
    int64_t pilot_seed = 7;

    bool operator==(const OfdmConfig&) const = default;

    /// Complex data symbols carried by `packets` packets.
    int64_t capacity(int packets) const {
        return static_cast<int64_t>(packets) * n_s * n_c;
    }
    /// Time-domain samples produced by tx for `packets` packets.
    int64_t tx_length(int packets) const {
        return static_cast<int64_t>(packets) * (n_s + n_p) * (n_c + l_cp);
    }
    void validate() const;
};

struct OfdmGrid {
    torch::Tensor pilots;  // (M, N_p, N_c), unit modulus, shared by every batch item
    torch::Tensor data;    // (..., M, N_s, N_c)
};

/// A frame's complex representation, zero-padded to the OFDM capacity k.
struct Latent {
    torch::Tensor symbols;  // (..., k)
    int64_t valid_len = 0;  // length before padding

    int64_t length() const { return symbols.size(-1); }
};

/// Deterministic QPSK pilot grid derived from cfg.pilot_seed.
torch::Tensor make_pilots(const OfdmConfig& cfg, int packets,
                          torch::ScalarType dtype = torch::kComplexDouble);

/// Scales `data` so the mean squared magnitude over dims [first_sample_dim, end)
/// equals `power`, independently for every index of the leading dims.
torch::Tensor normalize_power(const torch::Tensor& data, double power,
                              int64_t first_sample_dim = 0);

/// Mean |x|^2 over dims [first_sample_dim, end).
torch::Tensor mean_power(const torch::Tensor& data, int64_t first_sample_dim = 0);

/// Zero-pads (..., k_raw) symbols to capacity k = M*N_s*N_c.
Latent pack_latent(const torch::Tensor& z_raw, const OfdmConfig& cfg, int packets);

/// Drops the zero padding: (..., k) -> (..., valid_len).
torch::Tensor unpack_latent(const Latent& latent);

/// Latent (..., k) viewed as the data grid (..., M, N_s, N_c), row-major.
torch::Tensor latent_to_grid(const Latent& latent, const OfdmConfig& cfg, int packets);

torch::Tensor grid_to_symbols(const torch::Tensor& data);

/// (..., M, N_s, N_c) data with (M, N_p, N_c) pilots -> (..., M(N_s+N_p)(N_c+L_cp)).
/// Within a packet the pilot symbols precede the data symbols.
torch::Tensor ofdm_tx(const OfdmGrid& grid, const OfdmConfig& cfg);

struct RxOutput {
    torch::Tensor pilots;  // (..., M, N_p, N_c)
    torch::Tensor data;    // (..., M, N_s, N_c)
};

RxOutput ofdm_rx(const torch::Tensor& received, const OfdmConfig& cfg, int packets);

/// H[m] = sum_l h_l exp(-i 2 pi m l / N_c).
torch::Tensor freq_response(const ChannelTaps& taps, int n_c);

/// Channel uses per real source dimension: M(N_s+N_p)(N_c+L_cp) / (3HW).
double bandwidth_ratio(const OfdmConfig& cfg, int packets, int frame_h, int frame_w);

}  // namespace rvjscc
