#include "rvjscc/ofdm.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvjscc {

void OfdmConfig::validate() const {
    const std::pair<const char*, int> counts[] = {{"m_key", m_key}, {"m_interp", m_interp}, {"n_p", n_p},
                                                   {"n_s", n_s},     {"n_c", n_c}};
    for (const auto& [name, value] : counts) {
        if (value < 1) {
            throw std::invalid_argument(std::string("OfdmConfig: ") + name + " must be positive, got " +
                                        std::to_string(value));
        }
    }
    if (l_cp < 0) throw std::invalid_argument("OfdmConfig: l_cp must be non-negative");
    if (l_cp > n_c) throw std::invalid_argument("OfdmConfig: l_cp must not exceed n_c");
    if (!(power > 0.0)) throw std::invalid_argument("OfdmConfig: power must be positive");
}

torch::Tensor make_pilots(const OfdmConfig& cfg, int packets, torch::ScalarType dtype) {
    const int64_t count = static_cast<int64_t>(packets) * cfg.n_p * cfg.n_c;
    // Raw engine bits only; std distributions are not portable across libraries.
    std::mt19937_64 engine(static_cast<uint64_t>(cfg.pilot_seed));
    std::vector<double> pairs(static_cast<size_t>(2 * count));
    const double a = 1.0 / std::sqrt(2.0);
    uint64_t bits = 0;
    int left = 0;
    for (int64_t i = 0; i < count; ++i) {
        if (left == 0) {
            bits = engine();
            left = 32;
        }
        pairs[static_cast<size_t>(2 * i)] = (bits & 1U) ? a : -a;
        pairs[static_cast<size_t>(2 * i + 1)] = (bits & 2U) ? a : -a;
        bits >>= 2;
        --left;
    }
    auto real = torch::tensor(pairs, torch::TensorOptions().dtype(torch::kFloat64))
                    .reshape({packets, cfg.n_p, cfg.n_c, 2});
    return torch::view_as_complex(real).to(dtype);
}

torch::Tensor mean_power(const torch::Tensor& data, int64_t first_sample_dim) {
    std::vector<int64_t> dims;
    for (int64_t d = first_sample_dim; d < data.dim(); ++d) dims.push_back(d);
    auto mag2 = data.is_complex() ? torch::real(data * data.conj()) : data * data;
    return mag2.mean(dims, /*keepdim=*/true);
}

torch::Tensor normalize_power(const torch::Tensor& data, double power, int64_t first_sample_dim) {
    auto p = mean_power(data, first_sample_dim);
    if ((p <= 0.0).any().item<bool>()) {
        throw std::invalid_argument("normalize_power: all-zero input has no defined scale");
    }
    return data * torch::sqrt(power / p);
}

Latent pack_latent(const torch::Tensor& z_raw, const OfdmConfig& cfg, int packets) {
    const int64_t k = cfg.capacity(packets);
    const int64_t k_raw = z_raw.size(-1);
    if (k_raw < 1) throw std::invalid_argument("pack_latent: empty latent");
    if (k_raw > k) {
        throw std::invalid_argument("pack_latent: latent length " + std::to_string(k_raw) +
                                    " exceeds the bandwidth budget of " + std::to_string(k) +
                                    " symbols");
    }
    auto padded = k_raw == k ? z_raw : torch::constant_pad_nd(z_raw, {0, k - k_raw});
    return Latent{padded, k_raw};
}

torch::Tensor unpack_latent(const Latent& latent) {
    return latent.symbols.narrow(-1, 0, latent.valid_len);
}

torch::Tensor latent_to_grid(const Latent& latent, const OfdmConfig& cfg, int packets) {
    if (latent.length() != cfg.capacity(packets)) {
        throw std::invalid_argument("latent_to_grid: latent length does not match the packet capacity");
    }
    std::vector<int64_t> shape(latent.symbols.sizes().begin(), latent.symbols.sizes().end() - 1);
    shape.insert(shape.end(), {packets, cfg.n_s, cfg.n_c});
    return latent.symbols.reshape(shape);
}

torch::Tensor grid_to_symbols(const torch::Tensor& data) {
    return data.flatten(-3, -1);
}

torch::Tensor ofdm_tx(const OfdmGrid& grid, const OfdmConfig& cfg) {
    const auto& data = grid.data;
    if (data.dim() < 3 || data.size(-2) != cfg.n_s || data.size(-1) != cfg.n_c) {
        throw std::invalid_argument("ofdm_tx: data grid must be (..., M, N_s, N_c)");
    }
    if (grid.pilots.size(0) != data.size(-3)) {
        throw std::invalid_argument("ofdm_tx: pilot packets do not match data packets");
    }
    std::vector<int64_t> pilot_shape(data.sizes().begin(), data.sizes().end());
    pilot_shape[pilot_shape.size() - 2] = cfg.n_p;
    auto pilots = grid.pilots.to(data.scalar_type()).expand(pilot_shape);
    auto symbols = torch::cat({pilots, data}, -2);
    auto time = torch::fft::ifft(symbols, c10::nullopt, -1, "ortho");
    if (cfg.l_cp > 0) {
        time = torch::cat({time.narrow(-1, cfg.n_c - cfg.l_cp, cfg.l_cp), time}, -1);
    }
    return time.flatten(-3, -1);
}

RxOutput ofdm_rx(const torch::Tensor& received, const OfdmConfig& cfg, int packets) {
    const int64_t expected = cfg.tx_length(packets);
    if (received.dim() < 1 || received.size(-1) != expected) {
        throw std::invalid_argument("ofdm_rx: received length " +
                                    std::to_string(received.dim() ? received.size(-1) : 0) +
                                    " does not match the expected " + std::to_string(expected));
    }
    std::vector<int64_t> shape(received.sizes().begin(), received.sizes().end() - 1);
    shape.insert(shape.end(), {packets, cfg.n_p + cfg.n_s, cfg.n_c + cfg.l_cp});
    auto time = received.reshape(shape).narrow(-1, cfg.l_cp, cfg.n_c);
    auto freq = torch::fft::fft(time, c10::nullopt, -1, "ortho");
    return RxOutput{freq.narrow(-2, 0, cfg.n_p), freq.narrow(-2, cfg.n_p, cfg.n_s)};
}

torch::Tensor freq_response(const ChannelTaps& taps, int n_c) {
    if (taps.num_paths() > n_c) {
        throw std::invalid_argument("freq_response: more taps than subcarriers");
    }
    return torch::fft::fft(taps.taps, n_c, -1, "backward");
}

double bandwidth_ratio(const OfdmConfig& cfg, int packets, int frame_h, int frame_w) {
    if (packets < 1 || frame_h < 1 || frame_w < 1) {
        throw std::invalid_argument("bandwidth_ratio: dimensions must be positive");
    }
    return static_cast<double>(cfg.tx_length(packets)) /
           (3.0 * static_cast<double>(frame_h) * static_cast<double>(frame_w));
}

}  // namespace rvjscc
