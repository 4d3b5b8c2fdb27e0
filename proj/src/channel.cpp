#include "rvjscc/channel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <ATen/CPUGeneratorImpl.h>

namespace rvjscc {

NoiseSpec NoiseSpec::from_snr_db(double snr_db, double power) {
    return NoiseSpec{snr_to_sigma2(snr_db, power), snr_db};
}

PowerDelayProfile make_pdp(int num_paths, double gamma) {
    if (num_paths < 1) {
        throw std::invalid_argument("make_pdp: num_paths must be >= 1, got " +
                                    std::to_string(num_paths));
    }
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument("make_pdp: gamma must be a positive finite delay constant");
    }
    PowerDelayProfile pdp;
    pdp.num_paths = num_paths;
    pdp.gamma = gamma;
    pdp.variances.resize(static_cast<size_t>(num_paths));
    double total = 0.0;
    for (int l = 0; l < num_paths; ++l) {
        pdp.variances[static_cast<size_t>(l)] = std::exp(-static_cast<double>(l) / gamma);
        total += pdp.variances[static_cast<size_t>(l)];
    }
    for (auto& v : pdp.variances) v /= total;
    return pdp;
}

double snr_to_sigma2(double snr_db, double power) {
    if (!(power > 0.0)) throw std::invalid_argument("snr_to_sigma2: power must be positive");
    return power * std::pow(10.0, -snr_db / 10.0);
}

torch::Generator make_generator(uint64_t seed) {
    return at::make_generator<at::CPUGeneratorImpl>(seed);
}

namespace {

torch::ScalarType real_type_of(torch::ScalarType complex_type) {
    switch (complex_type) {
        case torch::kComplexFloat: return torch::kFloat32;
        case torch::kComplexDouble: return torch::kFloat64;
        default: throw std::invalid_argument("expected a complex dtype");
    }
}

}  // namespace

torch::Tensor unit_complex_noise(torch::IntArrayRef shape, torch::Generator& gen,
                                 torch::ScalarType dtype) {
    std::vector<int64_t> pair_shape(shape.begin(), shape.end());
    pair_shape.push_back(2);
    auto pairs = torch::randn(pair_shape, gen, torch::TensorOptions().dtype(real_type_of(dtype)));
    return torch::view_as_complex(pairs * std::sqrt(0.5));
}

ChannelTaps sample_taps(const PowerDelayProfile& pdp, torch::Generator& gen,
                        torch::IntArrayRef batch_shape, torch::ScalarType dtype) {
    std::vector<int64_t> shape(batch_shape.begin(), batch_shape.end());
    shape.push_back(pdp.num_paths);
    auto unit = unit_complex_noise(shape, gen, dtype);
    auto std_dev = torch::tensor(pdp.variances, torch::TensorOptions().dtype(torch::kFloat64))
                       .sqrt()
                       .to(real_type_of(dtype));
    return ChannelTaps{unit * std_dev};
}

ChannelTaps identity_taps(torch::IntArrayRef batch_shape, torch::ScalarType dtype) {
    std::vector<int64_t> shape(batch_shape.begin(), batch_shape.end());
    shape.push_back(1);
    return ChannelTaps{torch::ones(shape, torch::TensorOptions().dtype(dtype))};
}

torch::Tensor convolve_taps(const torch::Tensor& signal, const ChannelTaps& taps) {
    const int64_t n = signal.size(-1);
    const int64_t num_taps = taps.num_paths();
    auto out = signal * taps.taps.narrow(-1, 0, 1);
    for (int64_t l = 1; l < std::min(num_taps, n); ++l) {
        auto delayed = torch::constant_pad_nd(signal.narrow(-1, 0, n - l), {l, 0});
        out = out + delayed * taps.taps.narrow(-1, l, 1);
    }
    return out;
}

torch::Tensor apply_channel(const torch::Tensor& signal, const ChannelTaps& taps,
                            const torch::Tensor& sigma2, const torch::Tensor& unit_noise) {
    if (signal.numel() == 0) throw std::invalid_argument("apply_channel: empty signal");
    return convolve_taps(signal, taps) + sigma2.sqrt() * unit_noise;
}

torch::Tensor apply_channel(const torch::Tensor& signal, const ChannelTaps& taps,
                            const NoiseSpec& noise, torch::Generator& gen) {
    if (signal.numel() == 0) throw std::invalid_argument("apply_channel: empty signal");
    auto faded = convolve_taps(signal, taps);
    if (noise.sigma2 == 0.0) return faded;
    auto unit = unit_complex_noise(faded.sizes(), gen, faded.scalar_type());
    return faded + std::sqrt(noise.sigma2) * unit;
}

}  // namespace rvjscc
