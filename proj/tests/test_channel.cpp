#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "rvjscc/channel.hpp"
#include "support.hpp"

using namespace rvjscc;

namespace {

std::vector<double> exp_profile_oracle(int num_paths, double gamma) {
    // alpha from the closed-form geometric sum (1 - r^L) / (1 - r), r = exp(-1/gamma)
    const double r = std::exp(-1.0 / gamma);
    const double alpha = (1.0 - r) / (1.0 - std::pow(r, num_paths));
    std::vector<double> v;
    for (int l = 0; l < num_paths; ++l) v.push_back(alpha * std::pow(r, l));
    return v;
}

torch::Tensor crandn(torch::IntArrayRef shape, uint64_t seed) {
    auto gen = make_generator(seed);
    return unit_complex_noise(shape, gen);
}

}  // namespace

TEST_CASE("make_pdp single path is unit") {
    auto pdp = make_pdp(1, 4.0);
    REQUIRE(pdp.variances.size() == 1);
    CHECK(pdp.variances[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("make_pdp matches the geometric-sum profile") {
    for (int L : {2, 4, 8, 17}) {
        for (double gamma : {0.5, 1.0, 4.0, 10.0}) {
            auto pdp = make_pdp(L, gamma);
            auto want = exp_profile_oracle(L, gamma);
            double sum = 0.0;
            for (int l = 0; l < L; ++l) {
                CHECK(std::abs(pdp.variances[static_cast<size_t>(l)] - want[static_cast<size_t>(l)]) < 1e-12);
                if (l > 0) CHECK(pdp.variances[static_cast<size_t>(l)] < pdp.variances[static_cast<size_t>(l - 1)]);
                sum += pdp.variances[static_cast<size_t>(l)];
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
    CHECK(make_pdp(8, 4.0).variances[0] == doctest::Approx(0.2558).epsilon(1e-3));
}

TEST_CASE("make_pdp rejects bad arguments") {
    CHECK_THROWS_AS(make_pdp(0, 4.0), std::invalid_argument);
    CHECK_THROWS_AS(make_pdp(4, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(make_pdp(4, -1.0), std::invalid_argument);
}

TEST_CASE("snr_to_sigma2") {
    CHECK(snr_to_sigma2(0.0, 1.0) == doctest::Approx(1.0));
    CHECK(snr_to_sigma2(10.0, 1.0) == doctest::Approx(0.1));
    CHECK(snr_to_sigma2(20.0, 1.0) == doctest::Approx(0.01));
    CHECK(snr_to_sigma2(10.0, 2.0) == doctest::Approx(0.2));
    auto spec = NoiseSpec::from_snr_db(20.0, 1.0);
    CHECK(spec.sigma2 == doctest::Approx(0.01));
    CHECK(spec.snr_db == 20.0);
}

TEST_CASE("sample_taps is deterministic per seed") {
    auto pdp = make_pdp(8, 4.0);
    auto g1 = make_generator(42);
    auto g2 = make_generator(42);
    auto g3 = make_generator(43);
    auto a = sample_taps(pdp, g1, {16});
    auto b = sample_taps(pdp, g2, {16});
    auto c = sample_taps(pdp, g3, {16});
    CHECK(a.taps.sizes() == torch::IntArrayRef({16, 8}));
    CHECK(a.num_paths() == 8);
    CHECK(torch::equal(a.taps, b.taps));
    CHECK_FALSE(torch::equal(a.taps, c.taps));
}

TEST_CASE("single-path tap power is one") {
    auto pdp = make_pdp(1, 4.0);
    auto gen = make_generator(3);
    auto h = sample_taps(pdp, gen, {100000}).taps;
    const double p = torch::real(h * h.conj()).mean().item<double>();
    CHECK(std::abs(p - 1.0) < 0.02);
}

TEST_CASE("tap magnitudes are Rayleigh (KS test)") {
    auto pdp = make_pdp(8, 4.0);
    auto gen = make_generator(11);
    const int64_t n = 100000;
    auto mags = sample_taps(pdp, gen, {n}).taps.abs();
    const double crit = 1.628 / std::sqrt(static_cast<double>(n));  // alpha = 0.01
    for (int l = 0; l < 8; ++l) {
        auto sorted = std::get<0>(mags.select(1, l).sort());
        auto acc = sorted.accessor<double, 1>();
        const double s2 = pdp.variances[static_cast<size_t>(l)];
        double d = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double cdf = 1.0 - std::exp(-acc[i] * acc[i] / s2);
            d = std::max({d, std::abs(cdf - static_cast<double>(i) / n), std::abs(cdf - static_cast<double>(i + 1) / n)});
        }
        CHECK_MESSAGE(d < crit, "tap ", l, " KS statistic ", d);
    }
}

TEST_CASE("identity and delay channels") {
    auto x = crandn({32}, 5);
    auto id = identity_taps();
    auto gen = make_generator(1);
    CHECK(torch::equal(apply_channel(x, id, NoiseSpec{0.0, 0.0}, gen), x));

    ChannelTaps delay{torch::tensor({0.0, 1.0}, torch::kFloat64).to(torch::kComplexDouble)};
    auto y = apply_channel(x, delay, NoiseSpec{0.0, 0.0}, gen);
    CHECK(y[0].abs().item<double>() == 0.0);
    CHECK(torch::allclose(y.narrow(0, 1, 31), x.narrow(0, 0, 31)));
}

TEST_CASE("noise power matches sigma2") {
    auto gen = make_generator(9);
    auto zeros = torch::zeros({100000}, torch::kComplexDouble);
    auto y = apply_channel(zeros, identity_taps(), NoiseSpec{0.5, 0.0}, gen);
    const double p = torch::real(y * y.conj()).mean().item<double>();
    CHECK(std::abs(p - 0.5) < 0.01);
}

TEST_CASE("convolution matches a direct sum, truncated to input length") {
    auto pdp = make_pdp(5, 2.0);
    auto gen = make_generator(21);
    auto taps = sample_taps(pdp, gen);
    auto x = crandn({20}, 22);
    auto y = convolve_taps(x, taps);
    REQUIRE(y.size(0) == 20);
    auto xa = x.accessor<c10::complex<double>, 1>();
    auto ha = taps.taps.accessor<c10::complex<double>, 1>();
    for (int64_t t = 0; t < 20; ++t) {
        c10::complex<double> want(0.0, 0.0);
        for (int64_t l = 0; l < 5 && l <= t; ++l) want += ha[l] * xa[t - l];
        CHECK(std::abs(y[t].item<c10::complex<double>>() - want) < 1e-12);
    }
}

TEST_CASE("channel is linear for fixed taps and zero noise") {
    auto pdp = make_pdp(8, 4.0);
    auto gen = make_generator(31);
    auto taps = sample_taps(pdp, gen);
    auto x = crandn({64}, 32);
    auto y = crandn({64}, 33);
    const c10::complex<double> a(0.7, -1.3), b(-2.0, 0.4);
    auto zero = torch::zeros({64}, torch::kComplexDouble);
    auto s0 = torch::zeros({}, torch::kFloat64);
    auto lhs = apply_channel(a * x + b * y, taps, s0, zero);
    auto rhs = a * apply_channel(x, taps, s0, zero) + b * apply_channel(y, taps, s0, zero);
    CHECK((lhs - rhs).abs().max().item<double>() < 1e-12);
}

TEST_CASE("channel gradient matches finite differences") {
    auto pdp = make_pdp(8, 4.0);
    auto gen = make_generator(41);
    auto taps = sample_taps(pdp, gen);
    auto noise = unit_complex_noise({48}, gen);
    auto sigma2 = torch::tensor(0.3, torch::kFloat64);
    auto weights = crandn({48}, 42);
    auto f = [&](const torch::Tensor& x) {
        auto y = apply_channel(x, taps, sigma2, noise);
        return torch::real(torch::sum(weights * y * y.conj() * y.abs()));
    };
    for (uint64_t s = 0; s < 3; ++s) {
        auto x = crandn({48}, 50 + s);
        auto dir = crandn({48}, 60 + s);
        CHECK(testing_support::directional_fd_error(f, x, dir) < 1e-3);
    }
}

TEST_CASE("apply_channel rejects empty input") {
    auto gen = make_generator(1);
    auto empty = torch::zeros({0}, torch::kComplexDouble);
    CHECK_THROWS_AS(apply_channel(empty, identity_taps(), NoiseSpec{0.1, 10.0}, gen), std::invalid_argument);
}
