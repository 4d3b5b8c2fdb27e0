#pragma once

#include <cmath>
#include <functional>

#include <torch/torch.h>

namespace testing_support {

/// Relative error between central finite differences and the autograd
/// directional derivative of f at x along dir (real or complex, double).
inline double directional_fd_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                   const torch::Tensor& x, const torch::Tensor& dir, double eps = 1e-6) {
    auto xa = x.detach().clone().requires_grad_(true);
    auto y = f(xa);
    auto grad = torch::autograd::grad({y}, {xa})[0];
    double analytic;
    if (grad.is_complex()) {
        analytic = torch::real(torch::sum(torch::conj(grad) * dir)).item<double>();
    } else {
        analytic = torch::sum(grad * dir).item<double>();
    }
    torch::NoGradGuard ng;
    const double plus = f(x.detach() + eps * dir).item<double>();
    const double minus = f(x.detach() - eps * dir).item<double>();
    const double numeric = (plus - minus) / (2.0 * eps);
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-12});
    return std::abs(numeric - analytic) / scale;
}

}  // namespace testing_support
