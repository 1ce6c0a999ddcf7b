#pragma once

#include <cmath>
#include <functional>

#include "c2p/tensor.hpp"

// Central-difference gradient checking utilities. Everything runs in double
// so finite-difference truncation, not rounding, dominates the error.
namespace testsupport {

inline double relative_error(double a, double b, double floor = 1e-10) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Max relative elementwise error between an analytic gradient and central
// differences of `eval` wrt `param`. `eval` must recompute the full forward
// pass from current parameter values.
inline double numeric_gradient_error(c2p::Tensor<double>& param, const c2p::Tensor<double>& analytic,
                                     const std::function<double()>& eval, double h = 1e-5) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < param.numel(); ++i) {
        const double keep = param[i];
        param[i] = keep + h;
        const double up = eval();
        param[i] = keep - h;
        const double down = eval();
        param[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        // a parameter with no influence (e.g. a bias normalized away) has a
        // true gradient of zero on both routes; skip the relative comparison
        if (std::max(std::abs(numeric), std::abs(analytic[i])) < 1e-7) continue;
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace testsupport
