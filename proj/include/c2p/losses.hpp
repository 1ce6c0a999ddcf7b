#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "c2p/models.hpp"
#include "c2p/tensor.hpp"

namespace c2p::losses {

// Scalar objectives and their input gradients. Patch scores are averaged, not
// summed, so magnitudes do not depend on image size or patch-grid size.

// mean((1 - s)^2) over batch and patches: zero iff every score hits 1.
template <typename T>
T lsgan_generator_loss(const PatchScoreMap<T>& d_fake) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < d_fake.numel(); ++i) {
        const double e = 1.0 - static_cast<double>(d_fake[i]);
        acc += e * e;
    }
    return static_cast<T>(acc / static_cast<double>(d_fake.numel()));
}

template <typename T>
Tensor<T> lsgan_generator_loss_grad(const PatchScoreMap<T>& d_fake) {
    Tensor<T> g(d_fake.shape());
    const T inv_n = T{1} / static_cast<T>(d_fake.numel());
    for (std::int64_t i = 0; i < d_fake.numel(); ++i) g[i] = T{2} * (d_fake[i] - T{1}) * inv_n;
    return g;
}

// 1/2 mean((d_real - 1)^2) + 1/2 mean(d_fake^2), targets 1 for real, 0 for fake.
template <typename T>
T lsgan_discriminator_loss(const PatchScoreMap<T>& d_real, const PatchScoreMap<T>& d_fake) {
    double real_term = 0.0;
    for (std::int64_t i = 0; i < d_real.numel(); ++i) {
        const double e = static_cast<double>(d_real[i]) - 1.0;
        real_term += e * e;
    }
    double fake_term = 0.0;
    for (std::int64_t i = 0; i < d_fake.numel(); ++i) {
        const double s = static_cast<double>(d_fake[i]);
        fake_term += s * s;
    }
    return static_cast<T>(0.5 * real_term / static_cast<double>(d_real.numel()) +
                          0.5 * fake_term / static_cast<double>(d_fake.numel()));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lsgan_discriminator_loss_grads(const PatchScoreMap<T>& d_real,
                                                               const PatchScoreMap<T>& d_fake) {
    Tensor<T> gr(d_real.shape());
    Tensor<T> gf(d_fake.shape());
    const T inv_r = T{1} / static_cast<T>(d_real.numel());
    const T inv_f = T{1} / static_cast<T>(d_fake.numel());
    for (std::int64_t i = 0; i < d_real.numel(); ++i) gr[i] = (d_real[i] - T{1}) * inv_r;
    for (std::int64_t i = 0; i < d_fake.numel(); ++i) gf[i] = d_fake[i] * inv_f;
    return {std::move(gr), std::move(gf)};
}

// Mean absolute difference per element. Serves both cycle directions: the
// cartoon batch against its round trip through both generators, and the photo
// batch against its own round trip.
template <typename T>
T reconstruction_loss(const Tensor<T>& x, const Tensor<T>& x_rec) {
    if (!x.same_shape(x_rec))
        throw ShapeError("reconstruction loss shape mismatch: " + shape_str(x.shape()) + " vs " +
                         shape_str(x_rec.shape()));
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i)
        acc += std::abs(static_cast<double>(x[i]) - static_cast<double>(x_rec[i]));
    return static_cast<T>(acc / static_cast<double>(x.numel()));
}

// Gradient wrt the reconstruction.
template <typename T>
Tensor<T> reconstruction_loss_grad(const Tensor<T>& x, const Tensor<T>& x_rec) {
    if (!x.same_shape(x_rec))
        throw ShapeError("reconstruction loss shape mismatch: " + shape_str(x.shape()) + " vs " +
                         shape_str(x_rec.shape()));
    Tensor<T> g(x.shape());
    const T inv_n = T{1} / static_cast<T>(x.numel());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T d = x_rec[i] - x[i];
        g[i] = (d > T{0} ? inv_n : (d < T{0} ? -inv_n : T{0}));
    }
    return g;
}

// One training step's scalar components. total_g folds the cycle terms in
// with weight lambda_cyc; total_d is the sum of both discriminator losses.
struct LossReport {
    double g_r_adv = 0.0;
    double g_c_adv = 0.0;
    double d_r = 0.0;
    double d_c = 0.0;
    double forward_cyc = 0.0;
    double backward_cyc = 0.0;
    double total_g = 0.0;
    double total_d = 0.0;

    bool finite() const {
        for (double v : {g_r_adv, g_c_adv, d_r, d_c, forward_cyc, backward_cyc, total_g, total_d})
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline LossReport total_objective(LossReport report, double lambda_cyc) {
    if (lambda_cyc < 0.0) throw std::invalid_argument("lambda_cyc must be >= 0");
    report.total_g = report.g_r_adv + report.g_c_adv + lambda_cyc * (report.forward_cyc + report.backward_cyc);
    report.total_d = report.d_r + report.d_c;
    return report;
}

}  // namespace c2p::losses
