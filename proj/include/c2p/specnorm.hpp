#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <utility>

#include "c2p/nn.hpp"
#include "c2p/rng.hpp"
#include "c2p/tensor.hpp"

namespace c2p::sn {

// Persistent left singular vector estimate for one weight tensor. The weight
// is viewed as a 2-d matrix with out_channels rows; u lives in row space.
template <typename T>
struct SpectralState {
    Tensor<T> u;
    std::int64_t iterations = 0;

    static SpectralState init(std::int64_t rows, Rng& rng) {
        SpectralState s;
        s.u = Tensor<T>({rows});
        double nrm = 0.0;
        for (std::int64_t i = 0; i < rows; ++i) {
            s.u[i] = static_cast<T>(rng.normal());
            nrm += static_cast<double>(s.u[i]) * static_cast<double>(s.u[i]);
        }
        nrm = std::sqrt(nrm);
        for (std::int64_t i = 0; i < rows; ++i) s.u[i] = static_cast<T>(s.u[i] / nrm);
        return s;
    }
};

template <typename T>
struct PowerIterResult {
    T sigma = T{0};
    bool degenerate = false;  // zero matrix; u was left untouched
    Tensor<T> v;              // right vector matching sigma, for gradient use
};

namespace detail {
template <typename T>
constexpr T norm_floor() {
    return static_cast<T>(1e-12);
}
}  // namespace detail

// Rows/cols view of an arbitrary-rank weight: dim 0 stays, the rest flattens.
template <typename T>
inline std::pair<std::int64_t, std::int64_t> matrix_view_dims(const Tensor<T>& w) {
    if (w.rank() < 2) throw ShapeError("spectral norm needs rank >= 2, got " + shape_str(w.shape()));
    return {w.dim(0), w.numel() / w.dim(0)};
}

// `steps` rounds of power iteration on the matrix view of w. Updates state.u
// in place and returns the spectral norm estimate together with the right
// singular vector the estimate was taken against.
template <typename T>
PowerIterResult<T> power_iterate(const Tensor<T>& w, SpectralState<T>& state, int steps) {
    const auto [rows, cols] = matrix_view_dims(w);
    if (state.u.numel() != rows)
        throw ShapeError("spectral state dimension " + std::to_string(state.u.numel()) +
                         " does not match weight rows " + std::to_string(rows));
    auto wm = w.mat(rows, cols);
    Eigen::Matrix<T, Eigen::Dynamic, 1> u =
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(state.u.data(), rows);
    Eigen::Matrix<T, Eigen::Dynamic, 1> v(cols);

    PowerIterResult<T> res;
    for (int s = 0; s < steps; ++s) {
        v.noalias() = wm.transpose() * u;
        const T vn = v.norm();
        if (vn < detail::norm_floor<T>()) {
            res.sigma = T{0};
            res.degenerate = true;
            return res;  // u deliberately not written back
        }
        v /= vn;
        Eigen::Matrix<T, Eigen::Dynamic, 1> wv = wm * v;
        const T wn = wv.norm();
        if (wn < detail::norm_floor<T>()) {
            res.sigma = T{0};
            res.degenerate = true;
            return res;
        }
        u = wv / wn;
        res.sigma = wn;  // == u^T W v with the refreshed u
    }
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(state.u.data(), rows) = u;
    state.iterations += steps;
    res.v = Tensor<T>({cols});
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(res.v.data(), cols) = v;
    return res;
}

// Sigma estimate from the current u without touching it (evaluation passes).
template <typename T>
PowerIterResult<T> estimate_sigma(const Tensor<T>& w, const SpectralState<T>& state) {
    const auto [rows, cols] = matrix_view_dims(w);
    auto wm = w.mat(rows, cols);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> u(state.u.data(), rows);
    Eigen::Matrix<T, Eigen::Dynamic, 1> v = wm.transpose() * u;
    const T vn = v.norm();
    PowerIterResult<T> res;
    if (vn < detail::norm_floor<T>()) {
        res.degenerate = true;
        return res;
    }
    v /= vn;
    res.sigma = u.dot(wm * v);
    res.v = Tensor<T>({cols});
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(res.v.data(), cols) = v;
    return res;
}

// One power-iteration step, then W / sigma. The original tensor stays the
// trainable parameter; callers re-normalize on every training forward.
template <typename T>
std::pair<Tensor<T>, PowerIterResult<T>> spectral_normalize(const Tensor<T>& w, SpectralState<T>& state) {
    PowerIterResult<T> res = power_iterate(w, state, 1);
    if (res.degenerate) {
        std::cerr << "spectral_normalize: zero weight matrix, normalization skipped\n";
        return {w, res};
    }
    Tensor<T> out = w;
    out *= T{1} / res.sigma;
    return {std::move(out), res};
}

// Convolution whose kernel is divided by its spectral norm on every forward
// pass. Training passes advance the persistent u estimate exactly once;
// evaluation passes reuse it untouched. Gradients treat sigma as a function
// of the weight, so the division contributes -(g . w_n) u v^T / sigma.
template <typename T>
class SpectralConv2d : public nn::Conv2d<T> {
public:
    SpectralConv2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride,
                   std::int64_t pad, bool bias = true)
        : nn::Conv2d<T>(in_ch, out_ch, k, k, stride, pad, pad, bias) {
        state_.u = Tensor<T>({out_ch});
    }

    void init(Rng& rng, T stddev) {
        nn::Conv2d<T>::init(rng, stddev);
        state_ = SpectralState<T>::init(this->out_channels(), rng);
    }

    SpectralState<T>& spectral_state() { return state_; }

    void collect_state(const std::string& prefix, std::vector<nn::StateRef<T>>& out) override {
        out.push_back({prefix + ".u", &state_.u, &state_.iterations});
    }

protected:
    Tensor<T> run_forward(const Tensor<T>& x, const Tensor<T>& w, bool training, nn::Context<T>& ctx) override {
        PowerIterResult<T> pi = training ? power_iterate(w, state_, 1) : estimate_sigma(w, state_);
        Tensor<T> w_norm = w;
        if (!pi.degenerate) w_norm *= T{1} / pi.sigma;
        ctx.saved.push_back(std::move(w_norm));                                        // [1]
        ctx.saved.push_back(state_.u);                                                 // [2]
        ctx.saved.push_back(pi.degenerate ? Tensor<T>({1}) : std::move(pi.v));         // [3]
        ctx.saved.push_back(Tensor<T>({2}, std::vector<T>{pi.sigma, pi.degenerate ? T{1} : T{0}}));  // [4]
        return this->conv_with(x, ctx.saved[1]);
    }

    const Tensor<T>& effective_weight(const nn::Context<T>& ctx) const override { return ctx.saved[1]; }

    void apply_weight_grad(const Tensor<T>& g_wnorm, const nn::Context<T>& ctx) override {
        const Tensor<T>& w_norm = ctx.saved[1];
        const Tensor<T>& u = ctx.saved[2];
        const Tensor<T>& v = ctx.saved[3];
        const T sigma = ctx.saved[4][0];
        const bool degenerate = ctx.saved[4][1] != T{0};
        if (degenerate) {
            this->wgrad_ += g_wnorm;
            return;
        }
        T g_dot_wn{0};
        for (std::int64_t i = 0; i < g_wnorm.numel(); ++i) g_dot_wn += g_wnorm[i] * w_norm[i];
        const std::int64_t rows = u.numel(), cols = v.numel();
        auto wg = this->wgrad_.mat(rows, cols);
        auto gm = g_wnorm.mat(rows, cols);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> um(u.data(), rows);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> vm(v.data(), cols);
        wg.noalias() += (gm - g_dot_wn * (um * vm.transpose())) / sigma;
    }

private:
    SpectralState<T> state_;
};

}  // namespace c2p::sn
