#include <catch2/catch.hpp>

#include <Eigen/SVD>

#include "c2p/specnorm.hpp"
#include "support/gradcheck.hpp"

using namespace c2p;

namespace {

// Independent oracle: full SVD straight from Eigen, no power iteration.
double svd_top_singular(const Tensor<double>& w) {
    const auto [rows, cols] = sn::matrix_view_dims(w);
    Eigen::MatrixXd m = w.mat(rows, cols);
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

Tensor<double> random_matrix(std::int64_t rows, std::int64_t cols, Rng& rng) {
    Tensor<double> w({rows, cols});
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = rng.normal();
    return w;
}

double unit_norm_error(const Tensor<double>& u) {
    double n = 0.0;
    for (std::int64_t i = 0; i < u.numel(); ++i) n += u[i] * u[i];
    return std::abs(std::sqrt(n) - 1.0);
}

}  // namespace

TEST_CASE("power iteration on isotropic matrix is exact after one step") {
    Tensor<double> w({4, 4});
    for (int i = 0; i < 4; ++i) w.at(i, i) = 3.0;
    Rng rng(3);
    auto state = sn::SpectralState<double>::init(4, rng);
    auto res = sn::power_iterate(w, state, 1);
    REQUIRE(res.sigma == Approx(3.0).margin(1e-12));
    REQUIRE(!res.degenerate);
    REQUIRE(state.iterations == 1);
}

TEST_CASE("power iteration converges to the dominant direction") {
    Tensor<double> w({2, 2});
    w.at(0, 0) = 2.0;
    w.at(1, 1) = 1.0;
    Rng rng(5);
    auto state = sn::SpectralState<double>::init(2, rng);
    auto res = sn::power_iterate(w, state, 60);
    REQUIRE(res.sigma == Approx(2.0).margin(1e-9));
    REQUIRE(std::abs(state.u[0]) == Approx(1.0).margin(1e-9));
    REQUIRE(std::abs(state.u[1]) == Approx(0.0).margin(1e-9));
}

TEST_CASE("power iteration matches SVD oracle on a random matrix") {
    Rng rng(7);
    Tensor<double> w = random_matrix(64, 48, rng);
    auto state = sn::SpectralState<double>::init(64, rng);
    auto res = sn::power_iterate(w, state, 200);
    const double truth = svd_top_singular(w);
    REQUIRE(testsupport::relative_error(res.sigma, truth) < 1e-3);
}

TEST_CASE("u stays unit norm across updates") {
    Rng rng(11);
    Tensor<double> w = random_matrix(16, 24, rng);
    auto state = sn::SpectralState<double>::init(16, rng);
    for (int i = 0; i < 25; ++i) {
        sn::power_iterate(w, state, 1);
        REQUIRE(unit_norm_error(state.u) < 1e-6);
    }
}

TEST_CASE("zero matrix reports degenerate and leaves u untouched") {
    Tensor<double> w({4, 6});
    Rng rng(13);
    auto state = sn::SpectralState<double>::init(4, rng);
    const auto u_before = state.u.vec();
    auto res = sn::power_iterate(w, state, 3);
    REQUIRE(res.degenerate);
    REQUIRE(res.sigma == 0.0);
    REQUIRE(state.u.vec() == u_before);

    auto [w_norm, info] = sn::spectral_normalize(w, state);
    REQUIRE(info.degenerate);
    REQUIRE(w_norm.vec() == w.vec());
}

TEST_CASE("normalized weight has unit spectral norm") {
    Rng rng(17);
    Tensor<double> w = random_matrix(24, 36, rng);
    auto state = sn::SpectralState<double>::init(24, rng);
    sn::power_iterate(w, state, 100);  // converge u first
    auto [w_norm, info] = sn::spectral_normalize(w, state);
    REQUIRE(!info.degenerate);
    REQUIRE(svd_top_singular(w_norm) == Approx(1.0).margin(1e-3));
}

TEST_CASE("normalization is a fixed point and scale invariant") {
    Rng rng(19);
    Tensor<double> w = random_matrix(12, 18, rng);
    auto state = sn::SpectralState<double>::init(12, rng);
    sn::power_iterate(w, state, 100);
    auto [w1, i1] = sn::spectral_normalize(w, state);

    SECTION("re-normalizing changes nothing") {
        auto [w2, i2] = sn::spectral_normalize(w1, state);
        double diff = 0.0;
        for (std::int64_t i = 0; i < w1.numel(); ++i) diff = std::max(diff, std::abs(w1[i] - w2[i]));
        REQUIRE(diff < 1e-3);
    }

    SECTION("scaling the input does not change the output") {
        Tensor<double> w_scaled = w;
        w_scaled *= 7.5;
        auto state2 = state;
        auto [ws, is] = sn::spectral_normalize(w_scaled, state2);
        double diff = 0.0;
        for (std::int64_t i = 0; i < w1.numel(); ++i) diff = std::max(diff, std::abs(w1[i] - ws[i]));
        REQUIRE(diff < 1e-6);
    }
}

TEST_CASE("conv weights reshape to out_channels rows") {
    Tensor<double> w({8, 4, 3, 3});
    auto [rows, cols] = sn::matrix_view_dims(w);
    REQUIRE(rows == 8);
    REQUIRE(cols == 36);
}

TEST_CASE("spectral conv gradients flow through sigma") {
    Rng rng(23);
    sn::SpectralConv2d<double> conv(2, 3, 3, 1, 1);
    conv.init(rng, 0.6);

    // converge u so the frozen-u gradient approximation is second order
    for (int i = 0; i < 200; ++i) sn::power_iterate(conv.weight(), conv.spectral_state(), 1);

    Tensor<double> x({1, 2, 5, 5});
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
    Tensor<double> surface;
    {
        nn::Context<double> ctx;
        Tensor<double> y = conv.forward(x, ctx, false);
        surface = Tensor<double>(y.shape());
        for (std::int64_t i = 0; i < surface.numel(); ++i) surface[i] = rng.normal();
    }

    auto eval = [&]() {
        nn::Context<double> ctx;
        Tensor<double> y = conv.forward(x, ctx, false);  // eval mode: u frozen
        double acc = 0.0;
        for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * surface[i];
        return acc;
    };

    std::vector<nn::ParamRef<double>> params;
    conv.collect_params("sn", params);
    for (auto& p : params) p.grad->fill(0.0);
    nn::Context<double> ctx;
    conv.forward(x, ctx, false);
    Tensor<double> gx = conv.backward(surface, ctx, true);

    REQUIRE(testsupport::numeric_gradient_error(x, gx, eval) < 1e-6);
    for (auto& p : params) {
        INFO("param " << p.name);
        REQUIRE(testsupport::numeric_gradient_error(*p.value, *p.grad, eval, 1e-6) < 1e-5);
    }
}

TEST_CASE("training forward advances the iteration counter once, eval never") {
    Rng rng(29);
    sn::SpectralConv2d<float> conv(1, 2, 3, 1, 1);
    conv.init(rng, 0.5);
    Tensor<float> x({1, 1, 4, 4});
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());

    const auto before = conv.spectral_state().iterations;
    nn::Context<float> ctx;
    conv.forward(x, ctx, true);
    REQUIRE(conv.spectral_state().iterations == before + 1);

    const auto u_snapshot = conv.spectral_state().u.vec();
    nn::Context<float> ctx2;
    conv.forward(x, ctx2, false);
    REQUIRE(conv.spectral_state().iterations == before + 1);
    REQUIRE(conv.spectral_state().u.vec() == u_snapshot);
}
