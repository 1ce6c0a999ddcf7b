#include <catch2/catch.hpp>

#include <functional>

#include "c2p/nn.hpp"
#include "c2p/rng.hpp"
#include "support/gradcheck.hpp"

using namespace c2p;
using testsupport::numeric_gradient_error;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

// Scalar probe: weighted sum of the layer output, so d(probe)/d(output) is a
// fixed tensor and every output element feeds the check.
struct LayerProbe {
    nn::Layer<double>& layer;
    Tensor<double>& input;
    Tensor<double> surface;

    explicit LayerProbe(nn::Layer<double>& l, Tensor<double>& x, Rng& rng) : layer(l), input(x) {
        nn::Context<double> ctx;
        Tensor<double> y = layer.forward(x, ctx, false);
        surface = random_tensor(y.shape(), rng);
    }

    double operator()() {
        nn::Context<double> ctx;
        Tensor<double> y = layer.forward(input, ctx, false);
        double acc = 0.0;
        for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * surface[i];
        return acc;
    }

    // Analytic input gradient plus accumulated parameter grads.
    Tensor<double> backprop() {
        nn::Context<double> ctx;
        layer.forward(input, ctx, false);
        return layer.backward(surface, ctx, true);
    }
};

void check_layer_gradients(nn::Layer<double>& layer, Tensor<double> x, Rng& rng, double tol = 1e-6) {
    LayerProbe probe(layer, x, rng);
    std::vector<nn::ParamRef<double>> params;
    layer.collect_params("p", params);
    for (auto& p : params) p.grad->fill(0.0);
    Tensor<double> gx = probe.backprop();

    REQUIRE(numeric_gradient_error(x, gx, std::ref(probe)) < tol);
    for (auto& p : params) {
        INFO("param " << p.name);
        REQUIRE(numeric_gradient_error(*p.value, *p.grad, std::ref(probe)) < tol);
    }
}

}  // namespace

TEST_CASE("conv2d output shape and known value") {
    nn::Conv2d<double> conv(1, 1, 3, 1, 1);
    conv.weight().fill(1.0);
    Tensor<double> x({1, 1, 3, 3}, 1.0);
    nn::Context<double> ctx;
    Tensor<double> y = conv.forward(x, ctx, false);
    REQUIRE(y.shape() == Shape{1, 1, 3, 3});
    REQUIRE(y.at(0, 0, 1, 1) == Approx(9.0));  // full 3x3 window of ones
    REQUIRE(y.at(0, 0, 0, 0) == Approx(4.0));  // corner sees 2x2
}

TEST_CASE("conv2d strided shape math") {
    nn::Conv2d<double> conv(3, 8, 4, 2, 1);
    Rng rng(1);
    conv.init(rng, 0.1);
    Tensor<double> x = random_tensor({2, 3, 16, 16}, rng);
    nn::Context<double> ctx;
    REQUIRE(conv.forward(x, ctx, false).shape() == Shape{2, 8, 8, 8});
}

TEST_CASE("conv2d gradients") {
    Rng rng(11);
    nn::Conv2d<double> conv(2, 3, 3, 2, 1);
    conv.init(rng, 0.5);
    check_layer_gradients(conv, random_tensor({2, 2, 6, 6}, rng), rng);
}

TEST_CASE("conv_transpose2d doubles spatial size and matches gradients") {
    Rng rng(13);
    nn::ConvTranspose2d<double> up(3, 2, 3, 2, 1, 1);
    up.init(rng, 0.5);
    Tensor<double> x = random_tensor({2, 3, 5, 5}, rng);
    nn::Context<double> ctx;
    REQUIRE(up.forward(x, ctx, false).shape() == Shape{2, 2, 10, 10});
    check_layer_gradients(up, std::move(x), rng);
}

TEST_CASE("instance norm normalizes per sample and channel") {
    nn::InstanceNorm2d<double> norm(2);
    Rng rng(17);
    Tensor<double> x = random_tensor({2, 2, 4, 4}, rng, 3.0);
    nn::Context<double> ctx;
    Tensor<double> y = norm.forward(x, ctx, false);
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t c = 0; c < 2; ++c) {
            double mu = 0.0, var = 0.0;
            for (std::int64_t h = 0; h < 4; ++h)
                for (std::int64_t w = 0; w < 4; ++w) mu += y.at(n, c, h, w);
            mu /= 16.0;
            for (std::int64_t h = 0; h < 4; ++h)
                for (std::int64_t w = 0; w < 4; ++w) {
                    const double d = y.at(n, c, h, w) - mu;
                    var += d * d;
                }
            REQUIRE(mu == Approx(0.0).margin(1e-12));
            REQUIRE(var / 16.0 == Approx(1.0).epsilon(1e-3));
        }
}

TEST_CASE("instance norm on constant input stays finite") {
    nn::InstanceNorm2d<double> norm(1);
    Tensor<double> x({1, 1, 4, 4}, 0.0);
    nn::Context<double> ctx;
    Tensor<double> y = norm.forward(x, ctx, false);
    REQUIRE(all_finite(y));
    REQUIRE(y.abs_max() == 0.0);
}

TEST_CASE("instance norm gradients") {
    Rng rng(19);
    nn::InstanceNorm2d<double> norm(3);
    check_layer_gradients(norm, random_tensor({2, 3, 4, 4}, rng), rng, 1e-6);
}

namespace {

// inputs bounded away from the rectifier kink so central differences stay valid
Tensor<double> kink_safe_tensor(Shape shape, Rng& rng) {
    Tensor<double> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const double v = rng.normal();
        t[i] = v + (v >= 0.0 ? 0.1 : -0.1);
    }
    return t;
}

}  // namespace

TEST_CASE("activation gradients") {
    Rng rng(23);
    SECTION("relu") {
        nn::ReLU<double> relu;
        check_layer_gradients(relu, kink_safe_tensor({2, 3, 4, 4}, rng), rng);
    }
    SECTION("leaky relu") {
        nn::LeakyReLU<double> lrelu(0.2);
        check_layer_gradients(lrelu, kink_safe_tensor({2, 3, 4, 4}, rng), rng);
    }
    SECTION("tanh") {
        nn::Tanh<double> tanh_layer;
        check_layer_gradients(tanh_layer, random_tensor({2, 3, 4, 4}, rng), rng);
    }
}

TEST_CASE("reflection pad mirrors borders and gradients flow back") {
    nn::ReflectionPad2d<double> pad(1);
    Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    nn::Context<double> ctx;
    Tensor<double> y = pad.forward(x, ctx, false);
    REQUIRE(y.shape() == Shape{1, 1, 4, 4});
    REQUIRE(y.at(0, 0, 0, 0) == 4.0);  // reflect row 1, col 1
    REQUIRE(y.at(0, 0, 1, 1) == 1.0);

    Rng rng(29);
    check_layer_gradients(pad, random_tensor({1, 2, 3, 3}, rng), rng);
}

TEST_CASE("residual block is identity plus body and gradients match") {
    Rng rng(31);
    nn::ResidualBlock<double> block(4);
    block.init(rng, 0.3);
    check_layer_gradients(block, random_tensor({1, 4, 5, 5}, rng), rng, 1e-6);
}

TEST_CASE("sequential chains forward and backward") {
    Rng rng(37);
    nn::Sequential<double> net;
    net.emplace<nn::Conv2d<double>>("conv", 2, 4, 3, 1, 1).init(rng, 0.4);
    net.emplace<nn::InstanceNorm2d<double>>("norm", 4);
    net.emplace<nn::ReLU<double>>("relu");
    check_layer_gradients(net, random_tensor({2, 2, 5, 5}, rng), rng, 1e-6);

    REQUIRE(net.params().size() == 4);  // conv w/b + norm scale/shift
    REQUIRE(net.params("d")[0].name == "d.conv.weight");
}

TEST_CASE("forward is deterministic for identical input") {
    Rng rng(41);
    nn::Sequential<double> net;
    net.emplace<nn::Conv2d<double>>("conv", 3, 4, 3, 2, 1).init(rng, 0.2);
    net.emplace<nn::Tanh<double>>("tanh");
    Tensor<double> x = random_tensor({1, 3, 8, 8}, rng);
    nn::Context<double> c1, c2;
    Tensor<double> y1 = net.forward(x, c1, false);
    Tensor<double> y2 = net.forward(x, c2, false);
    REQUIRE(y1.vec() == y2.vec());
}
