#include <catch2/catch.hpp>

#include "c2p/models.hpp"
#include "support/gradcheck.hpp"

using namespace c2p;
using models::Discriminator;
using models::DiscriminatorConfig;
using models::Generator;
using models::GeneratorConfig;

namespace {

template <typename T>
ImageBatch<T> random_batch(Shape shape, Rng& rng, DomainTag tag = DomainTag::cartoon) {
    ImageBatch<T> b;
    b.data = Tensor<T>(std::move(shape));
    for (std::int64_t i = 0; i < b.data.numel(); ++i)
        b.data[i] = static_cast<T>(rng.uniform(-1.0, 1.0));
    b.tag = tag;
    return b;
}

}  // namespace

TEST_CASE("generator preserves spatial size") {
    GeneratorConfig cfg = GeneratorConfig::tiny();
    Generator<float> g(cfg, 1);
    Rng rng(1);

    auto b64 = random_batch<float>({1, 3, 64, 64}, rng);
    auto y = g.forward(b64);
    REQUIRE(y.data.shape() == Shape{1, 3, 64, 64});
    REQUIRE(y.tag == DomainTag::generated);

    auto b20 = random_batch<float>({2, 3, 20, 20}, rng);
    REQUIRE(g.forward(b20).data.shape() == Shape{2, 3, 20, 20});
}

TEST_CASE("generator rejects spatial dims not divisible by 4") {
    Generator<float> g(GeneratorConfig::tiny(), 1);
    Rng rng(2);
    auto bad = random_batch<float>({1, 3, 30, 30}, rng);
    REQUIRE_THROWS_AS(g.forward(bad), ShapeError);
}

TEST_CASE("generator output stays strictly inside [-1, 1]") {
    Generator<float> g(GeneratorConfig::tiny(), 3);
    Rng rng(3);
    auto y = g.forward(random_batch<float>({2, 3, 16, 16}, rng));
    REQUIRE(y.data.max() < 1.0f);
    REQUIRE(y.data.min() > -1.0f);
}

TEST_CASE("same seed gives identical parameter bytes") {
    Generator<float> a(GeneratorConfig::tiny(), 99);
    Generator<float> b(GeneratorConfig::tiny(), 99);
    auto pa = a.net().params();
    auto pb = b.net().params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i].value->vec() == pb[i].value->vec());
}

TEST_CASE("parameter count independent of input size, fixed by config") {
    Generator<float> g(GeneratorConfig::tiny(), 7);
    const auto count = g.parameter_count();
    Rng rng(7);
    g.forward(random_batch<float>({1, 3, 16, 16}, rng));
    g.forward(random_batch<float>({1, 3, 32, 32}, rng));
    REQUIRE(g.parameter_count() == count);

    GeneratorConfig full;  // 6 residual blocks, 64 base filters
    REQUIRE(full.res_blocks == 6);
}

TEST_CASE("zero-weight generator maps any input to the zero image") {
    GeneratorConfig cfg = GeneratorConfig::tiny();
    cfg.init_stddev = 0.0;
    Generator<float> g(cfg, 0);
    Rng rng(11);
    auto y = g.forward(random_batch<float>({1, 3, 16, 16}, rng));
    REQUIRE(y.data.abs_max() == 0.0f);
}

TEST_CASE("discriminator patch map shapes") {
    DiscriminatorConfig cfg;  // default 70x70 configuration
    Discriminator<float> d(cfg, 5);

    SECTION("128 -> 14x14") {
        Rng rng(5);
        auto scores = d.forward(random_batch<float>({2, 3, 128, 128}, rng));
        REQUIRE(scores.shape() == Shape{2, 1, 14, 14});
        auto [h, w] = d.patch_map_size(128, 128);
        REQUIRE(h == 14);
        REQUIRE(w == 14);
    }

    SECTION("receptive field is exactly 70") { REQUIRE(d.receptive_field() == 70); }

    SECTION("70x70 input: each unit sees the whole image") {
        Rng rng(6);
        auto scores = d.forward(random_batch<float>({1, 3, 70, 70}, rng));
        REQUIRE(scores.dim(0) == 1);
        REQUIRE(scores.dim(1) == 1);
        REQUIRE(d.receptive_field() >= 70);
    }

    SECTION("input below the receptive field is rejected") {
        Rng rng(7);
        auto small = random_batch<float>({1, 3, 64, 64}, rng);
        REQUIRE_THROWS_AS(d.forward(small), ShapeError);
    }

    SECTION("batch dimension carries through") {
        Rng rng(8);
        auto scores = d.forward(random_batch<float>({5, 3, 70, 70}, rng));
        REQUIRE(scores.dim(0) == 5);
    }
}

TEST_CASE("tiny discriminator has a smaller receptive field for toy inputs") {
    DiscriminatorConfig cfg = DiscriminatorConfig::tiny();
    Discriminator<float> d(cfg, 9);
    REQUIRE(d.receptive_field() == 16);
    Rng rng(9);
    auto scores = d.forward(random_batch<float>({1, 3, 32, 32}, rng));
    REQUIRE(scores.dim(1) == 1);
}

TEST_CASE("patch map shifts with the input away from borders") {
    DiscriminatorConfig cfg;
    cfg.spectral_norm = false;
    Discriminator<float> d(cfg, 21);
    Rng rng(21);

    // shift the content by the cumulative stride (8 px); the map moves 1 cell
    const std::int64_t S = 8, N = 128;
    Tensor<float> base({1, 3, N, N});
    for (std::int64_t i = 0; i < base.numel(); ++i) base[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor<float> shifted({1, 3, N, N});
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t h = 0; h < N; ++h)
            for (std::int64_t w = 0; w < N; ++w) {
                const std::int64_t sh = (h + S) % N, sw = (w + S) % N;
                shifted.at(0, c, sh, sw) = base.at(0, c, h, w);
            }

    auto s0 = d.forward(ImageBatch<float>{base, DomainTag::real});
    auto s1 = d.forward(ImageBatch<float>{shifted, DomainTag::real});
    const std::int64_t H = s0.dim(2);
    // compare only cells whose 70x70 receptive field avoids wrapped borders
    REQUIRE(H == 14);
    for (std::int64_t h = 3; h <= 9; ++h)
        for (std::int64_t w = 3; w <= 9; ++w)
            REQUIRE(s1.at(0, 0, h + 1, w + 1) == Approx(s0.at(0, 0, h, w)).margin(1e-4));
}

TEST_CASE("tiny generator end-to-end gradient check") {
    GeneratorConfig cfg = GeneratorConfig::tiny();
    Generator<double> g(cfg, 33);
    Rng rng(33);

    ImageBatch<double> x;
    x.data = Tensor<double>({1, 3, 16, 16});
    for (std::int64_t i = 0; i < x.data.numel(); ++i) x.data[i] = rng.uniform(-0.9, 0.9);

    Tensor<double> surface;
    {
        auto y = g.forward(x);
        surface = Tensor<double>(y.data.shape());
        for (std::int64_t i = 0; i < surface.numel(); ++i) surface[i] = rng.normal();
    }

    auto eval = [&]() {
        auto y = g.forward(x);
        double acc = 0.0;
        for (std::int64_t i = 0; i < y.data.numel(); ++i) acc += y.data[i] * surface[i];
        return acc;
    };

    auto params = g.net().params();
    g.net().zero_grads();
    nn::Tape<double> tape;
    g.forward(x, &tape, true);
    g.backward(surface, tape, true);

    // spot-check a spread of parameter tensors; full sweep is too slow here
    for (std::size_t i = 0; i < params.size(); i += 5) {
        INFO("param " << params[i].name);
        REQUIRE(testsupport::numeric_gradient_error(*params[i].value, *params[i].grad, eval) < 1e-3);
    }
}
