#include <catch2/catch.hpp>

#include "c2p/rng.hpp"
#include "c2p/tensor.hpp"

using c2p::Rng;
using c2p::Tensor;

TEST_CASE("tensor shape and indexing") {
    Tensor<float> t({2, 3, 4, 5});
    REQUIRE(t.numel() == 120);
    t.at(1, 2, 3, 4) = 7.0f;
    REQUIRE(t[t.numel() - 1] == 7.0f);

    REQUIRE_THROWS_AS(t.reshaped({7, 7}), c2p::ShapeError);
    auto r = t.reshaped({6, 20});
    REQUIRE(r.dim(0) == 6);
    REQUIRE(r.at(5, 19) == 7.0f);
}

TEST_CASE("tensor arithmetic checks shapes") {
    Tensor<float> a({2, 2}, 1.0f);
    Tensor<float> b({2, 2}, 2.0f);
    a += b;
    REQUIRE(a[0] == 3.0f);
    Tensor<float> c({4});
    REQUIRE_THROWS_AS(a += c, c2p::ShapeError);
}

TEST_CASE("eigen view shares storage") {
    Tensor<double> t({2, 3});
    t.mat(2, 3)(1, 2) = 9.0;
    REQUIRE(t.at(1, 2) == 9.0);
}

TEST_CASE("rng reproducibility and fork independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng base(7);
    Rng f1 = base.fork(1);
    Rng f2 = base.fork(1);
    REQUIRE(f1.next_u64() != f2.next_u64());  // forks consume the parent stream
}

TEST_CASE("rng normal moments are sane") {
    Rng rng(123);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    REQUIRE(std::abs(sum / n) < 0.03);
    REQUIRE(sq / n == Approx(1.0).margin(0.05));
}

TEST_CASE("rng permutation is a bijection") {
    Rng rng(5);
    auto p = rng.permutation(257);
    std::vector<bool> seen(257, false);
    for (auto i : p) {
        REQUIRE(!seen[i]);
        seen[i] = true;
    }
}
