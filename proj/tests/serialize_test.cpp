#include <catch2/catch.hpp>

#include "c2p/rng.hpp"
#include "c2p/serialize.hpp"
#include "support/tempdir.hpp"

using namespace c2p;
using testsupport::TempDir;

TEST_CASE("tensor directory round trip preserves bytes and shapes") {
    TempDir dir("serialize");
    Rng rng(1);
    Tensor<float> a({3, 4});
    Tensor<float> b({2, 3, 2, 2});
    for (std::int64_t i = 0; i < a.numel(); ++i) a[i] = static_cast<float>(rng.normal());
    for (std::int64_t i = 0; i < b.numel(); ++i) b[i] = static_cast<float>(rng.normal());

    io::save_tensor_dir(dir.path(), {{"net.alpha", &a}, {"net.beta", &b}});
    auto loaded = io::load_tensor_dir(dir.path());

    REQUIRE(loaded.size() == 2);
    REQUIRE(loaded.at("net.alpha").shape() == a.shape());
    REQUIRE(loaded.at("net.alpha").vec() == a.vec());
    REQUIRE(loaded.at("net.beta").vec() == b.vec());
}

TEST_CASE("loading a missing directory fails loudly") {
    REQUIRE_THROWS_AS(io::load_tensor_dir("/nonexistent/params"), io::IoError);
}

TEST_CASE("corrupt manifest is reported as corrupt") {
    TempDir dir("corrupt");
    {
        std::ofstream mf(dir / "manifest.json");
        mf << "{ not json";
        std::ofstream bf(dir / "tensors.bin");
    }
    REQUIRE_THROWS_WITH(io::load_tensor_dir(dir.path()), Catch::Contains("corrupt"));
}

TEST_CASE("truncated blob is detected") {
    TempDir dir("trunc");
    Tensor<float> a({8});
    io::save_tensor_dir(dir.path(), {{"x", &a}});
    std::filesystem::resize_file(dir / "tensors.bin", 4);
    REQUIRE_THROWS_WITH(io::load_tensor_dir(dir.path()), Catch::Contains("truncated"));
}

TEST_CASE("manifest diff names missing and mismatched tensors") {
    TempDir dir("diff");
    Tensor<float> a({2, 2});
    io::save_tensor_dir(dir.path(), {{"keep", &a}, {"extra", &a}});
    auto found = io::load_tensor_dir(dir.path());

    const std::string diff = io::manifest_diff({{"keep", {2, 2}}, {"gone", {4}}, {"keep2", {2, 3}}}, found);
    REQUIRE(diff.find("missing: gone") != std::string::npos);
    REQUIRE(diff.find("unexpected: extra") != std::string::npos);
    REQUIRE(diff.find("keep2") != std::string::npos);
    REQUIRE(diff.find("missing: keep ") == std::string::npos);
}
