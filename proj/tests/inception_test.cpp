#include <catch2/catch.hpp>

#include <thread>

#include <httplib.h>

#include "c2p/fetch.hpp"
#include "c2p/inception.hpp"
#include "c2p/serialize.hpp"
#include "c2p/sha256.hpp"
#include "support/tempdir.hpp"

using namespace c2p;
using testsupport::TempDir;

TEST_CASE("sha256 known vectors") {
    REQUIRE(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    REQUIRE(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    REQUIRE(io::sha256_hex(std::string(1000000, 'a')) ==
            "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("backbone graph produces 2048-wide features") {
    auto weights = fid::iv3::random_weights(7);
    fid::InceptionV3Extractor extractor(std::move(weights));
    REQUIRE(extractor.dim() == 2048);
    REQUIRE(extractor.id() == "inception_v3_pool3");

    Rng rng(3);
    Tensor<float> x({2, 3, 96, 96});
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal() * 0.5);
    const Eigen::MatrixXd f = extractor.extract_prepped(x);
    REQUIRE(f.rows() == 2);
    REQUIRE(f.cols() == 2048);
    REQUIRE(f.allFinite());
    REQUIRE(f == extractor.extract_prepped(x));  // deterministic
}

TEST_CASE("backbone weight loading validates the manifest") {
    auto weights = fid::iv3::random_weights(9);
    weights.erase("Mixed_7c.branch_pool.conv.weight");
    REQUIRE_THROWS_WITH(fid::InceptionV3Extractor(std::move(weights)), Catch::Contains("Mixed_7c"));

    auto misshaped = fid::iv3::random_weights(9);
    misshaped.at("Conv2d_1a_3x3.conv.weight") = Tensor<float>({1, 1, 1, 1});
    REQUIRE_THROWS_AS(fid::InceptionV3Extractor(std::move(misshaped)), io::IoError);
}

TEST_CASE("weight bundles fetch over http with pinned checksums") {
    TempDir dir("fetch");
    // a small stand-in bundle; the transport does not care about contents
    Tensor<float> t({4, 2});
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i);
    io::save_tensor_dir(dir / "served", {{"w", &t}});

    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    };
    const std::string manifest_body = slurp(dir / "served" / "manifest.json");
    const std::string blob_body = slurp(dir / "served" / "tensors.bin");

    httplib::Server server;
    server.Get("/weights/manifest.json", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(manifest_body, "application/json");
    });
    server.Get("/weights/tensors.bin", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(blob_body, "application/octet-stream");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const std::string base = "http://127.0.0.1:" + std::to_string(port) + "/weights";

    SECTION("correct pins succeed and the bundle loads") {
        io::fetch_weight_dir(base, dir / "got", io::sha256_hex(manifest_body), io::sha256_hex(blob_body));
        auto loaded = io::load_tensor_dir(dir / "got");
        REQUIRE(loaded.at("w").vec() == t.vec());
    }

    SECTION("a wrong pin is rejected and nothing is left behind") {
        REQUIRE_THROWS_WITH(io::fetch_weight_dir(base, dir / "bad", std::string(64, '0'),
                                                 io::sha256_hex(blob_body)),
                            Catch::Contains("checksum mismatch"));
        REQUIRE(!std::filesystem::exists(dir / "bad" / "manifest.json"));
    }

    server.stop();
    serve_thread.join();
}
