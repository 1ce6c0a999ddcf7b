#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <httplib.h>

// glibc's resolv.h (dragged in by the http client) leaks a `_res` macro that
// corrupts unrelated headers included later
#ifdef _res
#undef _res
#endif

#include "c2p/sha256.hpp"

namespace c2p::io {

class FetchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Downloads url into dest and verifies the pinned SHA-256 before the file is
// moved into place. Plain-http URLs only; anything else is treated as a local
// path and copied (still checksum-verified).
inline void fetch_file(const std::string& url, const std::filesystem::path& dest,
                       const std::string& sha256_hex_pin) {
    std::filesystem::create_directories(dest.parent_path());
    const std::filesystem::path tmp = dest.string() + ".partial";

    if (url.rfind("http://", 0) == 0) {
        const auto path_start = url.find('/', 7);
        const std::string host = url.substr(7, path_start - 7);
        const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
        httplib::Client client(("http://" + host).c_str());
        client.set_read_timeout(120, 0);
        auto res = client.Get(path.c_str());
        if (!res) throw FetchError("cannot reach " + url);
        if (res->status != 200)
            throw FetchError("fetching " + url + " failed with status " + std::to_string(res->status));
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
        if (!out) throw FetchError("cannot write " + tmp.string());
    } else {
        std::filesystem::copy_file(url, tmp, std::filesystem::copy_options::overwrite_existing);
    }

    const std::string actual = sha256_file(tmp);
    if (actual != sha256_hex_pin) {
        std::filesystem::remove(tmp);
        throw FetchError("checksum mismatch for " + url + ": expected " + sha256_hex_pin + ", got " + actual);
    }
    std::filesystem::rename(tmp, dest);
}

// Backbone weight bundles are two files under a base url: manifest.json and
// tensors.bin, each individually pinned.
inline void fetch_weight_dir(const std::string& base_url, const std::filesystem::path& dest_dir,
                             const std::string& manifest_sha256, const std::string& blob_sha256) {
    fetch_file(base_url + "/manifest.json", dest_dir / "manifest.json", manifest_sha256);
    fetch_file(base_url + "/tensors.bin", dest_dir / "tensors.bin", blob_sha256);
}

}  // namespace c2p::io
