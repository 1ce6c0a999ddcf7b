#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "c2p/tensor.hpp"

namespace c2p::io {

static_assert(std::endian::native == std::endian::little, "tensor blobs are little-endian");

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// On-disk parameter format: one raw blob of little-endian f32 data plus a
// JSON manifest mapping name -> {shape, dtype, offset (bytes into the blob)}.
inline constexpr const char* kBlobFile = "tensors.bin";
inline constexpr const char* kManifestFile = "manifest.json";

inline void save_tensor_dir(const std::filesystem::path& dir,
                            const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::object();
    std::ofstream blob(dir / kBlobFile, std::ios::binary | std::ios::trunc);
    if (!blob) throw IoError("cannot open " + (dir / kBlobFile).string() + " for writing");
    std::int64_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        manifest[name] = {{"shape", tensor->shape()}, {"dtype", "f32"}, {"offset", offset}};
        const auto bytes = static_cast<std::streamsize>(tensor->numel() * sizeof(float));
        blob.write(reinterpret_cast<const char*>(tensor->data()), bytes);
        offset += bytes;
    }
    blob.close();
    if (!blob) throw IoError("short write to " + (dir / kBlobFile).string());
    std::ofstream mf(dir / kManifestFile, std::ios::trunc);
    mf << manifest.dump(2) << "\n";
    if (!mf) throw IoError("cannot write " + (dir / kManifestFile).string());
}

inline std::map<std::string, Tensor<float>> load_tensor_dir(const std::filesystem::path& dir) {
    std::ifstream mf(dir / kManifestFile);
    if (!mf) throw IoError("missing tensor manifest " + (dir / kManifestFile).string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("corrupt tensor manifest " + (dir / kManifestFile).string() + ": " + e.what());
    }
    std::ifstream blob(dir / kBlobFile, std::ios::binary);
    if (!blob) throw IoError("missing tensor blob " + (dir / kBlobFile).string());

    std::map<std::string, Tensor<float>> out;
    for (const auto& [name, entry] : manifest.items()) {
        if (entry.at("dtype").get<std::string>() != "f32")
            throw IoError("tensor " + name + " has unsupported dtype " + entry.at("dtype").get<std::string>());
        Shape shape = entry.at("shape").get<Shape>();
        Tensor<float> t(shape);
        blob.seekg(entry.at("offset").get<std::int64_t>());
        blob.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!blob)
            throw IoError("tensor blob " + (dir / kBlobFile).string() + " truncated while reading " + name);
        out.emplace(name, std::move(t));
    }
    return out;
}

// Human-readable difference between an expected tensor set and what a
// directory actually holds; used to explain checkpoint load failures.
inline std::string manifest_diff(const std::vector<std::pair<std::string, Shape>>& expected,
                                 const std::map<std::string, Tensor<float>>& found) {
    std::ostringstream os;
    for (const auto& [name, shape] : expected) {
        auto it = found.find(name);
        if (it == found.end())
            os << "  missing: " << name << " " << shape_str(shape) << "\n";
        else if (it->second.shape() != shape)
            os << "  shape mismatch: " << name << " expected " << shape_str(shape) << " found "
               << shape_str(it->second.shape()) << "\n";
    }
    for (const auto& [name, tensor] : found) {
        bool known = false;
        for (const auto& [ename, eshape] : expected)
            if (ename == name) {
                known = true;
                break;
            }
        if (!known) os << "  unexpected: " << name << " " << shape_str(tensor.shape()) << "\n";
    }
    return os.str();
}

}  // namespace c2p::io
