#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "c2p/imageio.hpp"
#include "c2p/models.hpp"
#include "c2p/rng.hpp"
#include "c2p/tensor.hpp"

namespace c2p::data {

namespace fs = std::filesystem;

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Domain { cartoon, real };
enum class Split { train, val };
enum class RejectReason { none, dark, head_trim, tail_trim };

inline const char* to_string(Domain d) { return d == Domain::cartoon ? "cartoon" : "real"; }
inline const char* to_string(Split s) { return s == Split::train ? "train" : "val"; }
inline const char* to_string(RejectReason r) {
    switch (r) {
        case RejectReason::none: return "none";
        case RejectReason::dark: return "dark";
        case RejectReason::head_trim: return "head_trim";
        case RejectReason::tail_trim: return "tail_trim";
    }
    return "?";
}

inline Domain domain_from_string(const std::string& s) {
    if (s == "cartoon") return Domain::cartoon;
    if (s == "real") return Domain::real;
    throw std::invalid_argument("unknown domain: " + s);
}
inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    throw std::invalid_argument("unknown split: " + s);
}
inline RejectReason reject_reason_from_string(const std::string& s) {
    if (s == "none") return RejectReason::none;
    if (s == "dark") return RejectReason::dark;
    if (s == "head_trim") return RejectReason::head_trim;
    if (s == "tail_trim") return RejectReason::tail_trim;
    throw std::invalid_argument("unknown reject reason: " + s);
}

inline DomainTag to_tag(Domain d) { return d == Domain::cartoon ? DomainTag::cartoon : DomainTag::real; }

// ---------------------------------------------------------------------------

struct FrameRecord {
    std::string source_id;
    std::int64_t frame_index = 0;
    double timestamp_s = 0.0;
    double mean_luminance = 0.0;
    bool accepted = false;
    RejectReason reject_reason = RejectReason::none;

    void validate() const {
        if (accepted && reject_reason != RejectReason::none)
            throw IntegrityError("record " + source_id + " accepted but carries a reject reason");
        if (mean_luminance < 0.0 || mean_luminance > 1.0)
            throw IntegrityError("record " + source_id + " luminance outside [0,1]");
    }
};

inline void to_json(nlohmann::json& j, const FrameRecord& r) {
    j = {{"source_id", r.source_id},     {"frame_index", r.frame_index},
         {"timestamp_s", r.timestamp_s}, {"mean_luminance", r.mean_luminance},
         {"accepted", r.accepted},       {"reject_reason", to_string(r.reject_reason)}};
}

inline void from_json(const nlohmann::json& j, FrameRecord& r) {
    j.at("source_id").get_to(r.source_id);
    j.at("frame_index").get_to(r.frame_index);
    j.at("timestamp_s").get_to(r.timestamp_s);
    j.at("mean_luminance").get_to(r.mean_luminance);
    j.at("accepted").get_to(r.accepted);
    r.reject_reason = reject_reason_from_string(j.at("reject_reason").get<std::string>());
}

// Accepted records map to files named <source_id>_f<frame_index>.png in the
// manifest's directory.
inline std::string record_filename(const FrameRecord& r) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "_f%06lld", static_cast<long long>(r.frame_index));
    return r.source_id + buf + ".png";
}

struct DatasetManifest {
    Domain domain = Domain::cartoon;
    std::vector<FrameRecord> records;
    std::int64_t image_size = 128;
    Split split = Split::train;

    std::vector<const FrameRecord*> accepted() const {
        std::vector<const FrameRecord*> out;
        for (const auto& r : records)
            if (r.accepted) out.push_back(&r);
        return out;
    }
};

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = {{"domain", to_string(m.domain)},
         {"split", to_string(m.split)},
         {"image_size", m.image_size},
         {"records", m.records}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
    m.domain = domain_from_string(j.at("domain").get<std::string>());
    m.split = split_from_string(j.at("split").get<std::string>());
    j.at("image_size").get_to(m.image_size);
    j.at("records").get_to(m.records);
}

inline void save_manifest(const fs::path& dir, const DatasetManifest& m) {
    fs::create_directories(dir);
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << nlohmann::json(m).dump(2) << "\n";
    if (!out) throw IntegrityError("cannot write manifest in " + dir.string());
}

inline DatasetManifest load_manifest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IntegrityError("missing manifest.json in " + dir.string());
    nlohmann::json j;
    in >> j;
    DatasetManifest m = j.get<DatasetManifest>();
    for (const auto& r : m.records) r.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Pixel-range plumbing. Stored images are [0,1]; the models consume [-1,1].

inline float to_model_range(float v01) { return 2.0f * v01 - 1.0f; }
inline float from_model_range(float v) { return (v + 1.0f) * 0.5f; }

inline std::uint8_t denormalize_u8(float model_value) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(from_model_range(model_value) * 255.0f), 0l, 255l));
}
inline float normalize_u8(std::uint8_t v) { return to_model_range(v / 255.0f); }

template <typename T>
Tensor<float> batch_to_image(const Tensor<T>& batch, std::int64_t n) {
    const std::int64_t C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
    Tensor<float> img({C, H, W});
    for (std::int64_t i = 0; i < C * H * W; ++i)
        img[i] = from_model_range(static_cast<float>(batch[n * C * H * W + i]));
    return img;
}

// ---------------------------------------------------------------------------
// Luminance screen (BT.601 weights) over a (3, H, W) image in [0,1].

struct DarkFilterResult {
    bool accepted = false;
    double mean_luminance = 0.0;
};

inline DarkFilterResult dark_frame_filter(const Tensor<float>& rgb, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw std::invalid_argument("dark threshold must lie in [0,1]");
    if (rgb.rank() != 3 || rgb.dim(0) != 3)
        throw ShapeError("dark filter expects a (3,H,W) image, got " + shape_str(rgb.shape()));
    const std::int64_t HW = rgb.dim(1) * rgb.dim(2);
    double lum = 0.0;
    for (std::int64_t i = 0; i < HW; ++i)
        lum += 0.299 * rgb[i] + 0.587 * rgb[HW + i] + 0.114 * rgb[2 * HW + i];
    lum /= static_cast<double>(HW);
    return {lum >= threshold, lum};
}

// ---------------------------------------------------------------------------
// Frame extraction: sample a video at a fixed rate, drop the head/tail
// fraction of the timeline, screen dark frames, write survivors as PNG.

struct ExtractOptions {
    double sample_rate = 1.0;     // frames per second of source time
    double trim_fraction = 0.05;  // cut from each end of the timeline
    double dark_threshold = 0.15;
};

inline std::vector<FrameRecord> extract_frames(const fs::path& video_path, const ExtractOptions& opt,
                                               const fs::path& out_dir) {
    if (opt.trim_fraction < 0.0 || opt.trim_fraction >= 0.5)
        throw std::invalid_argument("trim_fraction must lie in [0, 0.5)");
    if (opt.sample_rate <= 0.0) throw std::invalid_argument("sample_rate must be positive");

    io::VideoReader reader(video_path);
    const double fps = reader.fps();
    const double timeline = static_cast<double>(reader.frame_count() - 1) / fps;
    const double head_end = opt.trim_fraction * timeline;
    const double tail_start = (1.0 - opt.trim_fraction) * timeline;
    const std::string source_id = video_path.stem().string();

    std::vector<FrameRecord> records;
    std::int64_t next_sample = 0;
    std::int64_t target = 0;
    Tensor<float> frame;
    for (std::int64_t f = 0; reader.next(frame); ++f) {
        if (f != target) continue;
        while (target == f)  // dedup when sample_rate exceeds the native fps
            target = static_cast<std::int64_t>(std::llround(static_cast<double>(++next_sample) * fps / opt.sample_rate));

        FrameRecord rec;
        rec.source_id = source_id;
        rec.frame_index = f;
        rec.timestamp_s = static_cast<double>(f) / fps;
        const auto dark = dark_frame_filter(frame, opt.dark_threshold);
        rec.mean_luminance = dark.mean_luminance;
        if (rec.timestamp_s < head_end) {
            rec.reject_reason = RejectReason::head_trim;
        } else if (rec.timestamp_s > tail_start) {
            rec.reject_reason = RejectReason::tail_trim;
        } else if (!dark.accepted) {
            rec.reject_reason = RejectReason::dark;
        } else {
            rec.accepted = true;
            io::save_png(out_dir / record_filename(rec), frame);
        }
        records.push_back(std::move(rec));
    }

    const bool all_trimmed = std::none_of(records.begin(), records.end(), [](const FrameRecord& r) {
        return r.reject_reason != RejectReason::head_trim && r.reject_reason != RejectReason::tail_trim;
    });
    if (records.empty() || all_trimmed)
        throw CorpusError("no sampled frames remain after trimming " + video_path.string());
    return records;
}

// ---------------------------------------------------------------------------
// Manifest construction: deterministic shuffle, resize/crop, split, persist.

struct SplitCounts {
    std::int64_t train = 0;
    std::int64_t val = 0;
};

struct DomainManifests {
    DatasetManifest train;
    DatasetManifest val;
};

inline bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

inline DomainManifests build_manifest(const fs::path& image_dir, Domain domain, SplitCounts counts,
                                      std::uint64_t seed, const fs::path& out_root,
                                      std::int64_t image_size = 128,
                                      const std::set<std::string>& exclude = {}) {
    if (!fs::is_directory(image_dir)) throw CorpusError("image directory not found: " + image_dir.string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(image_dir))
        if (entry.is_regular_file() && is_image_file(entry.path()) &&
            !exclude.contains(entry.path().filename().string()))
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    const std::int64_t need = counts.train + counts.val;
    if (static_cast<std::int64_t>(files.size()) < need)
        throw CorpusError("corpus too small: " + image_dir.string() + " holds " +
                          std::to_string(files.size()) + " images, split needs " + std::to_string(counts.train) +
                          " train + " + std::to_string(counts.val) + " val = " + std::to_string(need));

    Rng rng(seed);
    const auto order = rng.permutation(files.size());

    DomainManifests out;
    out.train.domain = out.val.domain = domain;
    out.train.image_size = out.val.image_size = image_size;
    out.train.split = Split::train;
    out.val.split = Split::val;

    auto emit = [&](DatasetManifest& manifest, std::size_t start, std::int64_t count) {
        const fs::path split_dir = out_root / to_string(manifest.split);
        for (std::int64_t i = 0; i < count; ++i) {
            const fs::path& src = files[order[start + static_cast<std::size_t>(i)]];
            Tensor<float> img = io::resize_center_crop(io::load_image(src), image_size);
            FrameRecord rec;
            rec.source_id = src.stem().string();
            rec.frame_index = static_cast<std::int64_t>(order[start + static_cast<std::size_t>(i)]);
            rec.mean_luminance = dark_frame_filter(img, 0.0).mean_luminance;
            rec.accepted = true;
            io::save_png(split_dir / record_filename(rec), img);
            manifest.records.push_back(std::move(rec));
        }
        // manifest order must not depend on the shuffle; sort by identity
        std::sort(manifest.records.begin(), manifest.records.end(),
                  [](const FrameRecord& a, const FrameRecord& b) {
                      return std::tie(a.source_id, a.frame_index) < std::tie(b.source_id, b.frame_index);
                  });
        save_manifest(split_dir, manifest);
    };

    emit(out.train, 0, counts.train);
    emit(out.val, static_cast<std::size_t>(counts.train), counts.val);
    return out;
}

// ---------------------------------------------------------------------------
// Batched loader with per-epoch deterministic reshuffling. Batch order is a
// pure function of (shuffle_seed, epoch), so resuming mid-run needs no loader
// state beyond the position.

class BatchLoader {
public:
    BatchLoader(fs::path split_dir, DatasetManifest manifest, std::int64_t batch_size,
                std::uint64_t shuffle_seed)
        : dir_(std::move(split_dir)),
          manifest_(std::move(manifest)),
          batch_size_(batch_size),
          seed_(shuffle_seed) {
        if (batch_size_ < 1) throw std::invalid_argument("batch_size must be >= 1");
        for (const auto& r : manifest_.records)
            if (r.accepted) accepted_.push_back(&r);
        if (accepted_.empty()) throw CorpusError("manifest in " + dir_.string() + " holds no accepted images");
        for (const auto* r : accepted_) {
            const fs::path p = dir_ / record_filename(*r);
            if (!fs::exists(p)) throw IntegrityError("missing image file referenced by manifest: " + p.string());
        }
    }

    std::int64_t size() const { return static_cast<std::int64_t>(accepted_.size()); }
    std::int64_t batches_per_epoch() const { return (size() + batch_size_ - 1) / batch_size_; }

    // Deterministic random access; the last batch of an epoch may be short.
    ImageBatch<float> batch(std::int64_t epoch, std::int64_t index) const {
        if (index < 0 || index >= batches_per_epoch())
            throw std::out_of_range("batch index " + std::to_string(index) + " out of range");
        Rng rng(seed_ ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(epoch + 1)));
        const auto order = rng.permutation(accepted_.size());
        const std::int64_t begin = index * batch_size_;
        const std::int64_t count = std::min(batch_size_, size() - begin);

        const std::int64_t S = manifest_.image_size;
        ImageBatch<float> out;
        out.tag = to_tag(manifest_.domain);
        out.data = Tensor<float>({count, 3, S, S});
        for (std::int64_t b = 0; b < count; ++b) {
            const FrameRecord& rec = *accepted_[order[static_cast<std::size_t>(begin + b)]];
            const fs::path p = dir_ / record_filename(rec);
            Tensor<float> img;
            try {
                img = io::load_image(p);
            } catch (const io::DecodeError&) {
                throw IntegrityError("missing image file referenced by manifest: " + p.string());
            }
            if (img.dim(1) != S || img.dim(2) != S)
                throw IntegrityError("image " + p.string() + " is not " + std::to_string(S) + "x" +
                                     std::to_string(S));
            for (std::int64_t i = 0; i < 3 * S * S; ++i)
                out.data[b * 3 * S * S + i] = to_model_range(img[i]);
        }
        return out;
    }

    ImageBatch<float> next() {
        ImageBatch<float> b = batch(epoch_, index_);
        if (++index_ >= batches_per_epoch()) {
            index_ = 0;
            ++epoch_;
        }
        return b;
    }

    void seek(std::int64_t epoch, std::int64_t index) {
        epoch_ = epoch;
        index_ = index;
    }
    std::int64_t epoch() const { return epoch_; }
    std::int64_t index() const { return index_; }
    const DatasetManifest& manifest() const { return manifest_; }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    DatasetManifest manifest_;
    std::int64_t batch_size_;
    std::uint64_t seed_;
    std::vector<const FrameRecord*> accepted_;
    std::int64_t epoch_ = 0;
    std::int64_t index_ = 0;
};

}  // namespace c2p::data
