#include <catch2/catch.hpp>

#include <fstream>

#include <opencv2/videoio.hpp>

#include "c2p/imagedata.hpp"
#include "support/tempdir.hpp"

using namespace c2p;
using namespace c2p::data;
using testsupport::TempDir;

namespace {

Tensor<float> uniform_image(std::int64_t h, std::int64_t w, float r, float g, float b) {
    Tensor<float> img({3, h, w});
    for (std::int64_t i = 0; i < h * w; ++i) {
        img[i] = r;
        img[h * w + i] = g;
        img[2 * h * w + i] = b;
    }
    return img;
}

// MJPG clip with per-frame gray levels (0..255); fps fixed by the caller.
void write_clip(const std::filesystem::path& path, const std::vector<int>& levels, double fps) {
    cv::VideoWriter writer(path.string(), cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), fps,
                           cv::Size(64, 48));
    REQUIRE(writer.isOpened());
    for (int level : levels) writer.write(cv::Mat(48, 64, CV_8UC3, cv::Scalar(level, level, level)));
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("dark filter unit values") {
    REQUIRE(dark_frame_filter(uniform_image(4, 4, 0, 0, 0), 0.15).accepted == false);
    REQUIRE(dark_frame_filter(uniform_image(4, 4, 0, 0, 0), 0.15).mean_luminance == 0.0);

    auto white = dark_frame_filter(uniform_image(4, 4, 1, 1, 1), 0.15);
    REQUIRE(white.accepted);
    REQUIRE(white.mean_luminance == Approx(1.0));

    auto gray = dark_frame_filter(uniform_image(4, 4, 0.10f, 0.10f, 0.10f), 0.15);
    REQUIRE(!gray.accepted);
    REQUIRE(gray.mean_luminance == Approx(0.10).margin(1e-6));

    REQUIRE_THROWS_AS(dark_frame_filter(uniform_image(2, 2, 0, 0, 0), 1.5), std::invalid_argument);
}

TEST_CASE("dark filter acceptance is monotone in the threshold") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto img = uniform_image(3, 3, static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                                 static_cast<float>(rng.uniform()));
        const double hi = rng.uniform();
        const double lo = rng.uniform() * hi;
        if (dark_frame_filter(img, hi).accepted) REQUIRE(dark_frame_filter(img, lo).accepted);
    }
}

TEST_CASE("8-bit round trip through the model range is exact") {
    for (int v = 0; v < 256; ++v)
        REQUIRE(denormalize_u8(normalize_u8(static_cast<std::uint8_t>(v))) == v);
    REQUIRE(to_model_range(0.5f) == 0.0f);
    REQUIRE(to_model_range(0.0f) == -1.0f);
    REQUIRE(to_model_range(1.0f) == 1.0f);
}

TEST_CASE("frame extraction applies the trim rule") {
    TempDir dir("extract");

    SECTION("10-frame clip at 1 fps, trim 0.2 keeps frames 2..7") {
        write_clip(dir / "clip.avi", std::vector<int>(10, 180), 1.0);
        ExtractOptions opt;
        opt.sample_rate = 1.0;
        opt.trim_fraction = 0.2;
        auto records = extract_frames(dir / "clip.avi", opt, dir / "frames");
        REQUIRE(records.size() == 10);
        int accepted = 0;
        for (const auto& r : records) {
            if (r.frame_index < 2) REQUIRE(r.reject_reason == RejectReason::head_trim);
            else if (r.frame_index > 7) REQUIRE(r.reject_reason == RejectReason::tail_trim);
            else {
                REQUIRE(r.accepted);
                ++accepted;
            }
            r.validate();
        }
        REQUIRE(accepted == 6);
        for (const auto& r : records)
            REQUIRE(std::filesystem::exists(dir / "frames" / record_filename(r)) == r.accepted);
    }

    SECTION("trim 0 rejects nothing positionally") {
        write_clip(dir / "clip0.avi", std::vector<int>(8, 200), 2.0);
        ExtractOptions opt;
        opt.sample_rate = 2.0;
        opt.trim_fraction = 0.0;
        auto records = extract_frames(dir / "clip0.avi", opt, dir / "frames0");
        for (const auto& r : records) {
            REQUIRE(r.reject_reason != RejectReason::head_trim);
            REQUIRE(r.reject_reason != RejectReason::tail_trim);
        }
    }

    SECTION("dark frames are rejected with the dark reason") {
        std::vector<int> levels(10, 200);
        levels[4] = 5;  // one nearly black frame mid-clip
        write_clip(dir / "dark.avi", levels, 1.0);
        ExtractOptions opt;
        opt.trim_fraction = 0.0;
        auto records = extract_frames(dir / "dark.avi", opt, dir / "frames_dark");
        REQUIRE(records[4].reject_reason == RejectReason::dark);
        REQUIRE(!records[4].accepted);
        REQUIRE(records[5].accepted);
    }

    SECTION("all frames trimmed is an empty-corpus error") {
        write_clip(dir / "tiny.avi", std::vector<int>(2, 200), 1.0);
        ExtractOptions opt;
        opt.trim_fraction = 0.49;
        REQUIRE_THROWS_AS(extract_frames(dir / "tiny.avi", opt, dir / "frames_tiny"), CorpusError);
    }

    SECTION("unreadable video is a decode error") {
        std::ofstream(dir / "junk.avi") << "not a video";
        REQUIRE_THROWS_AS(extract_frames(dir / "junk.avi", ExtractOptions{}, dir / "x"), io::DecodeError);
    }

    SECTION("invalid parameters are rejected up front") {
        ExtractOptions opt;
        opt.trim_fraction = 0.5;
        REQUIRE_THROWS_AS(extract_frames(dir / "clip.avi", opt, dir / "x"), std::invalid_argument);
        opt.trim_fraction = 0.1;
        opt.sample_rate = 0.0;
        REQUIRE_THROWS_AS(extract_frames(dir / "clip.avi", opt, dir / "x"), std::invalid_argument);
    }
}

TEST_CASE("manifest build splits deterministically") {
    TempDir dir("manifest");
    const auto img_dir = dir / "imgs";
    for (int i = 0; i < 10; ++i) {
        const float v = 0.1f + 0.08f * static_cast<float>(i);
        io::save_png(img_dir / ("img" + std::to_string(i) + ".png"), uniform_image(40, 30, v, v, v));
    }

    SECTION("same directory, seed and counts give byte-identical manifests") {
        auto first = build_manifest(img_dir, Domain::cartoon, {8, 2}, 7, dir / "out1", 16);
        auto second = build_manifest(img_dir, Domain::cartoon, {8, 2}, 7, dir / "out2", 16);
        REQUIRE(slurp(dir / "out1" / "train" / "manifest.json") ==
                slurp(dir / "out2" / "train" / "manifest.json"));
        REQUIRE(slurp(dir / "out1" / "val" / "manifest.json") == slurp(dir / "out2" / "val" / "manifest.json"));
        REQUIRE(first.train.records.size() == 8);
        REQUIRE(first.val.records.size() == 2);
        REQUIRE(second.val.split == Split::val);
    }

    SECTION("asking for more images than exist lists the counts") {
        REQUIRE_THROWS_WITH(build_manifest(img_dir, Domain::cartoon, {8, 3}, 7, dir / "out3", 16),
                            Catch::Contains("10 images") && Catch::Contains("8 train + 3 val"));
    }

    SECTION("splits are disjoint by source image and images are resized") {
        auto m = build_manifest(img_dir, Domain::real, {6, 4}, 3, dir / "out4", 16);
        std::set<std::string> train_ids;
        for (const auto& r : m.train.records) train_ids.insert(r.source_id);
        for (const auto& r : m.val.records) REQUIRE(!train_ids.contains(r.source_id));

        auto img = io::load_image(dir / "out4" / "train" / record_filename(m.train.records[0]));
        REQUIRE(img.dim(1) == 16);
        REQUIRE(img.dim(2) == 16);
    }

    SECTION("manifest json round trips") {
        auto m = build_manifest(img_dir, Domain::cartoon, {5, 2}, 11, dir / "out5", 16);
        auto reloaded = load_manifest(dir / "out5" / "train");
        REQUIRE(reloaded.records.size() == m.train.records.size());
        REQUIRE(reloaded.domain == Domain::cartoon);
        REQUIRE(reloaded.image_size == 16);
        for (std::size_t i = 0; i < reloaded.records.size(); ++i)
            REQUIRE(reloaded.records[i].source_id == m.train.records[i].source_id);
    }

    SECTION("exclusion list removes named files") {
        auto m = build_manifest(img_dir, Domain::cartoon, {5, 2}, 11, dir / "out6", 16, {"img3.png"});
        for (const auto& r : m.train.records) REQUIRE(r.source_id != "img3");
        for (const auto& r : m.val.records) REQUIRE(r.source_id != "img3");
    }
}

TEST_CASE("batch loader") {
    TempDir dir("loader");
    const auto img_dir = dir / "imgs";
    for (int i = 0; i < 6; ++i) {
        const float v = 0.2f + 0.1f * static_cast<float>(i);
        io::save_png(img_dir / ("p" + std::to_string(i) + ".png"), uniform_image(20, 20, v, v, v));
    }
    auto manifests = build_manifest(img_dir, Domain::real, {6, 0}, 1, dir / "ds", 16);
    const auto split_dir = dir / "ds" / "train";

    SECTION("partial final batch is kept") {
        BatchLoader loader(split_dir, manifests.train, 4, 99);
        REQUIRE(loader.batches_per_epoch() == 2);
        auto b0 = loader.next();
        auto b1 = loader.next();
        REQUIRE(b0.data.dim(0) == 4);
        REQUIRE(b1.data.dim(0) == 2);
        REQUIRE(b0.tag == DomainTag::real);
        REQUIRE(loader.epoch() == 1);
    }

    SECTION("values live in [-1, 1]") {
        BatchLoader loader(split_dir, manifests.train, 3, 5);
        auto b = loader.next();
        REQUIRE(b.data.max() <= 1.0f);
        REQUIRE(b.data.min() >= -1.0f);
    }

    SECTION("batch order is deterministic per (seed, epoch) and reshuffles across epochs") {
        BatchLoader a(split_dir, manifests.train, 2, 42);
        BatchLoader b(split_dir, manifests.train, 2, 42);
        REQUIRE(a.batch(0, 0).data.vec() == b.batch(0, 0).data.vec());
        REQUIRE(a.batch(3, 1).data.vec() == b.batch(3, 1).data.vec());

        bool any_diff = false;
        for (std::int64_t e = 1; e < 5 && !any_diff; ++e)
            any_diff = a.batch(0, 0).data.vec() != a.batch(e, 0).data.vec();
        REQUIRE(any_diff);
    }

    SECTION("a missing file is an integrity error naming the file") {
        BatchLoader loader(split_dir, manifests.train, 2, 7);
        const auto victim = split_dir / record_filename(manifests.train.records[2]);
        std::filesystem::remove(victim);
        REQUIRE_THROWS_WITH([&] { for (int i = 0; i < 3; ++i) loader.next(); }(),
                            Catch::Contains(victim.filename().string()));
        REQUIRE_THROWS_AS(BatchLoader(split_dir, manifests.train, 2, 7), IntegrityError);
    }
}
