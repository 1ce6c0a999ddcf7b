// Command-line front end for the cartoon -> photo translation pipeline:
// dataset preparation, training, batch translation, metric evaluation and
// score-curve plotting.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "c2p/chart.hpp"
#include "c2p/fetch.hpp"
#include "c2p/fid.hpp"
#include "c2p/imagedata.hpp"
#include "c2p/inception.hpp"
#include "c2p/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// every command refuses to clobber a non-empty --out unless forced
void guard_output_dir(const fs::path& out, bool force) {
    if (force) return;
    if (fs::exists(out) && fs::is_directory(out) && !fs::is_empty(out))
        throw std::runtime_error("output directory " + out.string() +
                                 " already exists and is not empty (use --force to overwrite)");
    if (fs::exists(out) && !fs::is_directory(out))
        throw std::runtime_error("output path " + out.string() + " exists (use --force to overwrite)");
}

void guard_output_file(const fs::path& out, bool force) {
    if (!force && fs::exists(out))
        throw std::runtime_error("output file " + out.string() + " already exists (use --force to overwrite)");
}

// resolved configuration goes to stdout and next to the outputs
void echo_config(const fs::path& out_dir, const std::string& command, const json& resolved) {
    json doc = {{"command", command}, {"config", resolved}};
    std::cout << doc.dump(2) << "\n";
    fs::create_directories(out_dir);
    std::ofstream f(out_dir / "run_config.json", std::ios::trunc);
    f << doc.dump(2) << "\n";
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && c2p::data::is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

// one image per batch so mixed sizes are fine; the extractor resizes anyway
c2p::fid::FIDStats stats_for_dir(const fs::path& dir, const c2p::fid::FeatureExtractor& extractor) {
    auto files = list_images(dir);
    std::size_t i = 0;
    return c2p::fid::compute_stats(
        [&]() -> std::optional<c2p::ImageBatch<float>> {
            if (i >= files.size()) return std::nullopt;
            c2p::Tensor<float> img = c2p::io::load_image(files[i++]);
            c2p::ImageBatch<float> b;
            b.data = c2p::Tensor<float>({1, img.dim(0), img.dim(1), img.dim(2)});
            for (std::int64_t k = 0; k < img.numel(); ++k) b.data[k] = c2p::data::to_model_range(img[k]);
            return b;
        },
        extractor);
}

bool is_video_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](char c) { return std::tolower(c); });
    return ext == ".avi" || ext == ".mp4" || ext == ".mkv" || ext == ".mov" || ext == ".webm" ||
           ext == ".y4m" || ext == ".mpg" || ext == ".mpeg";
}

// ---------------------------------------------------------------------------

struct PrepareArgs {
    std::string videos, images, out;
    std::string domain = "cartoon";
    double fps = 1.0;
    double trim = 0.05;
    double dark = 0.15;
    std::int64_t size = 128;
    std::int64_t train_count = 0;  // 0: everything not reserved for val
    std::int64_t val_count = 0;
    std::uint64_t seed = 0;
    std::string exclude_file;
    bool force = false;
};

int cmd_prepare(const PrepareArgs& a) {
    if (a.videos.empty() && a.images.empty())
        throw std::runtime_error("prepare needs --videos and/or --images");
    const fs::path out(a.out);
    guard_output_dir(out, a.force);

    echo_config(out, "prepare",
                json{{"videos", a.videos},
                     {"images", a.images},
                     {"out", a.out},
                     {"domain", a.domain},
                     {"fps", a.fps},
                     {"trim", a.trim},
                     {"dark", a.dark},
                     {"size", a.size},
                     {"train", a.train_count},
                     {"val", a.val_count},
                     {"seed", a.seed},
                     {"exclude", a.exclude_file}});

    const fs::path pool = a.images.empty() ? out / "extracted" : fs::path(a.images);

    if (!a.videos.empty()) {
        if (!fs::is_directory(a.videos)) throw std::runtime_error("video directory not found: " + a.videos);
        std::vector<fs::path> videos;
        for (const auto& e : fs::directory_iterator(a.videos))
            if (e.is_regular_file() && is_video_file(e.path())) videos.push_back(e.path());
        std::sort(videos.begin(), videos.end());
        if (videos.empty()) throw std::runtime_error("no video files in " + a.videos);

        c2p::data::ExtractOptions opt;
        opt.sample_rate = a.fps;
        opt.trim_fraction = a.trim;
        opt.dark_threshold = a.dark;

        json report = json::array();
        const fs::path frames_dir = a.images.empty() ? pool : out / "extracted";
        for (const auto& video : videos) {
            auto records = c2p::data::extract_frames(video, opt, frames_dir);
            std::int64_t kept = 0;
            for (const auto& r : records) {
                report.push_back(r);
                if (r.accepted) ++kept;
            }
            std::cout << video.filename().string() << ": " << kept << "/" << records.size()
                      << " frames kept\n";
        }
        std::ofstream rf(out / "extraction_report.json", std::ios::trunc);
        rf << report.dump(2) << "\n";
        if (!a.images.empty()) {
            // frames from videos and stills from --images feed one pool
            for (const auto& e : fs::directory_iterator(out / "extracted"))
                fs::copy_file(e.path(), fs::path(a.images) / e.path().filename(),
                              fs::copy_options::overwrite_existing);
        }
    }

    std::set<std::string> exclude;
    if (!a.exclude_file.empty()) {
        std::ifstream ex(a.exclude_file);
        if (!ex) throw std::runtime_error("cannot read exclusion list " + a.exclude_file);
        std::string line;
        while (std::getline(ex, line))
            if (!line.empty()) exclude.insert(line);
    }

    const auto domain = c2p::data::domain_from_string(a.domain);
    std::int64_t available = 0;
    for (const auto& e : fs::directory_iterator(pool))
        if (e.is_regular_file() && c2p::data::is_image_file(e.path()) &&
            !exclude.contains(e.path().filename().string()))
            ++available;
    const std::int64_t val = a.val_count;
    const std::int64_t train = a.train_count > 0 ? a.train_count : available - val;

    auto manifests = c2p::data::build_manifest(pool, domain, {train, val}, a.seed, out, a.size, exclude);
    std::cout << "train split: " << manifests.train.records.size() << " images, val split: "
              << manifests.val.records.size() << " images, size " << a.size << "x" << a.size << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string cartoon, real, out, config_file, resume;
    bool force = false;
};

int cmd_train(const TrainArgs& a, const c2p::train::TrainConfig& cfg) {
    cfg.validate();  // config errors fire before any data touches disk
    const fs::path out(a.out);
    if (a.resume.empty()) guard_output_dir(out, a.force);

    echo_config(out, "train", json(cfg));

    auto load_split = [&](const std::string& root, c2p::data::Split split) {
        const fs::path dir = fs::path(root) / c2p::data::to_string(split);
        return c2p::data::BatchLoader(dir, c2p::data::load_manifest(dir), cfg.batch_size,
                                      cfg.seed ^ (split == c2p::data::Split::train ? 0x7221 : 0x7AA1));
    };
    auto cartoon_train = load_split(a.cartoon, c2p::data::Split::train);
    auto real_train = load_split(a.real, c2p::data::Split::train);
    auto cartoon_val = load_split(a.cartoon, c2p::data::Split::val);
    auto real_val = load_split(a.real, c2p::data::Split::val);

    c2p::train::Trainer<float> trainer(cfg);
    if (!a.resume.empty()) {
        fs::path ckpt(a.resume);
        if (a.resume == "latest" || a.resume == "best") ckpt = out / "checkpoints" / a.resume;
        trainer.load_checkpoint(ckpt);
        std::cout << "resumed from " << ckpt.string() << " at step " << trainer.step() << ", epoch "
                  << trainer.epoch() << "\n";
    }

    auto result = trainer.fit(cartoon_train, real_train, cartoon_val, real_val, out, &std::cout);
    std::cout << "trained " << result.steps_run << " steps over " << result.epochs_run << " epochs, "
              << result.fid_log.size() << " validation scores logged\n";
    if (result.best)
        std::cout << "best weighted FID " << result.best->weighted << " at epoch " << result.best->epoch
                  << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TranslateArgs {
    std::string checkpoint, inputs, out;
    bool force = false;
};

int cmd_translate(const TranslateArgs& a) {
    guard_output_dir(a.out, a.force);
    echo_config(a.out, "translate",
                json{{"checkpoint", a.checkpoint}, {"inputs", a.inputs}, {"out", a.out}});
    const auto n = c2p::train::translate_directory(a.checkpoint, a.inputs, a.out);
    std::cout << "translated " << n << " images into " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct FidArgs {
    std::string generated, real, cartoon;
    std::string extractor = "test_linear";
    std::string weights_dir, weights_url, manifest_sha, blob_sha;
    std::int64_t dim = 8;
    std::uint64_t seed = 2024;
    double w_target = 0.8;
    double w_input = 0.2;
};

std::unique_ptr<c2p::fid::FeatureExtractor> build_extractor(const FidArgs& a) {
    if (a.extractor == "test_linear")
        return std::make_unique<c2p::fid::TestLinearExtractor>(a.dim, a.seed);
    if (a.extractor == "inception_v3_pool3") {
        if (a.weights_dir.empty())
            throw std::runtime_error("inception_v3_pool3 needs --weights (and optionally --weights-url)");
        if (!fs::exists(fs::path(a.weights_dir) / "manifest.json")) {
            if (a.weights_url.empty())
                throw std::runtime_error("no weights in " + a.weights_dir +
                                         " and no --weights-url to fetch them from");
            if (a.manifest_sha.empty() || a.blob_sha.empty())
                throw std::runtime_error("--weights-url needs --manifest-sha256 and --blob-sha256 pins");
            std::cout << "fetching backbone weights from " << a.weights_url << "\n";
            c2p::io::fetch_weight_dir(a.weights_url, a.weights_dir, a.manifest_sha, a.blob_sha);
        }
        return std::make_unique<c2p::fid::InceptionV3Extractor>(
            c2p::fid::InceptionV3Extractor::from_dir(a.weights_dir));
    }
    throw std::runtime_error("unknown extractor " + a.extractor);
}

int cmd_fid(const FidArgs& a) {
    auto extractor_ptr = build_extractor(a);
    const auto& extractor = *extractor_ptr;
    const auto gen_stats = stats_for_dir(a.generated, extractor);
    const auto real_stats = stats_for_dir(a.real, extractor);

    char buf[64];
    const double to_real = c2p::fid::frechet_distance(gen_stats, real_stats);
    std::snprintf(buf, sizeof(buf), "%.4f", to_real);
    std::cout << "FID(generated, real) = " << buf << "\n";

    if (!a.cartoon.empty()) {
        const auto cartoon_stats = stats_for_dir(a.cartoon, extractor);
        const double to_cartoon = c2p::fid::frechet_distance(gen_stats, cartoon_stats);
        std::snprintf(buf, sizeof(buf), "%.4f", to_cartoon);
        std::cout << "FID(generated, cartoon) = " << buf << "\n";
        const double weighted =
            c2p::fid::weighted_fid(gen_stats, real_stats, cartoon_stats, a.w_target, a.w_input);
        std::snprintf(buf, sizeof(buf), "%.4f", weighted);
        std::cout << "weighted FID (" << a.w_target << "/" << a.w_input << ") = " << buf << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct PlotArgs {
    std::string log, out, csv;
    bool force = false;
};

int cmd_plot_fid(const PlotArgs& a) {
    std::ifstream in(a.log);
    if (!in) throw std::runtime_error("cannot read log " + a.log);
    std::vector<c2p::chart::CurvePoint> points;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.contains("fid"))
            points.push_back({j.at("epoch").get<double>(), j.at("fid").get<double>()});
    }
    if (points.empty()) throw std::runtime_error("no FID entries in " + a.log);

    const fs::path png(a.out);
    const fs::path csv = a.csv.empty() ? fs::path(a.out).replace_extension(".csv") : fs::path(a.csv);
    guard_output_file(png, a.force);
    c2p::chart::render_curve(points, png, csv);
    std::cout << "wrote " << png.string() << " and " << csv.string() << " (" << points.size()
              << " points)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cartoon-to-photo translation toolkit"};
    app.require_subcommand(1);

    PrepareArgs pa;
    auto* prepare = app.add_subcommand("prepare", "curate a dataset from videos and/or image folders");
    prepare->add_option("--videos", pa.videos, "directory of source videos");
    prepare->add_option("--images", pa.images, "directory of source still images");
    prepare->add_option("--out", pa.out, "output dataset root")->required();
    prepare->add_option("--domain", pa.domain, "cartoon|real")->check(CLI::IsMember({"cartoon", "real"}));
    prepare->add_option("--fps", pa.fps, "frame sampling rate (frames per second)");
    prepare->add_option("--trim", pa.trim, "timeline fraction trimmed from each end");
    prepare->add_option("--dark", pa.dark, "mean-luminance acceptance threshold");
    prepare->add_option("--size", pa.size, "output image size");
    prepare->add_option("--train", pa.train_count, "train split size (0 = rest)");
    prepare->add_option("--val", pa.val_count, "val split size");
    prepare->add_option("--seed", pa.seed, "shuffle seed");
    prepare->add_option("--exclude", pa.exclude_file, "file with one source filename per line to skip");
    prepare->add_flag("--force", pa.force, "overwrite a non-empty output directory");

    TrainArgs ta;
    c2p::train::TrainConfig cfg;
    auto* train = app.add_subcommand("train", "adversarial training of both generator pairs");
    train->add_option("--cartoon", ta.cartoon, "prepared cartoon dataset root")->required();
    train->add_option("--real", ta.real, "prepared real-photo dataset root")->required();
    train->add_option("--out", ta.out, "run output directory")->required();
    train->add_option("--config", ta.config_file, "json config file (flags win over file values)");
    train->add_option("--resume", ta.resume, "latest|best|<checkpoint path>");
    train->add_flag("--force", ta.force, "overwrite a non-empty output directory");
    auto* o_epochs = train->add_option("--epochs", cfg.epochs, "training epochs");
    auto* o_lr = train->add_option("--lr", cfg.lr, "learning rate");
    auto* o_lambda = train->add_option("--lambda-cyc", cfg.lambda_cyc, "cycle loss weight");
    auto* o_batch = train->add_option("--batch", cfg.batch_size, "batch size");
    auto* o_interval = train->add_option("--fid-interval", cfg.fid_interval, "epochs between scores");
    auto* o_fid_dim = train->add_option("--fid-dim", cfg.fid_feature_dim, "test_linear feature width");
    auto* o_seed = train->add_option("--seed", cfg.seed, "master seed");
    auto* o_size = train->add_option("--image-size", cfg.image_size, "training image size");
    auto* o_gf = train->add_option("--gen-filters", cfg.gen.base_filters, "generator base filters");
    auto* o_rb = train->add_option("--res-blocks", cfg.gen.res_blocks, "generator residual blocks");
    auto* o_df = train->add_option("--disc-filters", cfg.disc.base_filters, "discriminator base filters");
    auto* o_dl = train->add_option("--disc-layers", cfg.disc.strided_layers, "discriminator stride-2 stages");
    auto* o_sn = train->add_flag("--spectral-norm,!--no-spectral-norm", cfg.disc.spectral_norm,
                                 "spectral normalization on discriminators");
    auto* o_decay = train->add_flag("--lr-decay,!--no-lr-decay", cfg.lr_decay, "linear decay, second half");
    auto* o_buffer = train->add_flag("--buffer,!--no-buffer", cfg.replay_buffer, "replay buffer for fakes");
    auto* o_cap = train->add_option("--buffer-capacity", cfg.replay_capacity, "replay buffer capacity");

    TranslateArgs xa;
    auto* translate = app.add_subcommand("translate", "apply the cartoon->photo generator to a directory");
    translate->add_option("--checkpoint", xa.checkpoint, "checkpoint directory")->required();
    translate->add_option("--inputs", xa.inputs, "directory of input images")->required();
    translate->add_option("--out", xa.out, "output directory")->required();
    translate->add_flag("--force", xa.force, "overwrite a non-empty output directory");

    FidArgs fa;
    auto* fid = app.add_subcommand("fid", "score a generated set against reference sets");
    fid->add_option("--generated", fa.generated, "directory of generated images")->required();
    fid->add_option("--real", fa.real, "directory of real-domain images")->required();
    fid->add_option("--cartoon", fa.cartoon, "directory of input-domain images (enables weighted score)");
    fid->add_option("--extractor", fa.extractor, "test_linear|inception_v3_pool3")
        ->check(CLI::IsMember({"test_linear", "inception_v3_pool3"}));
    fid->add_option("--weights", fa.weights_dir, "backbone weight directory (inception_v3_pool3)");
    fid->add_option("--weights-url", fa.weights_url, "base url to fetch the weight bundle from");
    fid->add_option("--manifest-sha256", fa.manifest_sha, "pinned digest of manifest.json");
    fid->add_option("--blob-sha256", fa.blob_sha, "pinned digest of tensors.bin");
    fid->add_option("--dim", fa.dim, "test_linear feature width");
    fid->add_option("--seed", fa.seed, "test_linear projection seed");
    fid->add_option("--w-target", fa.w_target, "weight of the real-domain distance");
    fid->add_option("--w-input", fa.w_input, "weight of the input-domain distance");

    PlotArgs ga;
    auto* plot = app.add_subcommand("plot-fid", "render the score-vs-epoch curve from a training log");
    plot->add_option("--log", ga.log, "train_log.ndjson path")->required();
    plot->add_option("--out", ga.out, "output chart png")->required();
    plot->add_option("--csv", ga.csv, "sidecar csv path (default: chart path with .csv)");
    plot->add_flag("--force", ga.force, "overwrite existing chart");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) return cmd_prepare(pa);
        if (train->parsed()) {
            if (!ta.config_file.empty()) {
                std::ifstream cf(ta.config_file);
                if (!cf) throw std::runtime_error("cannot read config file " + ta.config_file);
                json j;
                cf >> j;
                c2p::train::TrainConfig file_cfg = j.get<c2p::train::TrainConfig>();
                // flag > file > default
                if (!o_epochs->count()) cfg.epochs = file_cfg.epochs;
                if (!o_lr->count()) cfg.lr = file_cfg.lr;
                if (!o_lambda->count()) cfg.lambda_cyc = file_cfg.lambda_cyc;
                if (!o_batch->count()) cfg.batch_size = file_cfg.batch_size;
                if (!o_interval->count()) cfg.fid_interval = file_cfg.fid_interval;
                if (!o_fid_dim->count()) cfg.fid_feature_dim = file_cfg.fid_feature_dim;
                if (!o_seed->count()) cfg.seed = file_cfg.seed;
                if (!o_size->count()) cfg.image_size = file_cfg.image_size;
                if (!o_gf->count()) cfg.gen.base_filters = file_cfg.gen.base_filters;
                if (!o_rb->count()) cfg.gen.res_blocks = file_cfg.gen.res_blocks;
                if (!o_df->count()) cfg.disc.base_filters = file_cfg.disc.base_filters;
                if (!o_dl->count()) cfg.disc.strided_layers = file_cfg.disc.strided_layers;
                if (!o_sn->count()) cfg.disc.spectral_norm = file_cfg.disc.spectral_norm;
                if (!o_decay->count()) cfg.lr_decay = file_cfg.lr_decay;
                if (!o_buffer->count()) cfg.replay_buffer = file_cfg.replay_buffer;
                if (!o_cap->count()) cfg.replay_capacity = file_cfg.replay_capacity;
            }
            return cmd_train(ta, cfg);
        }
        if (translate->parsed()) return cmd_translate(xa);
        if (fid->parsed()) return cmd_fid(fa);
        if (plot->parsed()) return cmd_plot_fid(ga);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
