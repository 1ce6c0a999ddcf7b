#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "c2p/fid.hpp"
#include "c2p/imagedata.hpp"
#include "c2p/inception.hpp"
#include "c2p/losses.hpp"
#include "c2p/models.hpp"
#include "c2p/serialize.hpp"
#include "c2p/specnorm.hpp"

namespace c2p::train {

namespace fs = std::filesystem;

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------

struct TrainConfig {
    models::GeneratorConfig gen;
    models::DiscriminatorConfig disc;
    std::int64_t image_size = 128;

    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool lr_decay = true;  // linear to zero over the second half of training
    double lambda_cyc = 10.0;
    std::int64_t batch_size = 1;
    std::int64_t epochs = 1;

    std::int64_t fid_interval = 5;        // epochs between validation scores
    std::int64_t fid_feature_dim = 8;     // test_linear width at desk scale
    std::string fid_extractor = "test_linear";
    std::string fid_weights_dir;          // backbone weights for inception_v3_pool3
    double fid_weight_target = 0.8;
    double fid_weight_input = 0.2;

    bool replay_buffer = false;
    std::int64_t replay_capacity = 50;

    std::uint64_t seed = 0;

    void validate() const {
        if (lambda_cyc < 0.0) throw std::invalid_argument("lambda_cyc must be >= 0");
        if (lr <= 0.0) throw std::invalid_argument("lr must be positive");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
        if (fid_interval < 1) throw std::invalid_argument("fid_interval must be >= 1");
        if (replay_capacity < 1) throw std::invalid_argument("replay_capacity must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"image_size", c.image_size},
         {"gen_base_filters", c.gen.base_filters},
         {"gen_res_blocks", c.gen.res_blocks},
         {"gen_init_stddev", c.gen.init_stddev},
         {"disc_base_filters", c.disc.base_filters},
         {"disc_strided_layers", c.disc.strided_layers},
         {"disc_spectral_norm", c.disc.spectral_norm},
         {"disc_leaky_slope", c.disc.leaky_slope},
         {"disc_init_stddev", c.disc.init_stddev},
         {"lr", c.lr},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"adam_eps", c.adam_eps},
         {"lr_decay", c.lr_decay},
         {"lambda_cyc", c.lambda_cyc},
         {"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"fid_interval", c.fid_interval},
         {"fid_feature_dim", c.fid_feature_dim},
         {"fid_extractor", c.fid_extractor},
         {"fid_weights_dir", c.fid_weights_dir},
         {"fid_weight_target", c.fid_weight_target},
         {"fid_weight_input", c.fid_weight_input},
         {"replay_buffer", c.replay_buffer},
         {"replay_capacity", c.replay_capacity},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("image_size").get_to(c.image_size);
    j.at("gen_base_filters").get_to(c.gen.base_filters);
    j.at("gen_res_blocks").get_to(c.gen.res_blocks);
    j.at("gen_init_stddev").get_to(c.gen.init_stddev);
    j.at("disc_base_filters").get_to(c.disc.base_filters);
    j.at("disc_strided_layers").get_to(c.disc.strided_layers);
    j.at("disc_spectral_norm").get_to(c.disc.spectral_norm);
    j.at("disc_leaky_slope").get_to(c.disc.leaky_slope);
    j.at("disc_init_stddev").get_to(c.disc.init_stddev);
    j.at("lr").get_to(c.lr);
    j.at("beta1").get_to(c.beta1);
    j.at("beta2").get_to(c.beta2);
    j.at("adam_eps").get_to(c.adam_eps);
    j.at("lr_decay").get_to(c.lr_decay);
    j.at("lambda_cyc").get_to(c.lambda_cyc);
    j.at("batch_size").get_to(c.batch_size);
    j.at("epochs").get_to(c.epochs);
    j.at("fid_interval").get_to(c.fid_interval);
    j.at("fid_feature_dim").get_to(c.fid_feature_dim);
    j.at("fid_extractor").get_to(c.fid_extractor);
    if (j.contains("fid_weights_dir")) j.at("fid_weights_dir").get_to(c.fid_weights_dir);
    j.at("fid_weight_target").get_to(c.fid_weight_target);
    j.at("fid_weight_input").get_to(c.fid_weight_input);
    j.at("replay_buffer").get_to(c.replay_buffer);
    j.at("replay_capacity").get_to(c.replay_capacity);
    j.at("seed").get_to(c.seed);
}

// FNV-1a over the canonical (key-sorted) config serialization. Schedule
// length and scoring cadence are run control, not checkpoint identity, so a
// finished run can be resumed with a longer schedule.
inline std::string config_hash(const TrainConfig& c) {
    nlohmann::json j(c);
    j.erase("epochs");
    j.erase("fid_interval");
    j.erase("fid_weights_dir");  // a path, not an identity
    const std::string s = j.dump();
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Adam with bias correction; moments serialize alongside the parameters.

template <typename T>
class Adam {
public:
    Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(const std::vector<nn::ParamRef<T>>& params) {
        params_ = params;
        slots_.clear();
        for (const auto& p : params_) slots_.push_back({Tensor<T>(p.value->shape()), Tensor<T>(p.value->shape())});
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor<T>& p = *params_[i].value;
            const Tensor<T>& g = *params_[i].grad;
            Tensor<T>& m = slots_[i].m;
            Tensor<T>& v = slots_[i].v;
            for (std::int64_t k = 0; k < p.numel(); ++k) {
                m[k] = static_cast<T>(beta1_ * m[k] + (1.0 - beta1_) * g[k]);
                v[k] = static_cast<T>(beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k]);
                const double mhat = m[k] / bc1;
                const double vhat = v[k] / bc2;
                p[k] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    std::int64_t steps() const { return t_; }
    void set_steps(std::int64_t t) { t_ = t; }

    // moment tensors exposed for checkpointing, named after their parameters
    std::vector<std::pair<std::string, Tensor<T>*>> moments() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            out.push_back({"m." + params_[i].name, &slots_[i].m});
            out.push_back({"v." + params_[i].name, &slots_[i].v});
        }
        return out;
    }

private:
    struct Slot {
        Tensor<T> m, v;
    };
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<nn::ParamRef<T>> params_;
    std::vector<Slot> slots_;
};

// ---------------------------------------------------------------------------
// Image pool shown to the discriminators. With probability 1/2 a stored
// earlier fake is returned in place of the fresh one.

template <typename T>
class ReplayBuffer {
public:
    ReplayBuffer(std::int64_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {}

    Tensor<T> query(const Tensor<T>& fresh_batch) {
        Tensor<T> out = fresh_batch;
        const std::int64_t n = fresh_batch.dim(0);
        const std::int64_t image_elems = fresh_batch.numel() / n;
        for (std::int64_t i = 0; i < n; ++i) {
            Tensor<T> image({fresh_batch.dim(1), fresh_batch.dim(2), fresh_batch.dim(3)});
            for (std::int64_t k = 0; k < image_elems; ++k) image[k] = fresh_batch[i * image_elems + k];
            if (static_cast<std::int64_t>(pool_.size()) < capacity_) {
                pool_.push_back(std::move(image));
            } else if (rng_.uniform() < 0.5) {
                const auto slot = rng_.below(pool_.size());
                std::swap(pool_[slot], image);
                for (std::int64_t k = 0; k < image_elems; ++k) out[i * image_elems + k] = image[k];
            }
        }
        return out;
    }

    std::size_t size() const { return pool_.size(); }
    std::int64_t capacity() const { return capacity_; }
    Rng& rng() { return rng_; }
    std::vector<Tensor<T>>& pool() { return pool_; }

private:
    std::int64_t capacity_;
    Rng rng_;
    std::vector<Tensor<T>> pool_;
};

// ---------------------------------------------------------------------------

struct FidEntry {
    std::int64_t epoch = 0;
    std::int64_t step = 0;
    double weighted = 0.0;
    double to_real = 0.0;
    double to_cartoon = 0.0;
};

struct FitResult {
    std::int64_t epochs_run = 0;
    std::int64_t steps_run = 0;
    std::vector<FidEntry> fid_log;
    std::optional<FidEntry> best;
};

// Coordinates the two generator/discriminator pairs: cartoon -> photo
// (to_real) and photo -> cartoon (to_cartoon). The cycle terms tie them
// together: a cartoon pushed through to_real must come back through
// to_cartoon, and vice versa.
template <typename T = float>
class Trainer {
public:
    explicit Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) { build(); }

    const TrainConfig& config() const { return cfg_; }
    std::int64_t step() const { return step_; }
    std::int64_t epoch() const { return epoch_; }

    models::Generator<T>& gen_to_real() { return *g_real_; }
    models::Generator<T>& gen_to_cartoon() { return *g_cartoon_; }
    models::Discriminator<T>& disc_real() { return *d_real_; }
    models::Discriminator<T>& disc_cartoon() { return *d_cartoon_; }

    // One alternating update: generators first with frozen discriminators,
    // then both discriminators on (optionally replayed) fakes.
    losses::LossReport train_step(const ImageBatch<T>& cartoon, const ImageBatch<T>& real) {
        check_batch(cartoon, DomainTag::cartoon);
        check_batch(real, DomainTag::real);
        if (cartoon.data.dim(0) != real.data.dim(0))
            throw std::invalid_argument("cartoon and real batches must have equal batch size");

        nn::Tape<T> tape_g_real, tape_g_cartoon, tape_cycle_c, tape_cycle_r, tape_d_real, tape_d_cartoon;

        ImageBatch<T> fake_real = g_real_->forward(cartoon, &tape_g_real, true);
        ImageBatch<T> fake_cartoon = g_cartoon_->forward(real, &tape_g_cartoon, true);
        ImageBatch<T> rec_cartoon = g_cartoon_->forward(fake_real, &tape_cycle_c, true);
        ImageBatch<T> rec_real = g_real_->forward(fake_cartoon, &tape_cycle_r, true);

        PatchScoreMap<T> s_fake_real = d_real_->forward(fake_real, &tape_d_real, true);
        PatchScoreMap<T> s_fake_cartoon = d_cartoon_->forward(fake_cartoon, &tape_d_cartoon, true);

        losses::LossReport report;
        report.g_r_adv = losses::lsgan_generator_loss(s_fake_real);
        report.g_c_adv = losses::lsgan_generator_loss(s_fake_cartoon);
        report.forward_cyc = losses::reconstruction_loss(cartoon.data, rec_cartoon.data);
        report.backward_cyc = losses::reconstruction_loss(real.data, rec_real.data);

        // generator update, discriminators frozen
        g_real_->net().zero_grads();
        g_cartoon_->net().zero_grads();

        Tensor<T> g_fake_real = d_real_->backward(losses::lsgan_generator_loss_grad(s_fake_real),
                                                  tape_d_real, /*with_param_grads=*/false);
        Tensor<T> g_fake_cartoon = d_cartoon_->backward(losses::lsgan_generator_loss_grad(s_fake_cartoon),
                                                        tape_d_cartoon, false);

        const T lambda = static_cast<T>(cfg_.lambda_cyc);
        if (lambda > T{0}) {
            Tensor<T> g_rec_c = losses::reconstruction_loss_grad(cartoon.data, rec_cartoon.data);
            g_rec_c *= lambda;
            g_fake_real += g_cartoon_->backward(g_rec_c, tape_cycle_c, true);

            Tensor<T> g_rec_r = losses::reconstruction_loss_grad(real.data, rec_real.data);
            g_rec_r *= lambda;
            g_fake_cartoon += g_real_->backward(g_rec_r, tape_cycle_r, true);
        }

        g_real_->backward(g_fake_real, tape_g_real, true);
        g_cartoon_->backward(g_fake_cartoon, tape_g_cartoon, true);
        adam_g_->step(current_lr());

        // discriminator update on detached (and possibly replayed) fakes
        Tensor<T> d_input_fake_real = buffer_real_ ? buffer_real_->query(fake_real.data) : fake_real.data;
        Tensor<T> d_input_fake_cartoon =
            buffer_cartoon_ ? buffer_cartoon_->query(fake_cartoon.data) : fake_cartoon.data;

        d_real_->net().zero_grads();
        d_cartoon_->net().zero_grads();

        report.d_r = update_discriminator(*d_real_, real, ImageBatch<T>{d_input_fake_real, DomainTag::generated});
        report.d_c = update_discriminator(*d_cartoon_, cartoon,
                                          ImageBatch<T>{d_input_fake_cartoon, DomainTag::generated});
        adam_d_->step(current_lr());

        report = losses::total_objective(report, cfg_.lambda_cyc);
        if (!report.finite()) {
            std::ostringstream os;
            os << "non-finite loss at step " << step_ << ": g_r_adv=" << report.g_r_adv
               << " g_c_adv=" << report.g_c_adv << " d_r=" << report.d_r << " d_c=" << report.d_c
               << " forward_cyc=" << report.forward_cyc << " backward_cyc=" << report.backward_cyc;
            throw TrainingDiverged(os.str());
        }
        ++step_;
        return report;
    }

    // Full schedule with periodic validation scoring and checkpoint upkeep.
    FitResult fit(data::BatchLoader& cartoon_train, data::BatchLoader& real_train,
                  data::BatchLoader& cartoon_val, data::BatchLoader& real_val, const fs::path& out_dir,
                  std::ostream* progress = nullptr) {
        fs::create_directories(out_dir);
        std::ofstream log(out_dir / "train_log.ndjson", std::ios::app);
        if (!log) throw CheckpointError("cannot open training log in " + out_dir.string());

        FitResult result;
        const std::int64_t batches =
            std::min(cartoon_train.batches_per_epoch(), real_train.batches_per_epoch());
        while (epoch_ < cfg_.epochs) {
            for (std::int64_t b = start_batch_; b < batches; ++b) {
                auto report =
                    train_step(cartoon_train.batch(epoch_, b), real_train.batch(epoch_, b));
                write_log_line(log, report);
                ++result.steps_run;
            }
            start_batch_ = 0;

            if ((epoch_ + 1) % cfg_.fid_interval == 0) {
                FidEntry entry = evaluate_fid(cartoon_val, real_val);
                entry.epoch = epoch_ + 1;
                entry.step = step_;
                result.fid_log.push_back(entry);
                log << nlohmann::json({{"step", entry.step},
                                       {"epoch", entry.epoch},
                                       {"fid", entry.weighted},
                                       {"fid_to_real", entry.to_real},
                                       {"fid_to_cartoon", entry.to_cartoon}})
                           .dump()
                    << "\n";
                log.flush();
                if (!result.best || entry.weighted < result.best->weighted) {
                    result.best = entry;
                    save_checkpoint(out_dir / "checkpoints" / "best");
                }
                if (progress)
                    *progress << "epoch " << entry.epoch << " weighted FID " << entry.weighted << "\n";
            }
            ++epoch_;  // epoch complete; the checkpoint records the next one to run
            save_checkpoint(out_dir / "checkpoints" / "latest");
        }
        result.epochs_run = epoch_;
        return result;
    }

    // Weighted validation score of the current to_real generator.
    FidEntry evaluate_fid(data::BatchLoader& cartoon_val, data::BatchLoader& real_val) {
        std::unique_ptr<fid::FeatureExtractor> extractor = make_extractor();

        auto stats_of = [&](data::BatchLoader& loader, bool translate) {
            std::int64_t i = 0;
            return fid::compute_stats(
                [&]() -> std::optional<ImageBatch<float>> {
                    if (i >= loader.batches_per_epoch()) return std::nullopt;
                    ImageBatch<float> b = loader.batch(0, i++);
                    if (!translate) return b;
                    ImageBatch<T> in{b.data.template cast<T>(), b.tag};
                    return ImageBatch<float>{g_real_->forward(in).data.template cast<float>(),
                                             DomainTag::generated};
                },
                *extractor);
        };

        const fid::FIDStats gen_stats = stats_of(cartoon_val, true);
        const fid::FIDStats real_stats = stats_of(real_val, false);
        const fid::FIDStats cartoon_stats = stats_of(cartoon_val, false);

        FidEntry entry;
        entry.to_real = fid::frechet_distance(gen_stats, real_stats);
        entry.to_cartoon = fid::frechet_distance(gen_stats, cartoon_stats);
        entry.weighted = cfg_.fid_weight_target * entry.to_real + cfg_.fid_weight_input * entry.to_cartoon;
        return entry;
    }

    // ------------------------------------------------------------------
    // Checkpointing: written to a temp directory, then renamed into place.

    void save_checkpoint(const fs::path& dir) const {
        const fs::path tmp = dir.parent_path() / (dir.filename().string() + ".tmp");
        fs::remove_all(tmp);
        fs::create_directories(tmp);

        io::save_tensor_dir(tmp / "params", named_params());
        io::save_tensor_dir(tmp / "optim", named_moments());
        io::save_tensor_dir(tmp / "spectral", named_spectral());

        nlohmann::json state = {{"epoch", epoch_},
                                {"step", step_},
                                {"start_batch", start_batch_},
                                {"adam_g_steps", adam_g_->steps()},
                                {"adam_d_steps", adam_d_->steps()},
                                {"config_hash", config_hash(cfg_)},
                                {"spectral_iterations", spectral_iteration_map()}};
        if (buffer_real_) {
            state["buffer_real_rng"] = buffer_real_->rng().state();
            state["buffer_cartoon_rng"] = buffer_cartoon_->rng().state();
            save_buffer(tmp / "replay_real", *buffer_real_);
            save_buffer(tmp / "replay_cartoon", *buffer_cartoon_);
        }
        {
            std::ofstream sf(tmp / "state.json", std::ios::trunc);
            sf << state.dump(2) << "\n";
            if (!sf) throw CheckpointError("cannot write " + (tmp / "state.json").string());
            std::ofstream cf(tmp / "config.json", std::ios::trunc);
            cf << nlohmann::json(cfg_).dump(2) << "\n";
            if (!cf) throw CheckpointError("cannot write " + (tmp / "config.json").string());
        }
        fs::remove_all(dir);
        fs::rename(tmp, dir);
    }

    void load_checkpoint(const fs::path& dir) {
        if (!fs::is_directory(dir)) throw CheckpointError("checkpoint not found: " + dir.string());
        nlohmann::json state;
        {
            std::ifstream sf(dir / "state.json");
            if (!sf) throw CheckpointError("checkpoint missing state.json: " + dir.string());
            sf >> state;
        }
        if (state.at("config_hash").get<std::string>() != config_hash(cfg_))
            throw CheckpointError("checkpoint " + dir.string() +
                                  " was produced by a different configuration (hash mismatch)");

        restore_tensors(dir / "params", named_params());
        restore_tensors(dir / "optim", named_moments());
        restore_tensors(dir / "spectral", named_spectral());

        epoch_ = state.at("epoch").get<std::int64_t>();
        step_ = state.at("step").get<std::int64_t>();
        start_batch_ = state.at("start_batch").get<std::int64_t>();
        adam_g_->set_steps(state.at("adam_g_steps").get<std::int64_t>());
        adam_d_->set_steps(state.at("adam_d_steps").get<std::int64_t>());

        const auto iters = state.at("spectral_iterations").get<std::map<std::string, std::int64_t>>();
        for (auto& ref : spectral_refs())
            if (auto it = iters.find(ref.name); it != iters.end()) *ref.counter = it->second;

        if (buffer_real_ && state.contains("buffer_real_rng")) {
            buffer_real_->rng().set_state(state.at("buffer_real_rng").get<std::array<std::uint64_t, 4>>());
            buffer_cartoon_->rng().set_state(
                state.at("buffer_cartoon_rng").get<std::array<std::uint64_t, 4>>());
            load_buffer(dir / "replay_real", *buffer_real_);
            load_buffer(dir / "replay_cartoon", *buffer_cartoon_);
        }
    }

    // Evaluation-mode application of the cartoon -> photo generator.
    ImageBatch<T> translate(const ImageBatch<T>& cartoon) { return g_real_->forward(cartoon); }

private:
    void build() {
        cfg_.validate();
        Rng master(cfg_.seed);
        g_real_ = std::make_unique<models::Generator<T>>(cfg_.gen, master.fork(1).next_u64());
        g_cartoon_ = std::make_unique<models::Generator<T>>(cfg_.gen, master.fork(2).next_u64());
        d_real_ = std::make_unique<models::Discriminator<T>>(cfg_.disc, master.fork(3).next_u64());
        d_cartoon_ = std::make_unique<models::Discriminator<T>>(cfg_.disc, master.fork(4).next_u64());

        adam_g_ = std::make_unique<Adam<T>>(cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
        std::vector<nn::ParamRef<T>> g_params = g_real_->net().params("g_real");
        for (auto& p : g_cartoon_->net().params("g_cartoon")) g_params.push_back(p);
        adam_g_->attach(g_params);

        adam_d_ = std::make_unique<Adam<T>>(cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
        std::vector<nn::ParamRef<T>> d_params = d_real_->net().params("d_real");
        for (auto& p : d_cartoon_->net().params("d_cartoon")) d_params.push_back(p);
        adam_d_->attach(d_params);

        if (cfg_.replay_buffer) {
            buffer_real_ = std::make_unique<ReplayBuffer<T>>(cfg_.replay_capacity, master.fork(5).next_u64());
            buffer_cartoon_ =
                std::make_unique<ReplayBuffer<T>>(cfg_.replay_capacity, master.fork(6).next_u64());
        }
    }

    void check_batch(const ImageBatch<T>& b, DomainTag expected) const {
        if (b.data.rank() != 4) throw ShapeError("batch must be rank 4, got " + shape_str(b.data.shape()));
        if (b.tag != expected && b.tag != DomainTag::generated)
            throw std::invalid_argument(std::string("batch tagged ") + to_string(b.tag) + ", expected " +
                                        to_string(expected));
        const T lo = b.data.min(), hi = b.data.max();
        if (lo < T{-1} - T{1e-4} || hi > T{1} + T{1e-4})
            throw std::invalid_argument("batch values outside [-1,1]: min " + std::to_string(lo) + " max " +
                                        std::to_string(hi));
    }

    double current_lr() const {
        if (!cfg_.lr_decay || cfg_.epochs < 2) return cfg_.lr;
        const double progress = static_cast<double>(epoch_ + 1) / static_cast<double>(cfg_.epochs);
        return cfg_.lr * std::min(1.0, std::max(0.0, 2.0 * (1.0 - progress)));
    }

    double update_discriminator(models::Discriminator<T>& disc, const ImageBatch<T>& real_side,
                                const ImageBatch<T>& fake_side) {
        nn::Tape<T> tape_real, tape_fake;
        PatchScoreMap<T> s_real = disc.forward(real_side, &tape_real, true);
        PatchScoreMap<T> s_fake = disc.forward(fake_side, &tape_fake, true);
        const double loss = losses::lsgan_discriminator_loss(s_real, s_fake);
        auto [g_real, g_fake] = losses::lsgan_discriminator_loss_grads(s_real, s_fake);
        disc.backward(g_fake, tape_fake, true);
        disc.backward(g_real, tape_real, true);
        return loss;
    }

    void write_log_line(std::ofstream& log, const losses::LossReport& r) {
        log << nlohmann::json({{"step", step_},
                               {"epoch", epoch_},
                               {"g_r_adv", r.g_r_adv},
                               {"g_c_adv", r.g_c_adv},
                               {"d_r", r.d_r},
                               {"d_c", r.d_c},
                               {"forward_cyc", r.forward_cyc},
                               {"backward_cyc", r.backward_cyc},
                               {"total_g", r.total_g},
                               {"total_d", r.total_d}})
                   .dump()
            << "\n";
    }

    std::unique_ptr<fid::FeatureExtractor> make_extractor() const {
        if (cfg_.fid_extractor == "test_linear")
            return std::make_unique<fid::TestLinearExtractor>(cfg_.fid_feature_dim, cfg_.seed ^ 0xF1D);
        if (cfg_.fid_extractor == "inception_v3_pool3") {
            if (cfg_.fid_weights_dir.empty())
                throw std::invalid_argument("inception_v3_pool3 needs fid_weights_dir");
            return std::make_unique<fid::InceptionV3Extractor>(
                fid::InceptionV3Extractor::from_dir(cfg_.fid_weights_dir));
        }
        throw std::invalid_argument("unknown feature extractor: " + cfg_.fid_extractor);
    }

    std::vector<std::pair<std::string, const Tensor<float>*>> named_params() const {
        static_assert(std::is_same_v<T, float>, "checkpoints are float32");
        std::vector<std::pair<std::string, const Tensor<float>*>> out;
        for (auto& p : g_real_->net().params("g_real")) out.push_back({p.name, p.value});
        for (auto& p : g_cartoon_->net().params("g_cartoon")) out.push_back({p.name, p.value});
        for (auto& p : d_real_->net().params("d_real")) out.push_back({p.name, p.value});
        for (auto& p : d_cartoon_->net().params("d_cartoon")) out.push_back({p.name, p.value});
        return out;
    }

    std::vector<std::pair<std::string, const Tensor<float>*>> named_moments() const {
        std::vector<std::pair<std::string, const Tensor<float>*>> out;
        for (auto& [name, t] : adam_g_->moments()) out.push_back({"adam_g." + name, t});
        for (auto& [name, t] : adam_d_->moments()) out.push_back({"adam_d." + name, t});
        return out;
    }

    std::vector<nn::StateRef<T>> spectral_refs() const {
        std::vector<nn::StateRef<T>> out;
        d_real_->net().collect_state("d_real", out);
        d_cartoon_->net().collect_state("d_cartoon", out);
        return out;
    }

    std::vector<std::pair<std::string, const Tensor<float>*>> named_spectral() const {
        std::vector<std::pair<std::string, const Tensor<float>*>> out;
        for (auto& ref : spectral_refs()) out.push_back({ref.name, ref.value});
        return out;
    }

    std::map<std::string, std::int64_t> spectral_iteration_map() const {
        std::map<std::string, std::int64_t> out;
        for (auto& ref : spectral_refs()) out[ref.name] = *ref.counter;
        return out;
    }

    static void restore_tensors(const fs::path& dir,
                                std::vector<std::pair<std::string, const Tensor<float>*>> targets) {
        auto found = io::load_tensor_dir(dir);
        std::vector<std::pair<std::string, Shape>> expected;
        for (auto& [name, t] : targets) expected.push_back({name, t->shape()});
        bool mismatch = false;
        for (auto& [name, t] : targets) {
            auto it = found.find(name);
            if (it == found.end() || it->second.shape() != t->shape()) {
                mismatch = true;
                break;
            }
        }
        if (mismatch || found.size() != targets.size())
            throw CheckpointError("checkpoint tensors in " + dir.string() + " do not match the model:\n" +
                                  io::manifest_diff(expected, found));
        for (auto& [name, t] : targets) {
            // targets point at live parameter storage
            const_cast<Tensor<float>*>(t)->vec() = found.at(name).vec();
        }
    }

    static void save_buffer(const fs::path& dir, const ReplayBuffer<T>& buffer) {
        std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
        auto& pool = const_cast<ReplayBuffer<T>&>(buffer).pool();
        std::vector<std::string> names(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) {
            names[i] = "image." + std::to_string(i);
            tensors.push_back({names[i], &pool[i]});
        }
        io::save_tensor_dir(dir, tensors);
    }

    static void load_buffer(const fs::path& dir, ReplayBuffer<T>& buffer) {
        auto found = io::load_tensor_dir(dir);
        buffer.pool().clear();
        for (std::size_t i = 0; i < found.size(); ++i) {
            auto it = found.find("image." + std::to_string(i));
            if (it == found.end()) throw CheckpointError("replay buffer blob corrupt in " + dir.string());
            buffer.pool().push_back(std::move(it->second));
        }
    }

    TrainConfig cfg_;
    std::unique_ptr<models::Generator<T>> g_real_, g_cartoon_;
    std::unique_ptr<models::Discriminator<T>> d_real_, d_cartoon_;
    std::unique_ptr<Adam<T>> adam_g_, adam_d_;
    std::unique_ptr<ReplayBuffer<T>> buffer_real_, buffer_cartoon_;
    std::int64_t step_ = 0;
    std::int64_t epoch_ = 0;
    std::int64_t start_batch_ = 0;
};

// ---------------------------------------------------------------------------
// Batch translation of a directory of images through a checkpoint.

inline std::int64_t translate_directory(const fs::path& checkpoint, const fs::path& input_dir,
                                        const fs::path& output_dir) {
    if (!fs::is_directory(checkpoint)) throw CheckpointError("checkpoint not found: " + checkpoint.string());
    TrainConfig cfg;
    {
        std::ifstream cf(checkpoint / "config.json");
        if (!cf) throw CheckpointError("checkpoint missing config.json: " + checkpoint.string());
        nlohmann::json j;
        cf >> j;
        cfg = j.get<TrainConfig>();
    }
    models::Generator<float> gen(cfg.gen, 0);
    {
        auto found = io::load_tensor_dir(checkpoint / "params");
        std::vector<std::pair<std::string, Shape>> expected;
        for (auto& p : gen.net().params("g_real")) expected.push_back({p.name, p.value->shape()});
        for (auto& p : gen.net().params("g_real")) {
            auto it = found.find(p.name);
            if (it == found.end() || it->second.shape() != p.value->shape())
                throw CheckpointError("checkpoint params do not match the generator:\n" +
                                      io::manifest_diff(expected, found));
            p.value->vec() = it->second.vec();
        }
    }

    if (!fs::is_directory(input_dir)) throw io::DecodeError("input directory not found: " + input_dir.string());
    std::vector<fs::path> inputs;
    for (const auto& e : fs::directory_iterator(input_dir))
        if (e.is_regular_file() && data::is_image_file(e.path())) inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());

    fs::create_directories(output_dir);
    for (const auto& path : inputs) {
        Tensor<float> img = io::resize_center_crop(io::load_image(path), cfg.image_size);
        ImageBatch<float> batch;
        batch.data = Tensor<float>({1, 3, cfg.image_size, cfg.image_size});
        for (std::int64_t i = 0; i < img.numel(); ++i) batch.data[i] = data::to_model_range(img[i]);
        batch.tag = DomainTag::cartoon;
        ImageBatch<float> out = gen.forward(batch);  // eval mode
        io::save_png(output_dir / path.filename(), data::batch_to_image(out.data, 0));
    }
    return static_cast<std::int64_t>(inputs.size());
}

}  // namespace c2p::train
