#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "c2p/nn.hpp"
#include "c2p/rng.hpp"
#include "c2p/specnorm.hpp"
#include "c2p/tensor.hpp"

namespace c2p {

enum class DomainTag { cartoon, real, generated };

inline const char* to_string(DomainTag t) {
    switch (t) {
        case DomainTag::cartoon: return "cartoon";
        case DomainTag::real: return "real";
        case DomainTag::generated: return "generated";
    }
    return "?";
}

// Universal currency between modules: NCHW pixels in [-1, 1].
template <typename T>
struct ImageBatch {
    Tensor<T> data;
    DomainTag tag = DomainTag::cartoon;
};

// Grid of raw per-patch scores from a discriminator, shape (N, 1, h', w').
// No squashing nonlinearity; the least-squares objectives consume it as is.
template <typename T>
using PatchScoreMap = Tensor<T>;

namespace models {

// ---------------------------------------------------------------------------
// Generator: c7s1-F, dF*2, dF*4, n x R(F*4), uF*2, uF, c7s1-3, tanh.
// Fully convolutional; output spatial size equals input spatial size.

struct GeneratorConfig {
    std::int64_t base_filters = 64;
    std::int64_t res_blocks = 6;
    std::int64_t channels = 3;
    double init_stddev = 0.02;

    static GeneratorConfig tiny() {
        GeneratorConfig c;
        c.base_filters = 4;
        c.res_blocks = 1;
        return c;
    }
};

template <typename T>
class Generator {
public:
    explicit Generator(const GeneratorConfig& cfg = {}, std::uint64_t seed = 0) : cfg_(cfg) {
        const std::int64_t f = cfg.base_filters;
        net_.template emplace<nn::ReflectionPad2d<T>>("in_pad", 3);
        convs_.push_back(&net_.template emplace<nn::Conv2d<T>>("in_conv", cfg.channels, f, 7, 1, 0));
        net_.template emplace<nn::InstanceNorm2d<T>>("in_norm", f);
        net_.template emplace<nn::ReLU<T>>("in_relu");

        convs_.push_back(&net_.template emplace<nn::Conv2d<T>>("down1_conv", f, 2 * f, 3, 2, 1));
        net_.template emplace<nn::InstanceNorm2d<T>>("down1_norm", 2 * f);
        net_.template emplace<nn::ReLU<T>>("down1_relu");
        convs_.push_back(&net_.template emplace<nn::Conv2d<T>>("down2_conv", 2 * f, 4 * f, 3, 2, 1));
        net_.template emplace<nn::InstanceNorm2d<T>>("down2_norm", 4 * f);
        net_.template emplace<nn::ReLU<T>>("down2_relu");

        for (std::int64_t r = 0; r < cfg.res_blocks; ++r)
            res_.push_back(&net_.template emplace<nn::ResidualBlock<T>>("res" + std::to_string(r + 1), 4 * f));

        deconvs_.push_back(&net_.template emplace<nn::ConvTranspose2d<T>>("up1_conv", 4 * f, 2 * f, 3, 2, 1, 1));
        net_.template emplace<nn::InstanceNorm2d<T>>("up1_norm", 2 * f);
        net_.template emplace<nn::ReLU<T>>("up1_relu");
        deconvs_.push_back(&net_.template emplace<nn::ConvTranspose2d<T>>("up2_conv", 2 * f, f, 3, 2, 1, 1));
        net_.template emplace<nn::InstanceNorm2d<T>>("up2_norm", f);
        net_.template emplace<nn::ReLU<T>>("up2_relu");

        net_.template emplace<nn::ReflectionPad2d<T>>("out_pad", 3);
        convs_.push_back(&net_.template emplace<nn::Conv2d<T>>("out_conv", f, cfg.channels, 7, 1, 0));
        net_.template emplace<nn::Tanh<T>>("out_tanh");

        reset_parameters(seed);
    }

    void reset_parameters(std::uint64_t seed) {
        Rng rng(seed);
        const T sd = static_cast<T>(cfg_.init_stddev);
        for (auto* c : convs_) c->init(rng, sd);
        for (auto* r : res_) r->init(rng, sd);
        for (auto* d : deconvs_) d->init(rng, sd);
    }

    ImageBatch<T> forward(const ImageBatch<T>& x, nn::Tape<T>* tape = nullptr, bool training = false) {
        if (x.data.rank() != 4 || x.data.dim(1) != cfg_.channels)
            throw ShapeError("generator expects (N," + std::to_string(cfg_.channels) + ",H,W), got " +
                             shape_str(x.data.shape()));
        if (x.data.dim(2) % 4 != 0 || x.data.dim(3) % 4 != 0)
            throw ShapeError("generator input " + shape_str(x.data.shape()) +
                             " spatial dims must be divisible by 4");
        nn::Context<T> local;
        nn::Context<T>& ctx = tape ? tape->emplace_back() : local;
        return ImageBatch<T>{net_.forward(x.data, ctx, training), DomainTag::generated};
    }

    // Gradient wrt the input batch; parameter grads accumulate unless frozen.
    Tensor<T> backward(const Tensor<T>& gy, nn::Tape<T>& tape, bool with_param_grads = true) {
        Tensor<T> g = net_.backward(gy, tape.back(), with_param_grads);
        tape.pop_back();
        return g;
    }

    nn::Sequential<T>& net() { return net_; }
    const GeneratorConfig& config() const { return cfg_; }

    std::int64_t parameter_count() {
        std::int64_t n = 0;
        for (auto& p : net_.params()) n += p.value->numel();
        return n;
    }

private:
    GeneratorConfig cfg_;
    nn::Sequential<T> net_;
    std::vector<nn::Conv2d<T>*> convs_;
    std::vector<nn::ResidualBlock<T>*> res_;
    std::vector<nn::ConvTranspose2d<T>*> deconvs_;
};

// ---------------------------------------------------------------------------
// PatchGAN discriminator: 4x4 kernels, `strided_layers` stride-2 stages, one
// stride-1 stage, then the 1-channel stride-1 head. Defaults give the 70x70
// receptive field. Filter counts double per stage, capped at 8x base.

struct DiscriminatorConfig {
    std::int64_t base_filters = 64;
    std::int64_t strided_layers = 3;
    std::int64_t channels = 3;
    bool spectral_norm = true;
    double leaky_slope = 0.2;
    double init_stddev = 0.02;

    static DiscriminatorConfig tiny() {
        DiscriminatorConfig c;
        c.base_filters = 8;
        c.strided_layers = 1;
        return c;
    }
};

template <typename T>
class Discriminator {
public:
    explicit Discriminator(const DiscriminatorConfig& cfg = {}, std::uint64_t seed = 0) : cfg_(cfg) {
        std::int64_t in_ch = cfg.channels;
        std::int64_t mult = 1;
        for (std::int64_t i = 0; i < cfg.strided_layers; ++i) {
            const std::int64_t out_ch = cfg.base_filters * mult;
            add_conv("conv" + std::to_string(i), in_ch, out_ch, /*stride=*/2);
            net_.template emplace<nn::LeakyReLU<T>>("lrelu" + std::to_string(i),
                                                    static_cast<T>(cfg.leaky_slope));
            in_ch = out_ch;
            mult = std::min<std::int64_t>(mult * 2, 8);
        }
        const std::int64_t penult = cfg.base_filters * mult;
        add_conv("conv_s1", in_ch, penult, /*stride=*/1);
        net_.template emplace<nn::LeakyReLU<T>>("lrelu_s1", static_cast<T>(cfg.leaky_slope));
        add_conv("out_conv", penult, 1, /*stride=*/1);
        reset_parameters(seed);
    }

    void reset_parameters(std::uint64_t seed) {
        Rng rng(seed);
        const T sd = static_cast<T>(cfg_.init_stddev);
        for (auto* c : plain_) c->init(rng, sd);
        for (auto* c : spectral_) c->init(rng, sd);
    }

    PatchScoreMap<T> forward(const ImageBatch<T>& x, nn::Tape<T>* tape = nullptr, bool training = false) {
        const std::int64_t rf = receptive_field();
        if (x.data.rank() != 4)
            throw ShapeError("discriminator expects rank-4 input, got " + shape_str(x.data.shape()));
        if (x.data.dim(2) < rf || x.data.dim(3) < rf)
            throw ShapeError("discriminator input " + shape_str(x.data.shape()) +
                             " smaller than its receptive field " + std::to_string(rf) + "x" +
                             std::to_string(rf));
        nn::Context<T> local;
        nn::Context<T>& ctx = tape ? tape->emplace_back() : local;
        return net_.forward(x.data, ctx, training);
    }

    Tensor<T> backward(const Tensor<T>& gy, nn::Tape<T>& tape, bool with_param_grads = true) {
        Tensor<T> g = net_.backward(gy, tape.back(), with_param_grads);
        tape.pop_back();
        return g;
    }

    // One output unit maps back to rf x rf input pixels.
    std::int64_t receptive_field() const {
        std::int64_t rf = 1;
        for (const auto& [k, s] : layer_geometry_reversed()) rf = (rf - 1) * s + k;
        return rf;
    }

    // Spatial size of the patch map for a given input size.
    std::pair<std::int64_t, std::int64_t> patch_map_size(std::int64_t h, std::int64_t w) const {
        auto geo = layer_geometry_reversed();
        std::reverse(geo.begin(), geo.end());
        for (const auto& [k, s] : geo) {
            h = nn::conv_out_dim(h, k, s, 1);
            w = nn::conv_out_dim(w, k, s, 1);
        }
        return {h, w};
    }

    nn::Sequential<T>& net() { return net_; }
    const DiscriminatorConfig& cfg() const { return cfg_; }

private:
    void add_conv(const std::string& name, std::int64_t in_ch, std::int64_t out_ch, std::int64_t stride) {
        if (cfg_.spectral_norm)
            spectral_.push_back(&net_.template emplace<sn::SpectralConv2d<T>>(name, in_ch, out_ch, 4, stride, 1));
        else
            plain_.push_back(&net_.template emplace<nn::Conv2d<T>>(name, in_ch, out_ch, 4, stride, 1));
    }

    std::vector<std::pair<std::int64_t, std::int64_t>> layer_geometry_reversed() const {
        std::vector<std::pair<std::int64_t, std::int64_t>> geo;
        geo.push_back({4, 1});  // head
        geo.push_back({4, 1});  // stride-1 stage
        for (std::int64_t i = 0; i < cfg_.strided_layers; ++i) geo.push_back({4, 2});
        return geo;
    }

    DiscriminatorConfig cfg_;
    nn::Sequential<T> net_;
    std::vector<nn::Conv2d<T>*> plain_;
    std::vector<sn::SpectralConv2d<T>*> spectral_;
};

template <typename T>
Generator<T> build_generator(std::uint64_t seed, const GeneratorConfig& cfg = {}) {
    return Generator<T>(cfg, seed);
}

template <typename T>
Discriminator<T> build_discriminator(std::uint64_t seed, const DiscriminatorConfig& cfg = {}) {
    return Discriminator<T>(cfg, seed);
}

}  // namespace models
}  // namespace c2p
