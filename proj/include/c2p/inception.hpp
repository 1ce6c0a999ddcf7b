#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "c2p/fid.hpp"
#include "c2p/nn.hpp"
#include "c2p/serialize.hpp"
#include "c2p/sha256.hpp"
#include "c2p/tensor.hpp"

namespace c2p::fid {

// Inference-only Inception-v3 trunk up to the final 2048-wide pooling,
// matching the torchvision layout (same module and tensor names, so a weight
// export maps one to one). Inputs are resized to 299 and normalized with the
// backbone's channel statistics; any input of at least 75 px works since the
// head pools globally.

namespace iv3 {

inline constexpr double kBnEps = 1e-3;
inline constexpr std::int64_t kFeatureDim = 2048;
inline constexpr std::int64_t kResize = 299;
inline constexpr float kMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kStd[3] = {0.229f, 0.224f, 0.225f};

using Weights = std::map<std::string, Tensor<float>>;

inline const Tensor<float>& need(const Weights& w, const std::string& name) {
    auto it = w.find(name);
    if (it == w.end()) throw io::IoError("backbone weights missing tensor " + name);
    return it->second;
}

inline Tensor<float> conv_nobias(const Tensor<float>& x, const Tensor<float>& w, std::int64_t stride,
                                 std::int64_t ph, std::int64_t pw) {
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t out_ch = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::int64_t Ho = nn::conv_out_dim(H, kh, stride, ph);
    const std::int64_t Wo = nn::conv_out_dim(W, kw, stride, pw);
    Tensor<float> y({N, out_ch, Ho, Wo});
    Tensor<float> cols({C * kh * kw, Ho * Wo});
    auto wm = w.mat(out_ch, C * kh * kw);
    for (std::int64_t n = 0; n < N; ++n) {
        nn::im2col(x.data() + n * C * H * W, C, H, W, kh, kw, stride, stride, ph, pw, cols.data());
        auto cm = cols.mat(C * kh * kw, Ho * Wo);
        Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> ym(
            y.data() + n * out_ch * Ho * Wo, out_ch, Ho * Wo);
        ym.noalias() = wm * cm;
    }
    return y;
}

inline void bn_relu_inplace(Tensor<float>& x, const Tensor<float>& gamma, const Tensor<float>& beta,
                            const Tensor<float>& mean, const Tensor<float>& var) {
    const std::int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            const float scale = gamma[c] / std::sqrt(var[c] + static_cast<float>(kBnEps));
            const float shift = beta[c] - mean[c] * scale;
            float* p = x.data() + (n * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i) {
                const float v = p[i] * scale + shift;
                p[i] = v > 0.0f ? v : 0.0f;
            }
        }
}

// BasicConv2d: convolution without bias, batch norm, rectifier.
inline Tensor<float> basic_conv(const Weights& w, const std::string& name, const Tensor<float>& x,
                                std::int64_t stride = 1, std::int64_t ph = 0, std::int64_t pw = 0) {
    Tensor<float> y = conv_nobias(x, need(w, name + ".conv.weight"), stride, ph, pw);
    bn_relu_inplace(y, need(w, name + ".bn.weight"), need(w, name + ".bn.bias"),
                    need(w, name + ".bn.running_mean"), need(w, name + ".bn.running_var"));
    return y;
}

inline Tensor<float> pool3x3(const Tensor<float>& x, std::int64_t stride, std::int64_t pad, bool max_pool) {
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t Ho = nn::conv_out_dim(H, 3, stride, pad);
    const std::int64_t Wo = nn::conv_out_dim(W, 3, stride, pad);
    Tensor<float> y({N, C, Ho, Wo});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            const float* src = x.data() + (n * C + c) * H * W;
            float* dst = y.data() + (n * C + c) * Ho * Wo;
            for (std::int64_t i = 0; i < Ho; ++i)
                for (std::int64_t j = 0; j < Wo; ++j) {
                    float acc = max_pool ? -std::numeric_limits<float>::infinity() : 0.0f;
                    for (std::int64_t di = 0; di < 3; ++di)
                        for (std::int64_t dj = 0; dj < 3; ++dj) {
                            const std::int64_t si = i * stride - pad + di;
                            const std::int64_t sj = j * stride - pad + dj;
                            const bool inside = si >= 0 && si < H && sj >= 0 && sj < W;
                            const float v = inside ? src[si * W + sj] : 0.0f;
                            if (max_pool) {
                                if (inside) acc = std::max(acc, v);
                            } else {
                                acc += v;  // zero padding counts in the average
                            }
                        }
                    dst[i * Wo + j] = max_pool ? acc : acc / 9.0f;
                }
        }
    return y;
}

inline Tensor<float> concat_channels(const std::vector<Tensor<float>>& parts) {
    const std::int64_t N = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
    std::int64_t C = 0;
    for (const auto& p : parts) C += p.dim(1);
    Tensor<float> y({N, C, H, W});
    for (std::int64_t n = 0; n < N; ++n) {
        std::int64_t at = 0;
        for (const auto& p : parts) {
            const std::int64_t pc = p.dim(1);
            std::memcpy(y.data() + (n * C + at) * H * W, p.data() + n * pc * H * W,
                        sizeof(float) * static_cast<std::size_t>(pc * H * W));
            at += pc;
        }
    }
    return y;
}

inline Tensor<float> block_a(const Weights& w, const std::string& p, const Tensor<float>& x) {
    Tensor<float> b1 = basic_conv(w, p + ".branch1x1", x);
    Tensor<float> b5 = basic_conv(w, p + ".branch5x5_2", basic_conv(w, p + ".branch5x5_1", x), 1, 2, 2);
    Tensor<float> b3 = basic_conv(w, p + ".branch3x3dbl_1", x);
    b3 = basic_conv(w, p + ".branch3x3dbl_2", b3, 1, 1, 1);
    b3 = basic_conv(w, p + ".branch3x3dbl_3", b3, 1, 1, 1);
    Tensor<float> bp = basic_conv(w, p + ".branch_pool", pool3x3(x, 1, 1, false));
    return concat_channels({b1, b5, b3, bp});
}

inline Tensor<float> block_b(const Weights& w, const std::string& p, const Tensor<float>& x) {
    Tensor<float> b3 = basic_conv(w, p + ".branch3x3", x, 2);
    Tensor<float> bd = basic_conv(w, p + ".branch3x3dbl_1", x);
    bd = basic_conv(w, p + ".branch3x3dbl_2", bd, 1, 1, 1);
    bd = basic_conv(w, p + ".branch3x3dbl_3", bd, 2);
    return concat_channels({b3, bd, pool3x3(x, 2, 0, true)});
}

inline Tensor<float> block_c(const Weights& w, const std::string& p, const Tensor<float>& x) {
    Tensor<float> b1 = basic_conv(w, p + ".branch1x1", x);
    Tensor<float> b7 = basic_conv(w, p + ".branch7x7_1", x);
    b7 = basic_conv(w, p + ".branch7x7_2", b7, 1, 0, 3);
    b7 = basic_conv(w, p + ".branch7x7_3", b7, 1, 3, 0);
    Tensor<float> bd = basic_conv(w, p + ".branch7x7dbl_1", x);
    bd = basic_conv(w, p + ".branch7x7dbl_2", bd, 1, 3, 0);
    bd = basic_conv(w, p + ".branch7x7dbl_3", bd, 1, 0, 3);
    bd = basic_conv(w, p + ".branch7x7dbl_4", bd, 1, 3, 0);
    bd = basic_conv(w, p + ".branch7x7dbl_5", bd, 1, 0, 3);
    Tensor<float> bp = basic_conv(w, p + ".branch_pool", pool3x3(x, 1, 1, false));
    return concat_channels({b1, b7, bd, bp});
}

inline Tensor<float> block_d(const Weights& w, const std::string& p, const Tensor<float>& x) {
    Tensor<float> b3 = basic_conv(w, p + ".branch3x3_2", basic_conv(w, p + ".branch3x3_1", x), 2);
    Tensor<float> b7 = basic_conv(w, p + ".branch7x7x3_1", x);
    b7 = basic_conv(w, p + ".branch7x7x3_2", b7, 1, 0, 3);
    b7 = basic_conv(w, p + ".branch7x7x3_3", b7, 1, 3, 0);
    b7 = basic_conv(w, p + ".branch7x7x3_4", b7, 2);
    return concat_channels({b3, b7, pool3x3(x, 2, 0, true)});
}

inline Tensor<float> block_e(const Weights& w, const std::string& p, const Tensor<float>& x) {
    Tensor<float> b1 = basic_conv(w, p + ".branch1x1", x);
    Tensor<float> b3 = basic_conv(w, p + ".branch3x3_1", x);
    Tensor<float> b3a = basic_conv(w, p + ".branch3x3_2a", b3, 1, 0, 1);
    Tensor<float> b3b = basic_conv(w, p + ".branch3x3_2b", b3, 1, 1, 0);
    Tensor<float> bd = basic_conv(w, p + ".branch3x3dbl_1", x);
    bd = basic_conv(w, p + ".branch3x3dbl_2", bd, 1, 1, 1);
    Tensor<float> bda = basic_conv(w, p + ".branch3x3dbl_3a", bd, 1, 0, 1);
    Tensor<float> bdb = basic_conv(w, p + ".branch3x3dbl_3b", bd, 1, 1, 0);
    Tensor<float> bp = basic_conv(w, p + ".branch_pool", pool3x3(x, 1, 1, false));
    return concat_channels({b1, concat_channels({b3a, b3b}), concat_channels({bda, bdb}), bp});
}

// (N,3,H,W) normalized input -> (N,2048) pooled features
inline Eigen::MatrixXd forward_features(const Weights& w, const Tensor<float>& x) {
    Tensor<float> h = basic_conv(w, "Conv2d_1a_3x3", x, 2);
    h = basic_conv(w, "Conv2d_2a_3x3", h);
    h = basic_conv(w, "Conv2d_2b_3x3", h, 1, 1, 1);
    h = pool3x3(h, 2, 0, true);
    h = basic_conv(w, "Conv2d_3b_1x1", h);
    h = basic_conv(w, "Conv2d_4a_3x3", h);
    h = pool3x3(h, 2, 0, true);
    h = block_a(w, "Mixed_5b", h);
    h = block_a(w, "Mixed_5c", h);
    h = block_a(w, "Mixed_5d", h);
    h = block_b(w, "Mixed_6a", h);
    h = block_c(w, "Mixed_6b", h);
    h = block_c(w, "Mixed_6c", h);
    h = block_c(w, "Mixed_6d", h);
    h = block_c(w, "Mixed_6e", h);
    h = block_d(w, "Mixed_7a", h);
    h = block_e(w, "Mixed_7b", h);
    h = block_e(w, "Mixed_7c", h);

    const std::int64_t N = h.dim(0), C = h.dim(1), HW = h.dim(2) * h.dim(3);
    Eigen::MatrixXd features(N, C);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            const float* p = h.data() + (n * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i) acc += p[i];
            features(n, c) = acc / static_cast<double>(HW);
        }
    return features;
}

// Shape manifest as (name, shape) pairs; doubles as documentation of the
// expected weight export and as the generator for random test weights.
inline std::vector<std::pair<std::string, Shape>> tensor_manifest();

inline Weights random_weights(std::uint64_t seed) {
    Rng rng(seed);
    Weights w;
    for (const auto& [name, shape] : tensor_manifest()) {
        Tensor<float> t(shape);
        const bool is_var = name.ends_with("running_var");
        const bool is_gamma = name.ends_with("bn.weight");
        for (std::int64_t i = 0; i < t.numel(); ++i)
            t[i] = is_var ? 1.0f : is_gamma ? 1.0f : static_cast<float>(rng.normal() * 0.05);
        w.emplace(name, std::move(t));
    }
    return w;
}

inline std::vector<std::pair<std::string, Shape>> basic_conv_manifest(const std::string& p,
                                                                      std::int64_t in, std::int64_t out,
                                                                      std::int64_t kh, std::int64_t kw) {
    return {{p + ".conv.weight", {out, in, kh, kw}},
            {p + ".bn.weight", {out}},
            {p + ".bn.bias", {out}},
            {p + ".bn.running_mean", {out}},
            {p + ".bn.running_var", {out}}};
}

inline std::vector<std::pair<std::string, Shape>> tensor_manifest_impl() {
    std::vector<std::pair<std::string, Shape>> m;
    auto add = [&](std::vector<std::pair<std::string, Shape>> part) {
        for (auto& e : part) m.push_back(std::move(e));
    };
    add(basic_conv_manifest("Conv2d_1a_3x3", 3, 32, 3, 3));
    add(basic_conv_manifest("Conv2d_2a_3x3", 32, 32, 3, 3));
    add(basic_conv_manifest("Conv2d_2b_3x3", 32, 64, 3, 3));
    add(basic_conv_manifest("Conv2d_3b_1x1", 64, 80, 1, 1));
    add(basic_conv_manifest("Conv2d_4a_3x3", 80, 192, 3, 3));

    auto block_a_manifest = [&](const std::string& p, std::int64_t in, std::int64_t pf) {
        add(basic_conv_manifest(p + ".branch1x1", in, 64, 1, 1));
        add(basic_conv_manifest(p + ".branch5x5_1", in, 48, 1, 1));
        add(basic_conv_manifest(p + ".branch5x5_2", 48, 64, 5, 5));
        add(basic_conv_manifest(p + ".branch3x3dbl_1", in, 64, 1, 1));
        add(basic_conv_manifest(p + ".branch3x3dbl_2", 64, 96, 3, 3));
        add(basic_conv_manifest(p + ".branch3x3dbl_3", 96, 96, 3, 3));
        add(basic_conv_manifest(p + ".branch_pool", in, pf, 1, 1));
    };
    block_a_manifest("Mixed_5b", 192, 32);
    block_a_manifest("Mixed_5c", 256, 64);
    block_a_manifest("Mixed_5d", 288, 64);

    add(basic_conv_manifest("Mixed_6a.branch3x3", 288, 384, 3, 3));
    add(basic_conv_manifest("Mixed_6a.branch3x3dbl_1", 288, 64, 1, 1));
    add(basic_conv_manifest("Mixed_6a.branch3x3dbl_2", 64, 96, 3, 3));
    add(basic_conv_manifest("Mixed_6a.branch3x3dbl_3", 96, 96, 3, 3));

    auto block_c_manifest = [&](const std::string& p, std::int64_t c7) {
        add(basic_conv_manifest(p + ".branch1x1", 768, 192, 1, 1));
        add(basic_conv_manifest(p + ".branch7x7_1", 768, c7, 1, 1));
        add(basic_conv_manifest(p + ".branch7x7_2", c7, c7, 1, 7));
        add(basic_conv_manifest(p + ".branch7x7_3", c7, 192, 7, 1));
        add(basic_conv_manifest(p + ".branch7x7dbl_1", 768, c7, 1, 1));
        add(basic_conv_manifest(p + ".branch7x7dbl_2", c7, c7, 7, 1));
        add(basic_conv_manifest(p + ".branch7x7dbl_3", c7, c7, 1, 7));
        add(basic_conv_manifest(p + ".branch7x7dbl_4", c7, c7, 7, 1));
        add(basic_conv_manifest(p + ".branch7x7dbl_5", c7, 192, 1, 7));
        add(basic_conv_manifest(p + ".branch_pool", 768, 192, 1, 1));
    };
    block_c_manifest("Mixed_6b", 128);
    block_c_manifest("Mixed_6c", 160);
    block_c_manifest("Mixed_6d", 160);
    block_c_manifest("Mixed_6e", 192);

    add(basic_conv_manifest("Mixed_7a.branch3x3_1", 768, 192, 1, 1));
    add(basic_conv_manifest("Mixed_7a.branch3x3_2", 192, 320, 3, 3));
    add(basic_conv_manifest("Mixed_7a.branch7x7x3_1", 768, 192, 1, 1));
    add(basic_conv_manifest("Mixed_7a.branch7x7x3_2", 192, 192, 1, 7));
    add(basic_conv_manifest("Mixed_7a.branch7x7x3_3", 192, 192, 7, 1));
    add(basic_conv_manifest("Mixed_7a.branch7x7x3_4", 192, 192, 3, 3));

    auto block_e_manifest = [&](const std::string& p, std::int64_t in) {
        add(basic_conv_manifest(p + ".branch1x1", in, 320, 1, 1));
        add(basic_conv_manifest(p + ".branch3x3_1", in, 384, 1, 1));
        add(basic_conv_manifest(p + ".branch3x3_2a", 384, 384, 1, 3));
        add(basic_conv_manifest(p + ".branch3x3_2b", 384, 384, 3, 1));
        add(basic_conv_manifest(p + ".branch3x3dbl_1", in, 448, 1, 1));
        add(basic_conv_manifest(p + ".branch3x3dbl_2", 448, 384, 3, 3));
        add(basic_conv_manifest(p + ".branch3x3dbl_3a", 384, 384, 1, 3));
        add(basic_conv_manifest(p + ".branch3x3dbl_3b", 384, 384, 3, 1));
        add(basic_conv_manifest(p + ".branch_pool", in, 192, 1, 1));
    };
    block_e_manifest("Mixed_7b", 1280);
    block_e_manifest("Mixed_7c", 2048);
    return m;
}

inline std::vector<std::pair<std::string, Shape>> tensor_manifest() {
    static const auto manifest = tensor_manifest_impl();
    return manifest;
}

}  // namespace iv3

class InceptionV3Extractor : public FeatureExtractor {
public:
    explicit InceptionV3Extractor(iv3::Weights weights) : weights_(std::move(weights)) {
        for (const auto& [name, shape] : iv3::tensor_manifest()) {
            auto it = weights_.find(name);
            if (it == weights_.end() || it->second.shape() != shape)
                throw io::IoError("backbone weights are incomplete or misshaped at " + name);
        }
    }

    static InceptionV3Extractor from_dir(const std::filesystem::path& dir) {
        return InceptionV3Extractor(io::load_tensor_dir(dir));
    }

    std::string id() const override { return "inception_v3_pool3"; }
    std::int64_t dim() const override { return iv3::kFeatureDim; }

    Eigen::MatrixXd extract(const ImageBatch<float>& batch) const override {
        const std::int64_t N = batch.data.dim(0);
        const std::int64_t C = batch.data.dim(1), H = batch.data.dim(2), W = batch.data.dim(3);
        Tensor<float> prepped({N, 3, iv3::kResize, iv3::kResize});
        for (std::int64_t n = 0; n < N; ++n) {
            Tensor<float> img({C, H, W});
            for (std::int64_t i = 0; i < C * H * W; ++i)
                img[i] = (batch.data[n * C * H * W + i] + 1.0f) * 0.5f;  // back to [0,1]
            Tensor<float> resized = detail::bilinear_resize(img, iv3::kResize);
            for (std::int64_t c = 0; c < 3; ++c)
                for (std::int64_t i = 0; i < iv3::kResize * iv3::kResize; ++i)
                    prepped[(n * 3 + c) * iv3::kResize * iv3::kResize + i] =
                        (resized[c * iv3::kResize * iv3::kResize + i] - iv3::kMean[c]) / iv3::kStd[c];
        }
        return iv3::forward_features(weights_, prepped);
    }

    // Raw features for an already-prepped tensor; test hook for small inputs.
    Eigen::MatrixXd extract_prepped(const Tensor<float>& x) const { return iv3::forward_features(weights_, x); }

private:
    iv3::Weights weights_;
};

}  // namespace c2p::fid
