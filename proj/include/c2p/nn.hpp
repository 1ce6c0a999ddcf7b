#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "c2p/rng.hpp"
#include "c2p/tensor.hpp"

namespace c2p::nn {

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
};

// Non-trainable persistent buffers (power-iteration vectors and the like)
// that still belong in checkpoints.
template <typename T>
struct StateRef {
    std::string name;
    Tensor<T>* value;
    std::int64_t* counter;
};

// Saved state for one forward call. Layers are reentrant: a network can be
// applied several times inside a single objective (cycle terms), so nothing
// call-specific may live in the layer itself.
template <typename T>
struct Context {
    std::vector<Tensor<T>> saved;
    std::vector<Context<T>> children;
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx, bool training) = 0;

    // gy is the gradient wrt this layer's output; returns the gradient wrt
    // its input. Parameter grad buffers accumulate only when with_param_grads
    // is set (frozen-discriminator updates backprop through without it).
    virtual Tensor<T> backward(const Tensor<T>& gy, const Context<T>& ctx, bool with_param_grads) = 0;

    virtual void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        (void)prefix;
        (void)out;
    }

    virtual void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) {
        (void)prefix;
        (void)out;
    }
};

// ---------------------------------------------------------------------------
// im2col / col2im

inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// x: one sample [C,H,W] at base pointer; cols: [C*kh*kw, Ho*Wo]
template <typename T>
void im2col(const T* x, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh, std::int64_t kw,
            std::int64_t sh, std::int64_t sw, std::int64_t ph, std::int64_t pw, T* cols) {
    const std::int64_t Ho = conv_out_dim(H, kh, sh, ph);
    const std::int64_t Wo = conv_out_dim(W, kw, sw, pw);
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t di = 0; di < kh; ++di) {
            for (std::int64_t dj = 0; dj < kw; ++dj, ++row) {
                T* dst = cols + row * Ho * Wo;
                for (std::int64_t i = 0; i < Ho; ++i) {
                    const std::int64_t src_i = i * sh - ph + di;
                    if (src_i < 0 || src_i >= H) {
                        for (std::int64_t j = 0; j < Wo; ++j) dst[i * Wo + j] = T{0};
                        continue;
                    }
                    const T* src_row = x + (c * H + src_i) * W;
                    for (std::int64_t j = 0; j < Wo; ++j) {
                        const std::int64_t src_j = j * sw - pw + dj;
                        dst[i * Wo + j] = (src_j >= 0 && src_j < W) ? src_row[src_j] : T{0};
                    }
                }
            }
        }
    }
}

// scatter-add of cols back into one sample [C,H,W]
template <typename T>
void col2im_add(const T* cols, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh, std::int64_t kw,
                std::int64_t sh, std::int64_t sw, std::int64_t ph, std::int64_t pw, T* x) {
    const std::int64_t Ho = conv_out_dim(H, kh, sh, ph);
    const std::int64_t Wo = conv_out_dim(W, kw, sw, pw);
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t di = 0; di < kh; ++di) {
            for (std::int64_t dj = 0; dj < kw; ++dj, ++row) {
                const T* src = cols + row * Ho * Wo;
                for (std::int64_t i = 0; i < Ho; ++i) {
                    const std::int64_t dst_i = i * sh - ph + di;
                    if (dst_i < 0 || dst_i >= H) continue;
                    T* dst_row = x + (c * H + dst_i) * W;
                    for (std::int64_t j = 0; j < Wo; ++j) {
                        const std::int64_t dst_j = j * sw - pw + dj;
                        if (dst_j >= 0 && dst_j < W) dst_row[dst_j] += src[i * Wo + j];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
class Conv2d : public Layer<T> {
public:
    Conv2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kh, std::int64_t kw, std::int64_t stride,
           std::int64_t ph, std::int64_t pw, bool bias = true)
        : in_ch_(in_ch),
          out_ch_(out_ch),
          kh_(kh),
          kw_(kw),
          stride_(stride),
          ph_(ph),
          pw_(pw),
          has_bias_(bias),
          weight_({out_ch, in_ch, kh, kw}),
          wgrad_({out_ch, in_ch, kh, kw}),
          bias_({out_ch}),
          bgrad_({out_ch}) {}

    Conv2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride, std::int64_t pad,
           bool bias = true)
        : Conv2d(in_ch, out_ch, k, k, stride, pad, pad, bias) {}

    void init(Rng& rng, T stddev) {
        for (std::int64_t i = 0; i < weight_.numel(); ++i) weight_[i] = static_cast<T>(rng.normal(0.0, stddev));
        bias_.fill(T{0});
    }

    Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx, bool training) override {
        ctx.saved.assign(1, x);
        return run_forward(x, weight_, training, ctx);
    }

    Tensor<T> backward(const Tensor<T>& gy, const Context<T>& ctx, bool with_param_grads) override {
        Tensor<T> wgrad_local({out_ch_, in_ch_, kh_, kw_});
        Tensor<T> gx = backward_data_weight(gy, ctx.saved[0], effective_weight(ctx), wgrad_local);
        if (with_param_grads) {
            apply_weight_grad(wgrad_local, ctx);
            if (has_bias_) accumulate_bias_grad(gy);
        }
        return gx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        out.push_back({prefix + ".weight", &weight_, &wgrad_});
        if (has_bias_) out.push_back({prefix + ".bias", &bias_, &bgrad_});
    }

    std::int64_t in_channels() const { return in_ch_; }
    std::int64_t out_channels() const { return out_ch_; }
    std::int64_t kernel_h() const { return kh_; }
    std::int64_t kernel_w() const { return kw_; }
    std::int64_t stride() const { return stride_; }
    std::int64_t pad_h() const { return ph_; }
    std::int64_t pad_w() const { return pw_; }
    Tensor<T>& weight() { return weight_; }
    Tensor<T>& bias() { return bias_; }

protected:
    // Where the effective kernel comes from; spectral normalization swaps this.
    virtual Tensor<T> run_forward(const Tensor<T>& x, const Tensor<T>& w, bool training, Context<T>& ctx) {
        (void)training;
        (void)ctx;
        return conv_with(x, w);
    }

    // Kernel the forward pass actually used, for the data/weight gradients.
    virtual const Tensor<T>& effective_weight(const Context<T>& ctx) const {
        (void)ctx;
        return weight_;
    }

    virtual void apply_weight_grad(const Tensor<T>& wgrad_local, const Context<T>& ctx) {
        (void)ctx;
        wgrad_ += wgrad_local;
    }

    Tensor<T> conv_with(const Tensor<T>& x, const Tensor<T>& w) const {
        if (x.rank() != 4 || x.dim(1) != in_ch_)
            throw ShapeError("conv input " + shape_str(x.shape()) + " does not match " +
                             std::to_string(in_ch_) + " input channels");
        const std::int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const std::int64_t Ho = conv_out_dim(H, kh_, stride_, ph_);
        const std::int64_t Wo = conv_out_dim(W, kw_, stride_, pw_);
        if (Ho < 1 || Wo < 1)
            throw ShapeError("conv input " + shape_str(x.shape()) + " smaller than kernel footprint");
        Tensor<T> y({N, out_ch_, Ho, Wo});
        Tensor<T> cols({in_ch_ * kh_ * kw_, Ho * Wo});
        auto wm = w.mat(out_ch_, in_ch_ * kh_ * kw_);
        for (std::int64_t n = 0; n < N; ++n) {
            im2col(x.data() + n * in_ch_ * H * W, in_ch_, H, W, kh_, kw_, stride_, stride_, ph_, pw_, cols.data());
            auto cm = cols.mat(in_ch_ * kh_ * kw_, Ho * Wo);
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> ym(
                y.data() + n * out_ch_ * Ho * Wo, out_ch_, Ho * Wo);
            ym.noalias() = wm * cm;
            if (has_bias_)
                for (std::int64_t c = 0; c < out_ch_; ++c) ym.row(c).array() += bias_[c];
        }
        return y;
    }

    Tensor<T> backward_data_weight(const Tensor<T>& gy, const Tensor<T>& x, const Tensor<T>& w,
                                   Tensor<T>& wgrad_out) const {
        const std::int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const std::int64_t Ho = gy.dim(2), Wo = gy.dim(3);
        Tensor<T> gx(x.shape());
        Tensor<T> cols({in_ch_ * kh_ * kw_, Ho * Wo});
        Tensor<T> gcols({in_ch_ * kh_ * kw_, Ho * Wo});
        auto wm = w.mat(out_ch_, in_ch_ * kh_ * kw_);
        auto wg = wgrad_out.mat(out_ch_, in_ch_ * kh_ * kw_);
        for (std::int64_t n = 0; n < N; ++n) {
            im2col(x.data() + n * in_ch_ * H * W, in_ch_, H, W, kh_, kw_, stride_, stride_, ph_, pw_, cols.data());
            auto cm = cols.mat(in_ch_ * kh_ * kw_, Ho * Wo);
            Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gym(
                gy.data() + n * out_ch_ * Ho * Wo, out_ch_, Ho * Wo);
            wg.noalias() += gym * cm.transpose();
            auto gcm = gcols.mat(in_ch_ * kh_ * kw_, Ho * Wo);
            gcm.noalias() = wm.transpose() * gym;
            col2im_add(gcols.data(), in_ch_, H, W, kh_, kw_, stride_, stride_, ph_, pw_,
                       gx.data() + n * in_ch_ * H * W);
        }
        return gx;
    }

    void accumulate_bias_grad(const Tensor<T>& gy) {
        const std::int64_t N = gy.dim(0), HoWo = gy.dim(2) * gy.dim(3);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < out_ch_; ++c) {
                const T* p = gy.data() + (n * out_ch_ + c) * HoWo;
                T s{0};
                for (std::int64_t i = 0; i < HoWo; ++i) s += p[i];
                bgrad_[c] += s;
            }
    }

    std::int64_t in_ch_, out_ch_, kh_, kw_, stride_, ph_, pw_;
    bool has_bias_;
    Tensor<T> weight_, wgrad_, bias_, bgrad_;
};

// ---------------------------------------------------------------------------
// ConvTranspose2d (fractional stride), weight layout [in, out, k, k]

template <typename T>
class ConvTranspose2d : public Layer<T> {
public:
    ConvTranspose2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride,
                    std::int64_t pad, std::int64_t out_pad)
        : in_ch_(in_ch),
          out_ch_(out_ch),
          k_(k),
          stride_(stride),
          pad_(pad),
          out_pad_(out_pad),
          weight_({in_ch, out_ch, k, k}),
          wgrad_({in_ch, out_ch, k, k}),
          bias_({out_ch}),
          bgrad_({out_ch}) {}

    void init(Rng& rng, T stddev) {
        for (std::int64_t i = 0; i < weight_.numel(); ++i) weight_[i] = static_cast<T>(rng.normal(0.0, stddev));
        bias_.fill(T{0});
    }

    Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx, bool) override {
        ctx.saved.assign(1, x);
        const std::int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const std::int64_t Ho = (H - 1) * stride_ - 2 * pad_ + k_ + out_pad_;
        const std::int64_t Wo = (W - 1) * stride_ - 2 * pad_ + k_ + out_pad_;
        Tensor<T> y({N, out_ch_, Ho, Wo});
        Tensor<T> cols({out_ch_ * k_ * k_, H * W});
        auto wm = weight_.mat(in_ch_, out_ch_ * k_ * k_);
        for (std::int64_t n = 0; n < N; ++n) {
            Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
                x.data() + n * in_ch_ * H * W, in_ch_, H * W);
            auto cm = cols.mat(out_ch_ * k_ * k_, H * W);
            cm.noalias() = wm.transpose() * xm;
            scatter(cols, H, W, Ho, Wo, y.data() + n * out_ch_ * Ho * Wo);
        }
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < out_ch_; ++c) {
                T* p = y.data() + (n * out_ch_ + c) * Ho * Wo;
                for (std::int64_t i = 0; i < Ho * Wo; ++i) p[i] += bias_[c];
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const Context<T>& ctx, bool with_param_grads) override {
        const Tensor<T>& x = ctx.saved[0];
        const std::int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const std::int64_t Ho = gy.dim(2), Wo = gy.dim(3);
        Tensor<T> gx(x.shape());
        Tensor<T> gcols({out_ch_ * k_ * k_, H * W});
        auto wm = weight_.mat(in_ch_, out_ch_ * k_ * k_);
        auto wg = wgrad_.mat(in_ch_, out_ch_ * k_ * k_);
        for (std::int64_t n = 0; n < N; ++n) {
            gather(gy.data() + n * out_ch_ * Ho * Wo, H, W, Ho, Wo, gcols);
            auto gcm = gcols.mat(out_ch_ * k_ * k_, H * W);
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gxm(
                gx.data() + n * in_ch_ * H * W, in_ch_, H * W);
            gxm.noalias() = wm * gcm;
            if (with_param_grads) {
                Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
                    x.data() + n * in_ch_ * H * W, in_ch_, H * W);
                wg.noalias() += xm * gcm.transpose();
            }
        }
        if (with_param_grads) {
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t c = 0; c < out_ch_; ++c) {
                    const T* p = gy.data() + (n * out_ch_ + c) * Ho * Wo;
                    T s{0};
                    for (std::int64_t i = 0; i < Ho * Wo; ++i) s += p[i];
                    bgrad_[c] += s;
                }
        }
        return gx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        out.push_back({prefix + ".weight", &weight_, &wgrad_});
        out.push_back({prefix + ".bias", &bias_, &bgrad_});
    }

private:
    void scatter(const Tensor<T>& cols, std::int64_t H, std::int64_t W, std::int64_t Ho, std::int64_t Wo,
                 T* y) const {
        std::int64_t row = 0;
        for (std::int64_t c = 0; c < out_ch_; ++c)
            for (std::int64_t di = 0; di < k_; ++di)
                for (std::int64_t dj = 0; dj < k_; ++dj, ++row) {
                    const T* src = cols.data() + row * H * W;
                    for (std::int64_t i = 0; i < H; ++i) {
                        const std::int64_t oi = i * stride_ - pad_ + di;
                        if (oi < 0 || oi >= Ho) continue;
                        for (std::int64_t j = 0; j < W; ++j) {
                            const std::int64_t oj = j * stride_ - pad_ + dj;
                            if (oj >= 0 && oj < Wo) y[(c * Ho + oi) * Wo + oj] += src[i * W + j];
                        }
                    }
                }
    }

    void gather(const T* gy, std::int64_t H, std::int64_t W, std::int64_t Ho, std::int64_t Wo,
                Tensor<T>& gcols) const {
        std::int64_t row = 0;
        for (std::int64_t c = 0; c < out_ch_; ++c)
            for (std::int64_t di = 0; di < k_; ++di)
                for (std::int64_t dj = 0; dj < k_; ++dj, ++row) {
                    T* dst = gcols.data() + row * H * W;
                    for (std::int64_t i = 0; i < H; ++i) {
                        const std::int64_t oi = i * stride_ - pad_ + di;
                        for (std::int64_t j = 0; j < W; ++j) {
                            const std::int64_t oj = j * stride_ - pad_ + dj;
                            dst[i * W + j] = (oi >= 0 && oi < Ho && oj >= 0 && oj < Wo)
                                                 ? gy[(c * Ho + oi) * Wo + oj]
                                                 : T{0};
                        }
                    }
                }
    }

    std::int64_t in_ch_, out_ch_, k_, stride_, pad_, out_pad_;
    Tensor<T> weight_, wgrad_, bias_, bgrad_;
};

// ---------------------------------------------------------------------------
// InstanceNorm2d with affine scale/shift, normalizing per sample and channel.

template <typename T>
class InstanceNorm2d : public Layer<T> {
public:
    explicit InstanceNorm2d(std::int64_t channels, T eps = static_cast<T>(1e-5))
        : ch_(channels), eps_(eps), gamma_({channels}, T{1}), ggrad_({channels}), beta_({channels}), bgrad_({channels}) {}

    Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx, bool) override {
        const std::int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
        Tensor<T> xhat(x.shape());
        Tensor<T> inv_std({N, C});
        Tensor<T> y(x.shape());
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
                const T* p = x.data() + (n * C + c) * HW;
                T mu{0};
                for (std::int64_t i = 0; i < HW; ++i) mu += p[i];
                mu /= static_cast<T>(HW);
                T var{0};
                for (std::int64_t i = 0; i < HW; ++i) {
                    const T d = p[i] - mu;
                    var += d * d;
                }
                var /= static_cast<T>(HW);
                const T is = T{1} / std::sqrt(var + eps_);
                inv_std.at(n, c) = is;
                T* xh = xhat.data() + (n * C + c) * HW;
                T* py = y.data() + (n * C + c) * HW;
                for (std::int64_t i = 0; i < HW; ++i) {
                    xh[i] = (p[i] - mu) * is;
                    py[i] = gamma_[c] * xh[i] + beta_[c];
                }
            }
        ctx.saved.clear();
        ctx.saved.push_back(std::move(xhat));
        ctx.saved.push_back(std::move(inv_std));
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const Context<T>& ctx, bool with_param_grads) override {
        const Tensor<T>& xhat = ctx.saved[0];
        const Tensor<T>& inv_std = ctx.saved[1];
        const std::int64_t N = gy.dim(0), C = gy.dim(1), HW = gy.dim(2) * gy.dim(3);
        Tensor<T> gx(gy.shape());
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
                const T* g = gy.data() + (n * C + c) * HW;
                const T* xh = xhat.data() + (n * C + c) * HW;
                T sum_g{0}, sum_gxh{0};
                for (std::int64_t i = 0; i < HW; ++i) {
                    sum_g += g[i];
                    sum_gxh += g[i] * xh[i];
                }
                if (with_param_grads) {
                    ggrad_[c] += sum_gxh;
                    bgrad_[c] += sum_g;
                }
                const T mean_g = sum_g / static_cast<T>(HW);
                const T mean_gxh = sum_gxh / static_cast<T>(HW);
                const T scale = gamma_[c] * inv_std.at(n, c);
                T* out = gx.data() + (n * C + c) * HW;
                for (std::int64_t i = 0; i < HW; ++i) out[i] = scale * (g[i] - mean_g - xh[i] * mean_gxh);
            }
        return gx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        out.push_back({prefix + ".scale", &gamma_, &ggrad_});
        out.push_back({prefix + ".shift", &beta_, &bgrad_});
    }

private:
    std::int64_t ch_;
    T eps_;
    Tensor<T> gamma_, ggrad_, beta_, bgrad_;
};

// ---------------------------------------------------------------------------
// Pointwise activations

template <typename T>
class ReLU : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx, bool) override {
        ctx.saved.assign(1, x);
        Tensor<T> y(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy, const Context<T>& ctx, bool) override {
        const Tensor<T>& x = ctx.saved[0];
        Tensor<T> gx(gy.shape());
        for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] = x[i] > T{0} ? gy[i] : T{0};
        return gx;
    }
};

template <typename T>
class LeakyReLU : public Layer<T> {
public:
    explicit LeakyReLU(T slope) : slope_(slope) {}
    Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx, bool) override {
        ctx.saved.assign(1, x);
        Tensor<T> y(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T{0} ? x[i] : slope_ * x[i];
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy, const Context<T>& ctx, bool) override {
        const Tensor<T>& x = ctx.saved[0];
        Tensor<T> gx(gy.shape());
        for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] = x[i] > T{0} ? gy[i] : slope_ * gy[i];
        return gx;
    }

private:
    T slope_;
};

template <typename T>
class Tanh : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx, bool) override {
        Tensor<T> y(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
        ctx.saved.assign(1, y);
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy, const Context<T>& ctx, bool) override {
        const Tensor<T>& y = ctx.saved[0];
        Tensor<T> gx(gy.shape());
        for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * (T{1} - y[i] * y[i]);
        return gx;
    }
};

// ---------------------------------------------------------------------------
// ReflectionPad2d; requires pad < spatial dims

template <typename T>
class ReflectionPad2d : public Layer<T> {
public:
    explicit ReflectionPad2d(std::int64_t pad) : pad_(pad) {}

    Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx, bool) override {
        const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        if (pad_ >= H || pad_ >= W)
            throw ShapeError("reflection pad " + std::to_string(pad_) + " too large for " + shape_str(x.shape()));
        ctx.saved.assign(1, Tensor<T>({4}, std::vector<T>{static_cast<T>(N), static_cast<T>(C),
                                                          static_cast<T>(H), static_cast<T>(W)}));
        Tensor<T> y({N, C, H + 2 * pad_, W + 2 * pad_});
        const std::int64_t Ho = H + 2 * pad_, Wo = W + 2 * pad_;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
                const T* src = x.data() + (n * C + c) * H * W;
                T* dst = y.data() + (n * C + c) * Ho * Wo;
                for (std::int64_t i = 0; i < Ho; ++i) {
                    const std::int64_t si = reflect(i - pad_, H);
                    for (std::int64_t j = 0; j < Wo; ++j) dst[i * Wo + j] = src[si * W + reflect(j - pad_, W)];
                }
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const Context<T>& ctx, bool) override {
        const auto& dims = ctx.saved[0];
        const std::int64_t N = static_cast<std::int64_t>(dims[0]), C = static_cast<std::int64_t>(dims[1]),
                           H = static_cast<std::int64_t>(dims[2]), W = static_cast<std::int64_t>(dims[3]);
        const std::int64_t Ho = H + 2 * pad_, Wo = W + 2 * pad_;
        Tensor<T> gx({N, C, H, W});
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
                const T* src = gy.data() + (n * C + c) * Ho * Wo;
                T* dst = gx.data() + (n * C + c) * H * W;
                for (std::int64_t i = 0; i < Ho; ++i) {
                    const std::int64_t si = reflect(i - pad_, H);
                    for (std::int64_t j = 0; j < Wo; ++j) dst[si * W + reflect(j - pad_, W)] += src[i * Wo + j];
                }
            }
        return gx;
    }

private:
    static std::int64_t reflect(std::int64_t i, std::int64_t n) {
        if (i < 0) return -i;
        if (i >= n) return 2 * n - 2 - i;
        return i;
    }

    std::int64_t pad_;
};

// ---------------------------------------------------------------------------
// Sequential container

template <typename T>
using Tape = std::vector<Context<T>>;

template <typename T>
class Sequential : public Layer<T> {
public:
    Sequential() = default;

    void add(std::string name, std::unique_ptr<Layer<T>> layer) {
        names_.push_back(std::move(name));
        layers_.push_back(std::move(layer));
    }

    template <typename L, typename... Args>
    L& emplace(std::string name, Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        add(std::move(name), std::move(layer));
        return ref;
    }

    Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx, bool training) override {
        ctx.children.resize(layers_.size());
        Tensor<T> h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) h = layers_[i]->forward(h, ctx.children[i], training);
        return h;
    }

    Tensor<T> backward(const Tensor<T>& gy, const Context<T>& ctx, bool with_param_grads) override {
        Tensor<T> g = gy;
        for (std::size_t i = layers_.size(); i-- > 0;)
            g = layers_[i]->backward(g, ctx.children[i], with_param_grads);
        return g;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect_params(prefix.empty() ? names_[i] : prefix + "." + names_[i], out);
    }

    void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) override {
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect_state(prefix.empty() ? names_[i] : prefix + "." + names_[i], out);
    }

    std::vector<ParamRef<T>> params(const std::string& prefix = "") {
        std::vector<ParamRef<T>> out;
        collect_params(prefix, out);
        return out;
    }

    std::vector<StateRef<T>> state(const std::string& prefix = "") {
        std::vector<StateRef<T>> out;
        collect_state(prefix, out);
        return out;
    }

    void zero_grads() {
        for (auto& p : params()) p.grad->fill(T{0});
    }

    std::size_t size() const { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }
    const std::string& layer_name(std::size_t i) const { return names_[i]; }

private:
    std::vector<std::string> names_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// ---------------------------------------------------------------------------
// Residual block: x + body(x), body = pad/conv/norm/relu/pad/conv/norm

template <typename T>
class ResidualBlock : public Layer<T> {
public:
    explicit ResidualBlock(std::int64_t channels) {
        body_.template emplace<ReflectionPad2d<T>>("pad1", 1);
        conv1_ = &body_.template emplace<Conv2d<T>>("conv1", channels, channels, 3, 1, 0);
        body_.template emplace<InstanceNorm2d<T>>("norm1", channels);
        body_.template emplace<ReLU<T>>("relu");
        body_.template emplace<ReflectionPad2d<T>>("pad2", 1);
        conv2_ = &body_.template emplace<Conv2d<T>>("conv2", channels, channels, 3, 1, 0);
        body_.template emplace<InstanceNorm2d<T>>("norm2", channels);
    }

    void init(Rng& rng, T stddev) {
        conv1_->init(rng, stddev);
        conv2_->init(rng, stddev);
    }

    Tensor<T> forward(const Tensor<T>& x, Context<T>& ctx, bool training) override {
        ctx.children.resize(1);
        Tensor<T> y = body_.forward(x, ctx.children[0], training);
        y += x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const Context<T>& ctx, bool with_param_grads) override {
        Tensor<T> gx = body_.backward(gy, ctx.children[0], with_param_grads);
        gx += gy;
        return gx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        body_.collect_params(prefix, out);
    }

    void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) override {
        body_.collect_state(prefix, out);
    }

private:
    Sequential<T> body_;
    Conv2d<T>* conv1_;
    Conv2d<T>* conv2_;
};

}  // namespace c2p::nn
