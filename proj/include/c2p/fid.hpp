#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2p/models.hpp"
#include "c2p/rng.hpp"
#include "c2p/tensor.hpp"

namespace c2p::fid {

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SampleSizeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Gaussian fit of an image set in feature space.
struct FIDStats {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;  // unbiased (n-1 denominator)
    std::int64_t n = 0;

    std::int64_t dim() const { return mu.size(); }

    void validate() const {
        if (n < 2) throw SampleSizeError("feature statistics need at least 2 samples, got " + std::to_string(n));
        const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-8) throw NumericalError("covariance asymmetry " + std::to_string(asym) + " exceeds 1e-8");
    }
};

// ---------------------------------------------------------------------------
// Streaming accumulation (single pass, mergeable across shards).

class StatsAccumulator {
public:
    explicit StatsAccumulator(std::int64_t dim)
        : mean_(Eigen::VectorXd::Zero(dim)), comoment_(Eigen::MatrixXd::Zero(dim, dim)) {}

    void add(const Eigen::Ref<const Eigen::VectorXd>& x) {
        ++n_;
        const Eigen::VectorXd dx = x - mean_;
        mean_ += dx / static_cast<double>(n_);
        comoment_.noalias() += dx * (x - mean_).transpose();
    }

    void merge(const StatsAccumulator& other) {
        if (other.n_ == 0) return;
        if (n_ == 0) {
            *this = other;
            return;
        }
        const double na = static_cast<double>(n_), nb = static_cast<double>(other.n_);
        const Eigen::VectorXd delta = other.mean_ - mean_;
        mean_ += delta * (nb / (na + nb));
        comoment_ += other.comoment_ + (delta * delta.transpose()) * (na * nb / (na + nb));
        n_ += other.n_;
    }

    std::int64_t count() const { return n_; }

    FIDStats finalize() const {
        if (n_ < 2) throw SampleSizeError("feature statistics need at least 2 samples, got " + std::to_string(n_));
        FIDStats s;
        s.mu = mean_;
        s.sigma = comoment_ / static_cast<double>(n_ - 1);
        s.sigma = ((s.sigma + s.sigma.transpose()) / 2.0).eval();
        s.n = n_;
        return s;
    }

private:
    std::int64_t n_ = 0;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd comoment_;
};

// ---------------------------------------------------------------------------
// Feature extractors

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string id() const = 0;
    virtual std::int64_t dim() const = 0;
    // rows = samples of the batch, cols = feature dimension
    virtual Eigen::MatrixXd extract(const ImageBatch<float>& batch) const = 0;
};

namespace detail {

// (3,H,W) -> (3,t,t) bilinear, align-corners-false convention
inline Tensor<float> bilinear_resize(const Tensor<float>& img, std::int64_t t) {
    const std::int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor<float> out({C, t, t});
    const double sy = static_cast<double>(H) / static_cast<double>(t);
    const double sx = static_cast<double>(W) / static_cast<double>(t);
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < t; ++y) {
            const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
            const std::int64_t y0 = static_cast<std::int64_t>(fy);
            const std::int64_t y1 = std::min(y0 + 1, H - 1);
            const double wy = fy - static_cast<double>(y0);
            for (std::int64_t x = 0; x < t; ++x) {
                const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
                const std::int64_t x0 = static_cast<std::int64_t>(fx);
                const std::int64_t x1 = std::min(x0 + 1, W - 1);
                const double wx = fx - static_cast<double>(x0);
                const double v00 = img[(c * H + y0) * W + x0], v01 = img[(c * H + y0) * W + x1];
                const double v10 = img[(c * H + y1) * W + x0], v11 = img[(c * H + y1) * W + x1];
                out[(c * t + y) * t + x] = static_cast<float>((1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                                              wy * ((1 - wx) * v10 + wx * v11));
            }
        }
    return out;
}

}  // namespace detail

// Fixed seeded random projection of a downscaled image. Cheap and fully
// deterministic, so the whole metric stack is testable without any
// pretrained backbone.
class TestLinearExtractor : public FeatureExtractor {
public:
    explicit TestLinearExtractor(std::int64_t out_dim = 2, std::uint64_t seed = 2024, std::int64_t resize = 16)
        : out_dim_(out_dim), resize_(resize), projection_(out_dim, 3 * resize * resize) {
        Rng rng(seed);
        const double scale = 1.0 / std::sqrt(static_cast<double>(projection_.cols()));
        for (Eigen::Index r = 0; r < projection_.rows(); ++r)
            for (Eigen::Index c = 0; c < projection_.cols(); ++c) projection_(r, c) = rng.normal() * scale;
    }

    std::string id() const override { return "test_linear"; }
    std::int64_t dim() const override { return out_dim_; }
    std::int64_t resize_target() const { return resize_; }

    Eigen::MatrixXd extract(const ImageBatch<float>& batch) const override {
        const std::int64_t N = batch.data.dim(0);
        Eigen::MatrixXd features(N, out_dim_);
        for (std::int64_t n = 0; n < N; ++n) {
            Tensor<float> img({batch.data.dim(1), batch.data.dim(2), batch.data.dim(3)});
            const std::int64_t sz = img.numel();
            for (std::int64_t i = 0; i < sz; ++i) img[i] = batch.data[n * sz + i];
            Tensor<float> small = detail::bilinear_resize(img, resize_);
            Eigen::VectorXd flat(small.numel());
            for (std::int64_t i = 0; i < small.numel(); ++i) flat(i) = small[i];
            features.row(n) = (projection_ * flat).transpose();
        }
        return features;
    }

private:
    std::int64_t out_dim_;
    std::int64_t resize_;
    Eigen::MatrixXd projection_;
};

// ---------------------------------------------------------------------------
// Stats over a stream of batches.

using BatchStream = std::function<std::optional<ImageBatch<float>>()>;

inline FIDStats compute_stats(const BatchStream& next_batch, const FeatureExtractor& extractor) {
    StatsAccumulator acc(extractor.dim());
    while (auto batch = next_batch()) {
        const Eigen::MatrixXd f = extractor.extract(*batch);
        for (Eigen::Index r = 0; r < f.rows(); ++r) acc.add(f.row(r).transpose());
    }
    return acc.finalize();
}

inline FIDStats compute_stats(const std::vector<ImageBatch<float>>& batches, const FeatureExtractor& extractor) {
    std::size_t i = 0;
    return compute_stats(
        [&]() -> std::optional<ImageBatch<float>> {
            if (i >= batches.size()) return std::nullopt;
            return batches[i++];
        },
        extractor);
}

// ---------------------------------------------------------------------------
// Principal square root of sigma_a * sigma_b through the symmetrized
// similarity transform: A^1/2 (A^1/2 B A^1/2)^1/2 A^-1/2. Inputs that are
// singular beyond tolerance get eps*I added to both sides first.

inline constexpr double kSqrtEpsilon = 1e-6;
inline constexpr double kImaginaryResidueLimit = 1e-3;

inline Eigen::MatrixXd matrix_sqrt_product(Eigen::MatrixXd a, Eigen::MatrixXd b) {
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
        throw ShapeError("matrix square root needs equal square matrices");
    const auto d = a.rows();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(b);
    if (ea.info() != Eigen::Success || eb.info() != Eigen::Success)
        throw NumericalError("eigendecomposition failed to converge");
    const double scale_a = std::max(1.0, ea.eigenvalues().cwiseAbs().maxCoeff());
    const double scale_b = std::max(1.0, eb.eigenvalues().cwiseAbs().maxCoeff());
    const bool singular = ea.eigenvalues().minCoeff() < 1e-12 * scale_a ||
                          eb.eigenvalues().minCoeff() < 1e-12 * scale_b;
    if (singular) {
        a.diagonal().array() += kSqrtEpsilon;
        b.diagonal().array() += kSqrtEpsilon;
        ea.compute(a);
        if (ea.info() != Eigen::Success) throw NumericalError("eigendecomposition failed to converge");
    }

    const Eigen::VectorXd la = ea.eigenvalues();
    if (la.minCoeff() <= 0.0)
        throw NumericalError("first covariance is not positive definite even after regularization");
    const Eigen::MatrixXd a_half = ea.eigenvectors() * la.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();
    const Eigen::MatrixXd a_half_inv =
        ea.eigenvectors() * la.cwiseSqrt().cwiseInverse().asDiagonal() * ea.eigenvectors().transpose();

    Eigen::MatrixXd m = a_half * b * a_half;
    m = ((m + m.transpose()) / 2.0).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m);
    if (em.info() != Eigen::Success) throw NumericalError("eigendecomposition failed to converge");

    Eigen::VectorXd lm = em.eigenvalues();
    double residue = 0.0;
    for (Eigen::Index i = 0; i < d; ++i)
        if (lm(i) < 0.0) {
            // a negative eigenvalue would put sqrt(|l|) on the imaginary axis
            residue = std::max(residue, std::sqrt(-lm(i)));
            lm(i) = 0.0;
        }
    if (residue > kImaginaryResidueLimit)
        throw NumericalError("matrix square root has imaginary residue " + std::to_string(residue) +
                             "; covariance estimates are too noisy, use more samples");

    const Eigen::MatrixXd s = em.eigenvectors() * lm.cwiseSqrt().asDiagonal() * em.eigenvectors().transpose();
    return a_half * s * a_half_inv;
}

// ---------------------------------------------------------------------------

inline double frechet_distance(const FIDStats& a, const FIDStats& b) {
    if (a.dim() != b.dim())
        throw ShapeError("feature dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
    const double mean_term = (a.mu - b.mu).squaredNorm();
    const Eigen::MatrixXd root = matrix_sqrt_product(a.sigma, b.sigma);
    double value = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * root.trace();
    if (value < -1e-6)
        throw NumericalError("distance " + std::to_string(value) + " fell below the numeric floor");
    if (value < 0.0) value = 0.0;
    return value;
}

// Blend of the distance to the target (photo) domain and to the input
// (cartoon) domain; defaults weight the target at 0.8.
inline double weighted_fid(const FIDStats& generated, const FIDStats& real, const FIDStats& cartoon,
                           double w_target = 0.8, double w_input = 0.2) {
    if (w_target < 0.0 || w_input < 0.0 || std::abs(w_target + w_input - 1.0) > 1e-9)
        throw std::invalid_argument("weights must be non-negative and sum to 1");
    return w_target * frechet_distance(generated, real) + w_input * frechet_distance(generated, cartoon);
}

// ---------------------------------------------------------------------------
// Stats serialization: <prefix>.json header + <prefix>.bin doubles (mu, sigma).

inline void save_stats(const std::filesystem::path& prefix, const FIDStats& stats,
                       const std::string& extractor_id) {
    stats.validate();
    nlohmann::json header = {{"d", stats.dim()}, {"n", stats.n}, {"extractor", extractor_id}};
    std::ofstream jf(prefix.string() + ".json", std::ios::trunc);
    jf << header.dump(2) << "\n";
    std::ofstream bf(prefix.string() + ".bin", std::ios::binary | std::ios::trunc);
    bf.write(reinterpret_cast<const char*>(stats.mu.data()),
             static_cast<std::streamsize>(sizeof(double) * stats.mu.size()));
    bf.write(reinterpret_cast<const char*>(stats.sigma.data()),
             static_cast<std::streamsize>(sizeof(double) * stats.sigma.size()));
    if (!jf || !bf) throw std::runtime_error("cannot write stats to " + prefix.string() + ".{json,bin}");
}

inline FIDStats load_stats(const std::filesystem::path& prefix, std::string* extractor_id = nullptr) {
    std::ifstream jf(prefix.string() + ".json");
    if (!jf) throw std::runtime_error("missing stats header " + prefix.string() + ".json");
    nlohmann::json header;
    jf >> header;
    FIDStats stats;
    const auto d = header.at("d").get<std::int64_t>();
    stats.n = header.at("n").get<std::int64_t>();
    if (extractor_id) *extractor_id = header.at("extractor").get<std::string>();
    stats.mu.resize(d);
    stats.sigma.resize(d, d);
    std::ifstream bf(prefix.string() + ".bin", std::ios::binary);
    bf.read(reinterpret_cast<char*>(stats.mu.data()), static_cast<std::streamsize>(sizeof(double) * d));
    bf.read(reinterpret_cast<char*>(stats.sigma.data()), static_cast<std::streamsize>(sizeof(double) * d * d));
    if (!bf) throw std::runtime_error("truncated stats blob " + prefix.string() + ".bin");
    stats.validate();
    return stats;
}

}  // namespace c2p::fid
