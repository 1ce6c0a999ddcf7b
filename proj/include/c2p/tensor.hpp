#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace c2p {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dense row-major n-d array. Rank 4 (batch, channel, height, width) is the
// common case; rank 1/2 show up for vectors and reshaped weight matrices.
template <typename T>
class Tensor {
public:
    using Scalar = T;

    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), T{0}) {}
    Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
            throw ShapeError("tensor data does not match shape " + shape_str(shape_));
    }

    const Shape& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // rank-4 accessor
    T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    // rank-2 accessor
    T& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
    const T& at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        Tensor out = *this;
        out.shape_ = std::move(shape);
        return out;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor& operator+=(const Tensor& o) {
        require_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    T sum() const { return std::accumulate(data_.begin(), data_.end(), T{0}); }

    T abs_max() const {
        T m{0};
        for (const auto& v : data_) m = std::max(m, static_cast<T>(std::abs(v)));
        return m;
    }

    T min() const { return data_.empty() ? T{0} : *std::min_element(data_.begin(), data_.end()); }
    T max() const { return data_.empty() ? T{0} : *std::max_element(data_.begin(), data_.end()); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

    // Row-major Eigen view over the flattened buffer, rows x cols.
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat(std::int64_t rows,
                                                                                      std::int64_t cols) {
        if (rows * cols != numel())
            throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " does not cover tensor " + shape_str(shape_));
        return {data_.data(), rows, cols};
    }
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat(
        std::int64_t rows, std::int64_t cols) const {
        if (rows * cols != numel())
            throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " does not cover tensor " + shape_str(shape_));
        return {data_.data(), rows, cols};
    }

private:
    void require_same(const Tensor& o) const {
        if (!same_shape(o))
            throw ShapeError("shape mismatch: " + shape_str(shape_) + " vs " + shape_str(o.shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(static_cast<double>(t[i]))) return false;
    return true;
}

}  // namespace c2p
