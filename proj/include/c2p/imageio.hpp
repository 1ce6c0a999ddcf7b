#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "c2p/tensor.hpp"

namespace c2p::io {

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Images move through the pipeline as rank-3 (3, H, W) float tensors, RGB,
// values in [0, 1]. OpenCV appears only behind these helpers.

inline Tensor<float> from_mat(const cv::Mat& bgr) {
    CV_Assert(bgr.type() == CV_8UC3);
    const std::int64_t H = bgr.rows, W = bgr.cols;
    Tensor<float> img({3, H, W});
    for (std::int64_t y = 0; y < H; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
        for (std::int64_t x = 0; x < W; ++x) {
            img.vec()[static_cast<std::size_t>(0 * H * W + y * W + x)] = row[x][2] / 255.0f;
            img.vec()[static_cast<std::size_t>(1 * H * W + y * W + x)] = row[x][1] / 255.0f;
            img.vec()[static_cast<std::size_t>(2 * H * W + y * W + x)] = row[x][0] / 255.0f;
        }
    }
    return img;
}

// Quantizes back to 8 bits; inverse of from_mat for all byte values.
inline cv::Mat to_mat(const Tensor<float>& img) {
    const std::int64_t H = img.dim(1), W = img.dim(2);
    cv::Mat bgr(static_cast<int>(H), static_cast<int>(W), CV_8UC3);
    auto to_u8 = [](float v) {
        return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0f), 0l, 255l));
    };
    for (std::int64_t y = 0; y < H; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
        for (std::int64_t x = 0; x < W; ++x) {
            row[x][2] = to_u8(img[0 * H * W + y * W + x]);
            row[x][1] = to_u8(img[1 * H * W + y * W + x]);
            row[x][0] = to_u8(img[2 * H * W + y * W + x]);
        }
    }
    return bgr;
}

inline Tensor<float> load_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DecodeError("cannot decode image " + path.string());
    return from_mat(bgr);
}

inline void save_png(const std::filesystem::path& path, const Tensor<float>& img) {
    std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), to_mat(img)))
        throw DecodeError("cannot write image " + path.string());
}

// Shorter side to `size`, then center crop to size x size. Area resampling
// when shrinking, bilinear when growing.
inline Tensor<float> resize_center_crop(const Tensor<float>& img, std::int64_t size) {
    cv::Mat src = to_mat(img);
    const double scale = static_cast<double>(size) / std::min(src.rows, src.cols);
    cv::Mat resized;
    cv::resize(src, resized, cv::Size(), scale, scale, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
    const int x0 = (resized.cols - static_cast<int>(size)) / 2;
    const int y0 = (resized.rows - static_cast<int>(size)) / 2;
    cv::Mat cropped = resized(cv::Rect(x0, y0, static_cast<int>(size), static_cast<int>(size))).clone();
    return from_mat(cropped);
}

// Sequential decoder around cv::VideoCapture.
class VideoReader {
public:
    explicit VideoReader(const std::filesystem::path& path) : path_(path.string()), cap_(path.string()) {
        if (!cap_.isOpened()) throw DecodeError("cannot decode video " + path_);
        fps_ = cap_.get(cv::CAP_PROP_FPS);
        frame_count_ = static_cast<std::int64_t>(cap_.get(cv::CAP_PROP_FRAME_COUNT));
        if (fps_ <= 0.0 || frame_count_ <= 0)
            throw DecodeError("video " + path_ + " reports no timing metadata");
    }

    double fps() const { return fps_; }
    std::int64_t frame_count() const { return frame_count_; }

    // Decodes the next frame; false at end of stream.
    bool next(Tensor<float>& out) {
        cv::Mat frame;
        if (!cap_.read(frame)) return false;
        if (frame.type() != CV_8UC3) {
            cv::Mat converted;
            frame.convertTo(converted, CV_8UC3);
            frame = converted;
        }
        out = from_mat(frame);
        return true;
    }

private:
    std::string path_;
    cv::VideoCapture cap_;
    double fps_;
    std::int64_t frame_count_;
};

}  // namespace c2p::io
