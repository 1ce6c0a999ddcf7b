#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace c2p::chart {

struct CurvePoint {
    double epoch = 0.0;
    double value = 0.0;
};

// Score-vs-epoch curve as a static PNG plus a sidecar CSV holding the exact
// plotted values, so the chart stays inspectable without image tooling.
inline void render_curve(const std::vector<CurvePoint>& points, const std::filesystem::path& png_path,
                         const std::filesystem::path& csv_path, const std::string& x_label = "epoch",
                         const std::string& y_label = "FID") {
    if (points.empty()) throw std::invalid_argument("no points to plot");

    {
        std::ofstream csv(csv_path, std::ios::trunc);
        csv << x_label << "," << y_label << "\n";
        char buf[64];
        for (const auto& p : points) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p.epoch, p.value);
            csv << buf;
        }
        if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    }

    const int W = 900, H = 600, ml = 90, mr = 30, mt = 40, mb = 70;
    cv::Mat canvas(H, W, CV_8UC3, cv::Scalar(255, 255, 255));

    double x_min = points.front().epoch, x_max = points.front().epoch;
    double y_min = points.front().value, y_max = points.front().value;
    for (const auto& p : points) {
        x_min = std::min(x_min, p.epoch);
        x_max = std::max(x_max, p.epoch);
        y_min = std::min(y_min, p.value);
        y_max = std::max(y_max, p.value);
    }
    if (x_max == x_min) x_max = x_min + 1.0;
    if (y_max == y_min) y_max = y_min + 1.0;
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    auto to_px = [&](const CurvePoint& p) {
        const int x = ml + static_cast<int>((p.epoch - x_min) / (x_max - x_min) * (W - ml - mr));
        const int y = H - mb - static_cast<int>((p.value - y_min) / (y_max - y_min) * (H - mt - mb));
        return cv::Point(x, y);
    };

    const cv::Scalar axis(60, 60, 60), line(160, 80, 20), grid(225, 225, 225);
    for (int i = 0; i <= 4; ++i) {
        const double yv = y_min + (y_max - y_min) * i / 4.0;
        const int y = H - mb - static_cast<int>((yv - y_min) / (y_max - y_min) * (H - mt - mb));
        cv::line(canvas, {ml, y}, {W - mr, y}, grid, 1);
        char label[32];
        std::snprintf(label, sizeof(label), "%.2f", yv);
        cv::putText(canvas, label, {8, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
    }
    for (int i = 0; i <= 4; ++i) {
        const double xv = x_min + (x_max - x_min) * i / 4.0;
        const int x = ml + static_cast<int>((xv - x_min) / (x_max - x_min) * (W - ml - mr));
        cv::line(canvas, {x, H - mb}, {x, mt}, grid, 1);
        char label[32];
        std::snprintf(label, sizeof(label), "%g", xv);
        cv::putText(canvas, label, {x - 12, H - mb + 22}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1,
                    cv::LINE_AA);
    }
    cv::line(canvas, {ml, mt}, {ml, H - mb}, axis, 2);
    cv::line(canvas, {ml, H - mb}, {W - mr, H - mb}, axis, 2);
    cv::putText(canvas, x_label, {(W - ml - mr) / 2 + ml - 30, H - 20}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
                axis, 1, cv::LINE_AA);
    cv::putText(canvas, y_label, {12, mt - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.6, axis, 1, cv::LINE_AA);

    for (std::size_t i = 1; i < points.size(); ++i)
        cv::line(canvas, to_px(points[i - 1]), to_px(points[i]), line, 2, cv::LINE_AA);
    for (const auto& p : points) cv::circle(canvas, to_px(p), 4, line, cv::FILLED, cv::LINE_AA);

    std::filesystem::create_directories(png_path.parent_path().empty() ? "." : png_path.parent_path());
    if (!cv::imwrite(png_path.string(), canvas))
        throw std::runtime_error("cannot write chart " + png_path.string());
}

}  // namespace c2p::chart
