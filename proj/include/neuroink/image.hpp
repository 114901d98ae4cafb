#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "neuroink/common.hpp"

namespace neuroink {

// 8-bit single-channel image, row-major. All pixel math in the pipeline
// happens on this type; OpenCV is used only at the file boundary.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> px;  // size == width * height

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), px(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return px[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const GrayImage&) const = default;
};

inline GrayImage load_image_gray(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty())
        throw Error::data("UndecodableImage", "cannot decode " + path.string());
    GrayImage img(m.cols, m.rows);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x)
            img.at(x, y) = m.at<std::uint8_t>(y, x);
    return img;
}

// Probe dimensions without keeping the pixels (ingest records aspect ratio).
inline std::pair<int, int> probe_image_size(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty())
        throw Error::data("UndecodableImage", "cannot decode " + path.string());
    return {m.cols, m.rows};
}

inline void save_png(const GrayImage& img, const std::filesystem::path& path) {
    cv::Mat m(img.height, img.width, CV_8UC1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            m.at<std::uint8_t>(y, x) = img.at(x, y);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m))
        throw Error::runtime("WriteFailure", "cannot write " + path.string());
}

inline double mean_intensity(const GrayImage& img) {
    if (img.px.empty()) return 0.0;
    double s = 0.0;
    for (auto v : img.px) s += v;
    return s / static_cast<double>(img.px.size());
}

}  // namespace neuroink
