#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "neuroink/common.hpp"
#include "neuroink/core.hpp"
#include "neuroink/image.hpp"

namespace neuroink {

// Image-modality preprocessing chain, fixed order: resize -> luminosity -> blur.
struct PrepParams {
    int target_px = kCanvasPx;
    double luminosity_target = 275.0;  // gain = target / 255 with saturation
    double blur_sigma = 1.0;           // Gaussian sigma in px, kernel cut at 3 sigma

    void validate() const {
        if (target_px <= 0) throw Error::data("InvalidParams", "target_px must be positive");
        if (blur_sigma < 0.0) throw Error::data("InvalidParams", "blur_sigma must be >= 0");
    }

    std::string digest() const {
        std::ostringstream ss;
        ss.precision(17);
        ss << "imageprep|v" << kPipelineVersion << "|resize>luminosity>blur|" << target_px
           << '|' << luminosity_target << '|' << blur_sigma;
        return fnv1a_digest(ss.str());
    }
};

// Bilinear resize to target x target. Non-square inputs are center-cropped to
// square first and a warning is recorded.
inline GrayImage resize_square(const GrayImage& src, int target_px = kCanvasPx,
                               WarningLog* warnings = nullptr) {
    if (src.width <= 0 || src.height <= 0)
        throw Error::data("UndecodableImage", "empty image buffer");

    GrayImage sq = src;
    if (src.width != src.height) {
        if (warnings)
            warnings->push_back({"non_square_input",
                                 std::to_string(src.width) + "x" + std::to_string(src.height) +
                                     " center-cropped to square"});
        const int side = std::min(src.width, src.height);
        const int x0 = (src.width - side) / 2;
        const int y0 = (src.height - side) / 2;
        sq = GrayImage(side, side);
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                sq.at(x, y) = src.at(x0 + x, y0 + y);
    }
    if (sq.width == target_px) return sq;

    GrayImage out(target_px, target_px);
    const double scale = static_cast<double>(sq.width) / target_px;
    for (int y = 0; y < target_px; ++y) {
        const double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, sq.height - 1.0);
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = std::min(y0 + 1, sq.height - 1);
        const double fy = sy - y0;
        for (int x = 0; x < target_px; ++x) {
            const double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, sq.width - 1.0);
            const int x0 = static_cast<int>(std::floor(sx));
            const int x1 = std::min(x0 + 1, sq.width - 1);
            const double fx = sx - x0;
            const double v = (1 - fy) * ((1 - fx) * sq.at(x0, y0) + fx * sq.at(x1, y0)) +
                             fy * ((1 - fx) * sq.at(x0, y1) + fx * sq.at(x1, y1));
            out.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    }
    return out;
}

// v -> clip(round(v * target/255), 0, 255)
inline GrayImage scale_luminosity(const GrayImage& src, double luminosity_target = 275.0) {
    GrayImage out = src;
    const double gain = luminosity_target / 255.0;
    for (auto& v : out.px)
        v = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v * gain), 0, 255));
    return out;
}

inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable Gaussian, reflect padding, quantized once at the end.
inline GrayImage gaussian_blur(const GrayImage& src, double sigma = 1.0) {
    if (sigma <= 0.0) return src;
    const auto k = gaussian_kernel(sigma);
    const int radius = (static_cast<int>(k.size()) - 1) / 2;
    const int w = src.width, h = src.height;

    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };

    std::vector<double> tmp(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += k[i + radius] * src.at(reflect(x + i, w), y);
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += k[i + radius] * tmp[static_cast<std::size_t>(reflect(y + i, h)) * w + x];
            out.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(s, 0.0, 255.0)));
        }
    return out;
}

inline CanonicalImage prep_image(const GrayImage& src, const PrepParams& params,
                                 const std::string& sample_id = "",
                                 WarningLog* warnings = nullptr) {
    params.validate();
    GrayImage img = resize_square(src, params.target_px, warnings);
    img = scale_luminosity(img, params.luminosity_target);
    img = gaussian_blur(img, params.blur_sigma);
    return CanonicalImage{std::move(img), {sample_id, kPipelineVersion, params.digest()}};
}

}  // namespace neuroink
