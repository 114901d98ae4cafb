#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "neuroink/common.hpp"
#include "neuroink/core.hpp"

namespace neuroink {

// Ink encoding: each sample becomes a filled black disc, positioned by its
// coordinates, sized by per-recording max-normalized pressure, composited
// source-over at fixed opacity onto a white canvas. Dense (slow) regions
// accumulate opacity and come out darker; sparse (fast) regions stay faint.
struct RenderParams {
    int canvas_px = kCanvasPx;
    double margin_frac = 0.05;  // blank border on each side, fraction of canvas
    double r_min_px = 0.75;
    double r_max_px = 3.0;
    double opacity = 0.10;
    bool include_pen_up = false;

    void validate() const {
        if (!(opacity > 0.0 && opacity <= 1.0))
            throw Error::data("InvalidParams", "opacity must be in (0, 1]");
        if (!(margin_frac >= 0.0 && margin_frac < 0.5))
            throw Error::data("InvalidParams", "margin_frac must be in [0, 0.5)");
        if (!(r_min_px > 0.0 && r_min_px <= r_max_px))
            throw Error::data("InvalidParams", "need 0 < r_min_px <= r_max_px");
        if (canvas_px <= 0)
            throw Error::data("InvalidParams", "canvas_px must be positive");
    }

    std::string digest() const {
        std::ostringstream ss;
        ss.precision(17);
        ss << "raster|v" << kPipelineVersion << '|' << canvas_px << '|' << margin_frac
           << '|' << r_min_px << '|' << r_max_px << '|' << opacity << '|'
           << include_pen_up;
        return fnv1a_digest(ss.str());
    }
};

namespace detail {

inline std::vector<const PenSample*> rendered_samples(const InkRecording& rec,
                                                      const RenderParams& params) {
    std::vector<const PenSample*> out;
    for (const auto& s : rec.samples)
        if (s.pen_down || params.include_pen_up) out.push_back(&s);
    return out;
}

}  // namespace detail

// Map ink coordinates into the content region (canvas minus margins), uniform
// scale, aspect preserved, centered on the short axis. Output v grows downward
// (image row convention); device y grows upward.
inline std::vector<std::pair<double, double>> normalize_coords(
    const InkRecording& rec, const RenderParams& params) {
    params.validate();
    auto pts = detail::rendered_samples(rec, params);
    if (pts.empty())
        throw Error::data("EmptyAfterFilter", "no pen-down samples to render");

    double minx = pts[0]->x, maxx = pts[0]->x, miny = pts[0]->y, maxy = pts[0]->y;
    for (const auto* s : pts) {
        minx = std::min(minx, s->x);
        maxx = std::max(maxx, s->x);
        miny = std::min(miny, s->y);
        maxy = std::max(maxy, s->y);
    }
    const double canvas = static_cast<double>(params.canvas_px);
    const double lo = params.margin_frac * canvas;
    const double content = canvas - 2.0 * lo;
    const double w = maxx - minx, h = maxy - miny;

    double scale;
    if (w <= 0.0 && h <= 0.0)
        scale = 0.0;  // degenerate: single point, everything maps to center
    else
        scale = content / std::max(w, h);

    // Offsets center the (possibly zero-extent) ink on each axis.
    const double ox = lo + (content - w * scale) / 2.0;
    const double oy = lo + (content - h * scale) / 2.0;

    std::vector<std::pair<double, double>> out;
    out.reserve(pts.size());
    for (const auto* s : pts) {
        const double u = ox + (s->x - minx) * scale;
        const double v = oy + (maxy - s->y) * scale;  // flip: image rows grow down
        out.emplace_back(u, v);
    }
    return out;
}

// p_norm = p / max(p) over rendered samples; an all-zero pressure recording
// renders every dot at full size instead of vanishing.
inline std::vector<double> normalize_pressure(const InkRecording& rec,
                                              const RenderParams& params,
                                              WarningLog* warnings = nullptr) {
    auto pts = detail::rendered_samples(rec, params);
    if (pts.empty())
        throw Error::data("EmptyAfterFilter", "no pen-down samples to render");
    double pmax = 0.0;
    for (const auto* s : pts) pmax = std::max(pmax, s->pressure);
    std::vector<double> out;
    out.reserve(pts.size());
    if (pmax <= 0.0) {
        if (warnings)
            warnings->push_back({"zero_pressure", "all pressures zero; dots at full size"});
        out.assign(pts.size(), 1.0);
        return out;
    }
    for (const auto* s : pts) out.push_back(s->pressure / pmax);
    return out;
}

inline std::vector<double> normalize_pressure(const InkRecording& rec,
                                              WarningLog* warnings = nullptr) {
    return normalize_pressure(rec, RenderParams{}, warnings);
}

// A pixel (centered at i+0.5, j+0.5) is inside a disc iff its center lies
// within Euclidean distance r of the dot center. No anti-aliasing, so the
// compositing law 255*(1-opacity)^n holds exactly per covered pixel.
inline CanonicalImage render(const InkRecording& rec, const RenderParams& params,
                             WarningLog* warnings = nullptr) {
    const auto coords = normalize_coords(rec, params);
    const auto pnorm = normalize_pressure(rec, params, warnings);

    const int n = params.canvas_px;
    std::vector<double> canvas(static_cast<std::size_t>(n) * n, 255.0);
    const double keep = 1.0 - params.opacity;

    for (std::size_t i = 0; i < coords.size(); ++i) {
        const auto [cx, cy] = coords[i];
        const double r = params.r_min_px + pnorm[i] * (params.r_max_px - params.r_min_px);
        const double r2 = r * r;
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1.0)));
        const int x1 = std::min(n - 1, static_cast<int>(std::ceil(cx + r + 1.0)));
        const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1.0)));
        const int y1 = std::min(n - 1, static_cast<int>(std::ceil(cy + r + 1.0)));
        for (int y = y0; y <= y1; ++y) {
            const double dy = (y + 0.5) - cy;
            for (int x = x0; x <= x1; ++x) {
                const double dx = (x + 0.5) - cx;
                if (dx * dx + dy * dy <= r2)
                    canvas[static_cast<std::size_t>(y) * n + x] *= keep;
            }
        }
    }

    CanonicalImage img;
    img.pixels = GrayImage(n, n);
    for (std::size_t i = 0; i < canvas.size(); ++i)
        img.pixels.px[i] = static_cast<std::uint8_t>(
            std::lround(std::clamp(canvas[i], 0.0, 255.0)));
    img.provenance = {"", kPipelineVersion, params.digest()};
    return img;
}

}  // namespace neuroink
