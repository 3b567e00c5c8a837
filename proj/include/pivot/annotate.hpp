#pragma once

#include <map>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>
#include <string>
#include <vector>

#include "pivot/action_space.hpp"
#include "pivot/common.hpp"
#include "pivot/geometry.hpp"

namespace pivot {

struct Rgb {
    int r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

inline cv::Scalar to_bgr(const Rgb& c) { return {double(c.b), double(c.g), double(c.r)}; }

/// Marker styling knobs. color_near/color_far are the spectrum endpoints for
/// backward (toward camera) and forward (away) motion.
struct AnnotationStyle {
    int arrow_thickness_px = 2;
    double arrowhead_ratio = 0.25;
    int label_radius_px = 12;
    Rgb color_near{0, 0, 255};  // blue: toward the camera
    Rgb color_far{255, 0, 0};   // red: away from the camera
    int font_height_px = 11;
    int min_spacing_px = 24;

    void validate() const {
        if (arrow_thickness_px < 1) throw ConfigError("style: arrow_thickness_px must be >= 1");
        if (!(arrowhead_ratio > 0.0 && arrowhead_ratio <= 1.0))
            throw ConfigError("style: arrowhead_ratio must be in (0, 1]");
        if (label_radius_px < (font_height_px + 1) / 2)
            throw ConfigError("style: label_radius_px must be >= font_height_px / 2");
        if (min_spacing_px < 0) throw ConfigError("style: min_spacing_px must be >= 0");
    }
};

struct MarkerStyle {
    Rgb color;
    double radius_px = 0.0;
};

/// Linear two-endpoint depth coding: the farthest-forward depth (z_max) maps
/// to color_far at 0.6x the base radius, the maximally backward depth (z_min)
/// to color_near at 1.4x, the midpoint to the blended color at the base radius.
inline MarkerStyle depth_to_style(double depth, double z_min, double z_max,
                                  const AnnotationStyle& style) {
    double t = 0.5;
    if (z_max > z_min) {
        if (depth < z_min || depth > z_max)
            throw OutOfRangeDepth("depth_to_style: depth " + std::to_string(depth) +
                                  " outside [" + std::to_string(z_min) + ", " +
                                  std::to_string(z_max) + "]");
        t = (depth - z_min) / (z_max - z_min);
    }
    MarkerStyle out;
    out.color = Rgb{int(std::lround(lerp(style.color_near.r, style.color_far.r, t))),
                    int(std::lround(lerp(style.color_near.g, style.color_far.g, t))),
                    int(std::lround(lerp(style.color_near.b, style.color_far.b, t)))};
    out.radius_px = style.label_radius_px * lerp(1.4, 0.6, t);
    return out;
}

/// Greedy legibility filter: walking the geometries in label order, keeps one
/// iff its label center is at least min_spacing_px from every center already
/// kept. Returns the retained indices, order-stable.
inline std::vector<int> enforce_spacing(const std::vector<ArrowGeometry>& geometries,
                                        double min_spacing_px) {
    std::vector<int> kept;
    std::vector<Eigen::Vector2d> centers;
    for (int i = 0; i < static_cast<int>(geometries.size()); ++i) {
        const Eigen::Vector2d c = geometries[i].end_px;
        bool ok = true;
        for (const auto& prev : centers) {
            if ((c - prev).norm() < min_spacing_px) {
                ok = false;
                break;
            }
        }
        if (ok) {
            kept.push_back(i);
            centers.push_back(c);
        }
    }
    return kept;
}

/// The annotated visual prompt: raster plus the label -> action map the
/// oracle's answers are resolved against.
struct AnnotatedImage {
    cv::Mat pixels;  // 8UC3
    std::map<int, Action> labels;
    std::vector<ArrowGeometry> geometries;

    uint64_t pixel_hash() const {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (int r = 0; r < pixels.rows; ++r)
            h = fnv1a64(pixels.ptr(r), size_t(pixels.cols) * pixels.elemSize(), h);
        return h;
    }
};

namespace detail {

inline double font_scale_for_height(int font_height_px) {
    int base = 0;
    const cv::Size ref = cv::getTextSize("0", cv::FONT_HERSHEY_SIMPLEX, 1.0, 1, &base);
    return double(font_height_px) / double(ref.height);
}

inline void draw_marker(cv::Mat& img, const ArrowGeometry& g, const MarkerStyle& ms,
                        const AnnotationStyle& style) {
    const cv::Scalar color = to_bgr(ms.color);
    const cv::Point start{int(std::lround(g.start_px.x())), int(std::lround(g.start_px.y()))};
    const cv::Point end{int(std::lround(g.end_px.x())), int(std::lround(g.end_px.y()))};
    if (g.has_shaft && start != end)
        cv::arrowedLine(img, start, end, color, style.arrow_thickness_px, cv::LINE_8, 0,
                        style.arrowhead_ratio);
    const int radius = std::max(2, int(std::lround(ms.radius_px)));
    cv::circle(img, end, radius, color, cv::FILLED, cv::LINE_8);
    const std::string text = std::to_string(g.label_id);
    const double scale = font_scale_for_height(style.font_height_px);
    int baseline = 0;
    const cv::Size ts = cv::getTextSize(text, cv::FONT_HERSHEY_SIMPLEX, scale, 1, &baseline);
    const cv::Point org{end.x - ts.width / 2, end.y + ts.height / 2};
    cv::putText(img, text, org, cv::FONT_HERSHEY_SIMPLEX, scale, {255, 255, 255}, 1, cv::LINE_8);
}

}  // namespace detail

/// Draws every geometry as an arrow with a circled numeric label, styled by
/// depth. The base image is copied, never modified. labels must map exactly
/// the drawn label ids, consecutive from 1.
inline AnnotatedImage render(const cv::Mat& image, const std::vector<ArrowGeometry>& geometries,
                             const std::map<int, Action>& labels,
                             std::pair<double, double> depth_range,
                             const AnnotationStyle& style) {
    if (geometries.empty()) throw EmptyCandidateSet("render: no candidate geometries");
    style.validate();

    std::map<int, int> drawn_count;
    for (const auto& g : geometries) drawn_count[g.label_id]++;
    if (drawn_count.size() != labels.size())
        throw ConfigError("render: label map does not match drawn label ids");
    int expect = 1;
    for (const auto& [id, n] : drawn_count) {
        if (id != expect++) throw ConfigError("render: label ids must be consecutive from 1");
        if (!labels.count(id)) throw ConfigError("render: missing action for label " + std::to_string(id));
    }

    AnnotatedImage out;
    out.pixels = image.clone();
    out.labels = labels;
    out.geometries = geometries;
    const auto [z_min, z_max] = depth_range;
    for (const auto& g : geometries)
        detail::draw_marker(out.pixels, g, depth_to_style(g.depth, z_min, z_max, style), style);
    return out;
}

}  // namespace pivot
