#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "pivot/action_space.hpp"
#include "pivot/camera.hpp"
#include "pivot/common.hpp"

namespace pivot {

/// One drawable candidate marker: an arrow shaft from start_px to end_px with
/// a circled numeric label at the end. Markers without a shaft (keypoints,
/// pickplace pick locations) set has_shaft = false. depth carries the cart3d
/// camera-frame forward displacement in meters and is 0 for 2D spaces.
struct ArrowGeometry {
    Eigen::Vector2d start_px{0.0, 0.0};
    Eigen::Vector2d end_px{0.0, 0.0};
    double depth = 0.0;
    int label_id = 0;
    bool has_shaft = true;
    bool clipped = false;
};

namespace detail {

inline bool inside_rect(const Eigen::Vector2d& p, double w, double h) {
    return p.x() >= 0.0 && p.x() <= w - 1.0 && p.y() >= 0.0 && p.y() <= h - 1.0;
}

// Liang-Barsky clip of the segment a->b against [0, w-1] x [0, h-1].
// Returns false when the segment lies entirely outside.
inline bool clip_segment(Eigen::Vector2d& a, Eigen::Vector2d& b, double w, double h) {
    const double xmax = w - 1.0, ymax = h - 1.0;
    double t0 = 0.0, t1 = 1.0;
    const Eigen::Vector2d d = b - a;
    const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
    const double q[4] = {a.x() - 0.0, xmax - a.x(), a.y() - 0.0, ymax - a.y()};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
        } else {
            const double r = q[i] / p[i];
            if (p[i] < 0.0) {
                if (r > t1) return false;
                t0 = std::max(t0, r);
            } else {
                if (r < t0) return false;
                t1 = std::min(t1, r);
            }
        }
    }
    const Eigen::Vector2d na = a + t0 * d;
    const Eigen::Vector2d nb = a + t1 * d;
    a = na;
    b = nb;
    return true;
}

inline Eigen::Vector2d clamp_to_rect(const Eigen::Vector2d& p, double w, double h) {
    return {std::min(w - 1.0, std::max(0.0, p.x())), std::min(h - 1.0, std::max(0.0, p.y()))};
}

// Clips both endpoints into the image, preserving the arrow direction where
// possible, and flags the geometry when anything moved.
inline void clip_geometry(ArrowGeometry& g, int image_w, int image_h) {
    const double w = image_w, h = image_h;
    const bool start_in = inside_rect(g.start_px, w, h);
    const bool end_in = inside_rect(g.end_px, w, h);
    if (start_in && end_in) return;
    Eigen::Vector2d a = g.start_px, b = g.end_px;
    if ((g.start_px - g.end_px).norm() > 0.0 && clip_segment(a, b, w, h)) {
        g.start_px = a;
        g.end_px = b;
    } else {
        g.start_px = clamp_to_rect(g.start_px, w, h);
        g.end_px = clamp_to_rect(g.end_px, w, h);
    }
    g.clipped = true;
}

inline Eigen::Vector2d origin_pixel(const ActionSpaceSpec& spec, int image_w, int image_h) {
    switch (spec.origin_mode) {
        case OriginMode::image_bottom_center:
            return {image_w / 2.0, image_h - 1.0};
        case OriginMode::image_center:
            return {image_w / 2.0, image_h / 2.0};
        case OriginMode::end_effector_pixel:
            if (!spec.origin_px.allFinite())
                throw ConfigError("origin_mode end-effector-pixel requires origin_px");
            return spec.origin_px;
    }
    return {0.0, 0.0};
}

}  // namespace detail

/// Maps one action to its drawable geometries. nav2d actions are pixel
/// targets reached by an arrow from the configured origin; keypoint2d actions
/// are bare markers; cart3d actions are projected through the camera with the
/// forward (camera z) displacement recorded as depth; pickplace actions yield
/// two geometries, the pick marker and the pick-to-place arrow, sharing one
/// label. Endpoints outside the image are clipped to the border and flagged.
inline std::vector<ArrowGeometry> action_to_geometry(const ActionSpaceSpec& spec,
                                                     const std::optional<CameraModel>& camera,
                                                     const Action& action, int label_id,
                                                     int image_w, int image_h) {
    if (action.components.size() != spec.dims())
        throw DimensionMismatch("action_to_geometry: action dims do not match space");
    if (spec.kind == SpaceKind::cart3d && !camera)
        throw MissingCamera("action_to_geometry: cart3d space requires a camera model");

    std::vector<ArrowGeometry> out;
    const auto& a = action.components;
    switch (spec.kind) {
        case SpaceKind::nav2d: {
            ArrowGeometry g;
            g.start_px = detail::origin_pixel(spec, image_w, image_h);
            g.end_px = {a[0], a[1]};
            g.label_id = label_id;
            out.push_back(g);
            break;
        }
        case SpaceKind::keypoint2d: {
            ArrowGeometry g;
            g.start_px = g.end_px = {a[0], a[1]};
            g.label_id = label_id;
            g.has_shaft = false;
            out.push_back(g);
            break;
        }
        case SpaceKind::cart3d: {
            ArrowGeometry g;
            const Eigen::Vector3d displacement{a[0], a[1], a[2]};
            if (spec.origin_mode == OriginMode::end_effector_pixel && !spec.origin_px.allFinite()) {
                // Arrows emanate from the end-effector, the action-frame origin.
                g.start_px = project(*camera, Eigen::Vector3d::Zero());
            } else {
                g.start_px = detail::origin_pixel(spec, image_w, image_h);
            }
            g.end_px = project(*camera, displacement);
            g.depth = camera->rotate_to_camera(displacement).z();
            g.label_id = label_id;
            out.push_back(g);
            break;
        }
        case SpaceKind::pickplace: {
            ArrowGeometry pick;
            pick.start_px = pick.end_px = {a[0], a[1]};
            pick.label_id = label_id;
            pick.has_shaft = false;
            ArrowGeometry place;
            place.start_px = {a[0], a[1]};
            place.end_px = {a[2], a[3]};
            place.label_id = label_id;
            out.push_back(pick);
            out.push_back(place);
            break;
        }
    }
    for (auto& g : out) detail::clip_geometry(g, image_w, image_h);
    return out;
}

/// Range of cart3d forward displacements reachable within the space bounds,
/// by interval arithmetic on the extrinsic's third rotation row. Returns
/// (0, 0) for spaces without a depth dimension.
inline std::pair<double, double> depth_range_for(const ActionSpaceSpec& spec,
                                                 const std::optional<CameraModel>& camera) {
    if (spec.kind != SpaceKind::cart3d || !camera) return {0.0, 0.0};
    const Eigen::Matrix3d rot = camera->extrinsic.topLeftCorner<3, 3>();
    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double r = rot(2, i);
        lo += std::min(r * spec.lower[i], r * spec.upper[i]);
        hi += std::max(r * spec.lower[i], r * spec.upper[i]);
    }
    return {lo, hi};
}

}  // namespace pivot
