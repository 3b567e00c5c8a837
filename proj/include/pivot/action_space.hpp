#pragma once

#include <Eigen/Core>
#include <limits>
#include <string>

#include "pivot/common.hpp"

namespace pivot {

enum class SpaceKind { nav2d, cart3d, pickplace, keypoint2d };

enum class OriginMode { image_bottom_center, image_center, end_effector_pixel };

inline int expected_dims(SpaceKind kind) {
    switch (kind) {
        case SpaceKind::nav2d: return 2;
        case SpaceKind::cart3d: return 3;
        case SpaceKind::keypoint2d: return 2;
        case SpaceKind::pickplace: return 4;  // (pick_u, pick_v, place_u, place_v)
    }
    return 0;
}

inline std::string to_string(SpaceKind kind) {
    switch (kind) {
        case SpaceKind::nav2d: return "nav2d";
        case SpaceKind::cart3d: return "cart3d";
        case SpaceKind::pickplace: return "pickplace";
        case SpaceKind::keypoint2d: return "keypoint2d";
    }
    return "?";
}

/// Bounded continuous action space. Bounds are pixels for nav2d/keypoint2d/
/// pickplace and meters for cart3d. The cart3d gripper flag is metadata only;
/// it is never part of the sampled vector.
struct ActionSpaceSpec {
    SpaceKind kind = SpaceKind::nav2d;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    OriginMode origin_mode = OriginMode::image_bottom_center;
    // Explicit (u, v) for end_effector_pixel mode. Left NaN on cart3d spaces,
    // the origin is the projected action-frame origin instead.
    Eigen::Vector2d origin_px{std::numeric_limits<double>::quiet_NaN(),
                              std::numeric_limits<double>::quiet_NaN()};
    bool gripper_flag = false;  // cart3d only

    int dims() const { return static_cast<int>(lower.size()); }

    void validate() const {
        if (lower.size() != upper.size())
            throw ConfigError("action space lower/upper length mismatch");
        if (dims() != expected_dims(kind))
            throw ConfigError("action space dims " + std::to_string(dims()) +
                              " do not match kind " + to_string(kind));
        for (int i = 0; i < dims(); ++i)
            if (!(lower[i] <= upper[i]))
                throw ConfigError("action space bound lower > upper at dim " + std::to_string(i));
    }

    Eigen::VectorXd midpoint() const { return 0.5 * (lower + upper); }

    double largest_extent() const {
        double e = 0.0;
        for (int i = 0; i < dims(); ++i) e = std::max(e, upper[i] - lower[i]);
        return e;
    }
};

struct Action {
    Eigen::VectorXd components;
};

/// Clips every component to the space bounds. Idempotent.
inline Action clamp(const ActionSpaceSpec& spec, const Action& action) {
    if (action.components.size() != spec.dims())
        throw DimensionMismatch("clamp: action has " + std::to_string(action.components.size()) +
                                " dims, space expects " + std::to_string(spec.dims()));
    Action out = action;
    for (int i = 0; i < spec.dims(); ++i)
        out.components[i] = std::min(spec.upper[i], std::max(spec.lower[i], out.components[i]));
    return out;
}

inline ActionSpaceSpec make_nav2d_space(int image_w, int image_h,
                                        OriginMode origin = OriginMode::image_bottom_center) {
    ActionSpaceSpec spec;
    spec.kind = SpaceKind::nav2d;
    spec.lower = Eigen::Vector2d(0.0, 0.0);
    spec.upper = Eigen::Vector2d(image_w - 1.0, image_h - 1.0);
    spec.origin_mode = origin;
    return spec;
}

inline ActionSpaceSpec make_keypoint2d_space(int image_w, int image_h) {
    ActionSpaceSpec spec;
    spec.kind = SpaceKind::keypoint2d;
    spec.lower = Eigen::Vector2d(0.0, 0.0);
    spec.upper = Eigen::Vector2d(image_w - 1.0, image_h - 1.0);
    spec.origin_mode = OriginMode::image_center;
    return spec;
}

inline ActionSpaceSpec make_cart3d_space(const Eigen::Vector3d& lower, const Eigen::Vector3d& upper,
                                         bool gripper_flag = false) {
    ActionSpaceSpec spec;
    spec.kind = SpaceKind::cart3d;
    spec.lower = lower;
    spec.upper = upper;
    spec.origin_mode = OriginMode::end_effector_pixel;  // projected end-effector by default
    spec.gripper_flag = gripper_flag;
    return spec;
}

}  // namespace pivot
