#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "pivot/common.hpp"

namespace pivot {

/// Pinhole camera with a rigid extrinsic mapping the action frame into the
/// camera frame (z forward, x right, y down).
struct CameraModel {
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    int image_w = 0, image_h = 0;
    Eigen::Matrix4d extrinsic = Eigen::Matrix4d::Identity();

    void validate() const {
        if (fx <= 0.0 || fy <= 0.0) throw ConfigError("camera: fx and fy must be positive");
        if (cx < 0.0 || cx >= image_w || cy < 0.0 || cy >= image_h)
            throw ConfigError("camera: principal point outside image");
    }

    Eigen::Vector3d to_camera_frame(const Eigen::Vector3d& p_action) const {
        return (extrinsic * p_action.homogeneous()).head<3>();
    }

    Eigen::Vector3d to_action_frame(const Eigen::Vector3d& p_camera) const {
        const Eigen::Matrix4d inv = extrinsic.inverse();
        return (inv * p_camera.homogeneous()).head<3>();
    }

    /// Camera-frame displacement of an action-frame displacement (rotation only).
    Eigen::Vector3d rotate_to_camera(const Eigen::Vector3d& v) const {
        return extrinsic.topLeftCorner<3, 3>() * v;
    }

    static CameraModel from_json(const nlohmann::json& j);
};

inline Eigen::Vector2d project(const CameraModel& cam, const Eigen::Vector3d& p_action) {
    const Eigen::Vector3d p = cam.to_camera_frame(p_action);
    if (p.z() <= 0.0)
        throw NonPositiveDepth("project: point has depth " + std::to_string(p.z()));
    return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

/// Inverse of project at a known camera-frame depth z; returns the action-frame point.
inline Eigen::Vector3d unproject(const CameraModel& cam, const Eigen::Vector2d& px, double z) {
    if (z <= 0.0) throw NonPositiveDepth("unproject: depth must be positive");
    const Eigen::Vector3d p_cam{(px.x() - cam.cx) / cam.fx * z, (px.y() - cam.cy) / cam.fy * z, z};
    return cam.to_action_frame(p_cam);
}

inline CameraModel CameraModel::from_json(const nlohmann::json& j) {
    CameraModel cam;
    for (const char* key : {"fx", "fy", "cx", "cy", "image_w", "image_h"})
        if (!j.contains(key)) throw ConfigError(std::string("camera: missing field ") + key);
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.image_w = j.at("image_w").get<int>();
    cam.image_h = j.at("image_h").get<int>();
    if (j.contains("extrinsic")) {
        const auto& e = j.at("extrinsic");
        if (!e.is_array() || e.size() != 16)
            throw ConfigError("camera: extrinsic must be a 4x4 row-major array of 16 numbers");
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) cam.extrinsic(r, c) = e.at(r * 4 + c).get<double>();
    }
    cam.validate();
    return cam;
}

}  // namespace pivot
