#pragma once

#include <filesystem>
#include <opencv2/core.hpp>
#include <string>

#include "pivot/action_space.hpp"
#include "pivot/annotate.hpp"
#include "pivot/camera.hpp"

namespace testutil {

inline cv::Mat white_image(int w = 640, int h = 480) {
    return cv::Mat(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
}

inline pivot::CameraModel basic_camera(double fx = 500.0, double fy = 500.0, double cx = 320.0,
                                       double cy = 240.0, int w = 640, int h = 480) {
    pivot::CameraModel cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.image_w = w;
    cam.image_h = h;
    return cam;
}

inline pivot::CameraModel camera_with_z_offset(double z) {
    pivot::CameraModel cam = basic_camera();
    cam.extrinsic(2, 3) = z;  // action-frame origin sits z meters ahead of the camera
    return cam;
}

inline pivot::AnnotationStyle plain_style() {
    pivot::AnnotationStyle style;
    style.min_spacing_px = 0;
    return style;
}

/// Fresh scratch directory under the system temp root.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("pivot_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
};

inline bool image_contains_bgr(const cv::Mat& img, const cv::Vec3b& bgr) {
    for (int r = 0; r < img.rows; ++r)
        for (int c = 0; c < img.cols; ++c)
            if (img.at<cv::Vec3b>(r, c) == bgr) return true;
    return false;
}

}  // namespace testutil
