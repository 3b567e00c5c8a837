#pragma once

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <string>
#include <vector>

#include "pivot/annotate.hpp"
#include "pivot/common.hpp"

namespace pivot {

enum class ArrowDatasetMode { blank_background, object_referential };

/// Parameter grid for the procedural arrow-robustness datasets: arrow color,
/// thickness, relative arrowhead size, and the four diagonal directions.
struct ArrowDatasetParams {
    std::vector<std::pair<std::string, Rgb>> colors{
        {"red", {255, 0, 0}},   {"orange", {255, 165, 0}}, {"yellow", {255, 255, 0}},
        {"green", {0, 160, 0}}, {"blue", {0, 0, 255}},     {"purple", {160, 32, 240}}};
    std::vector<int> thicknesses{2, 4, 6};
    std::vector<double> arrowhead_ratios{0.1, 0.3, 0.5};
    std::vector<std::string> directions{"up+right", "down+right", "up+left", "down+left"};
    int image_size = 256;
    ArrowDatasetMode mode = ArrowDatasetMode::blank_background;
    uint64_t seed = 0;
};

struct ArrowSample {
    cv::Mat image;
    std::string file_name;
    std::string query;
    std::string truth;
};

namespace detail {

inline Eigen::Vector2d direction_vector(const std::string& name) {
    // Image coordinates: +x right, +y down.
    if (name == "up+right") return {1.0, -1.0};
    if (name == "down+right") return {1.0, 1.0};
    if (name == "up+left") return {-1.0, -1.0};
    if (name == "down+left") return {-1.0, 1.0};
    throw ConfigError("unknown arrow direction '" + name + "'");
}

inline void draw_plain_arrow(cv::Mat& img, const Eigen::Vector2d& from, const Eigen::Vector2d& to,
                             const Rgb& color, int thickness, double head_ratio) {
    cv::arrowedLine(img, {int(std::lround(from.x())), int(std::lround(from.y()))},
                    {int(std::lround(to.x())), int(std::lround(to.y()))}, to_bgr(color), thickness,
                    cv::LINE_8, 0, head_ratio);
}

}  // namespace detail

/// Generates the procedural dataset. Blank mode draws one arrow per grid cell
/// on a white background, labeled with its direction class. Object-referential
/// mode draws three named objects and three numbered arrows, exactly one of
/// which points at the queried object; the label of that arrow is the ground
/// truth. Deterministic for a fixed seed.
inline std::vector<ArrowSample> gen_arrow_dataset(const ArrowDatasetParams& params) {
    std::vector<ArrowSample> samples;
    Rng rng(derive_seed(params.seed, 0xa7705));
    const int size = params.image_size;
    int index = 0;

    const std::array<std::pair<std::string, Rgb>, 3> objects{{
        {"red square", {220, 30, 30}},
        {"green circle", {30, 180, 30}},
        {"blue triangle", {40, 60, 220}},
    }};

    for (const auto& [color_name, color] : params.colors) {
        for (const int thickness : params.thicknesses) {
            for (const double head : params.arrowhead_ratios) {
                for (const auto& direction : params.directions) {
                    ArrowSample sample;
                    char name[128];
                    std::snprintf(name, sizeof(name), "arrow_%04d_%s_t%d_h%02d_%s.png", index,
                                  color_name.c_str(), thickness, int(head * 10),
                                  direction.c_str());
                    sample.file_name = name;

                    if (params.mode == ArrowDatasetMode::blank_background) {
                        sample.image = cv::Mat(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
                        const Eigen::Vector2d dir = detail::direction_vector(direction).normalized();
                        const double length = size * rng.uniform(0.25, 0.4);
                        const Eigen::Vector2d center{size * rng.uniform(0.4, 0.6),
                                                     size * rng.uniform(0.4, 0.6)};
                        detail::draw_plain_arrow(sample.image, center - 0.5 * length * dir,
                                                 center + 0.5 * length * dir, color, thickness,
                                                 head);
                        sample.query =
                            "What direction is the arrow pointing? Answer with one of: up+right, "
                            "down+right, up+left, down+left.";
                        sample.truth = direction;
                    } else {
                        sample.image = cv::Mat(size, size, CV_8UC3, cv::Scalar(235, 235, 235));
                        // Three objects on a jittered diagonal, three arrows from the
                        // center region; arrow i points at object i.
                        std::array<Eigen::Vector2d, 3> anchors;
                        for (int i = 0; i < 3; ++i)
                            anchors[i] = {size * (0.2 + 0.3 * i) + rng.uniform(-8.0, 8.0),
                                          size * (0.25 + 0.25 * i) + rng.uniform(-8.0, 8.0)};
                        for (int i = 0; i < 3; ++i) {
                            const auto& [obj_name, obj_color] = objects[i];
                            const cv::Point p{int(anchors[i].x()), int(anchors[i].y())};
                            if (i == 0)
                                cv::rectangle(sample.image, p - cv::Point(12, 12),
                                              p + cv::Point(12, 12), to_bgr(obj_color),
                                              cv::FILLED);
                            else if (i == 1)
                                cv::circle(sample.image, p, 13, to_bgr(obj_color), cv::FILLED);
                            else
                                cv::drawMarker(sample.image, p, to_bgr(obj_color),
                                               cv::MARKER_TRIANGLE_UP, 26, cv::FILLED);
                        }
                        const int target = int(rng.uniform_int(3));
                        for (int i = 0; i < 3; ++i) {
                            const Eigen::Vector2d tail{size * rng.uniform(0.35, 0.65),
                                                       size * rng.uniform(0.35, 0.65)};
                            const Eigen::Vector2d to_obj = (anchors[i] - tail).normalized();
                            const Eigen::Vector2d tip = anchors[i] - 18.0 * to_obj;
                            detail::draw_plain_arrow(sample.image, tail, tip, color, thickness,
                                                     head);
                            const cv::Point lp{int(tail.x()), int(tail.y())};
                            cv::circle(sample.image, lp, 10, to_bgr(color), cv::FILLED);
                            cv::putText(sample.image, std::to_string(i + 1),
                                        lp + cv::Point(-4, 4), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                                        {255, 255, 255}, 1, cv::LINE_8);
                        }
                        sample.query = "Which numbered arrow points at the " +
                                       objects[target].first + "? Answer with the number.";
                        sample.truth = std::to_string(target + 1);
                    }
                    samples.push_back(std::move(sample));
                    ++index;
                }
            }
        }
    }
    return samples;
}

/// Writes the PNGs plus a line-delimited manifest (image path, query string,
/// ground-truth string per record).
inline void write_arrow_dataset(const std::vector<ArrowSample>& samples,
                                const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    std::ofstream manifest(fs::path(out_dir) / "manifest.jsonl");
    if (!manifest) throw IoError("cannot write manifest in " + out_dir);
    for (const auto& s : samples) {
        const std::string path = (fs::path(out_dir) / s.file_name).string();
        if (!cv::imwrite(path, s.image)) throw IoError("cannot write " + path);
        manifest << nlohmann::json{{"image", s.file_name}, {"query", s.query}, {"truth", s.truth}}
                 << "\n";
    }
}

}  // namespace pivot
