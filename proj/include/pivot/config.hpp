#pragma once

#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "pivot/annotate.hpp"
#include "pivot/optimize.hpp"
#include "pivot/remote.hpp"

namespace pivot {

enum class OracleMode { synthetic, replay, remote, text_baseline };

inline OracleMode oracle_mode_from_string(const std::string& s) {
    if (s == "synthetic") return OracleMode::synthetic;
    if (s == "replay") return OracleMode::replay;
    if (s == "remote") return OracleMode::remote;
    if (s == "text-baseline") return OracleMode::text_baseline;
    throw ConfigError("unknown oracle mode '" + s + "'");
}

namespace config_detail {

inline SpaceKind space_kind_from_string(const std::string& s) {
    if (s == "nav2d") return SpaceKind::nav2d;
    if (s == "cart3d") return SpaceKind::cart3d;
    if (s == "pickplace") return SpaceKind::pickplace;
    if (s == "keypoint2d") return SpaceKind::keypoint2d;
    throw ConfigError("unknown action space kind '" + s + "'");
}

inline OriginMode origin_mode_from_string(const std::string& s) {
    if (s == "image-bottom-center") return OriginMode::image_bottom_center;
    if (s == "image-center") return OriginMode::image_center;
    if (s == "end-effector-pixel") return OriginMode::end_effector_pixel;
    throw ConfigError("unknown origin mode '" + s + "'");
}

inline PromptStyle prompt_style_from_string(const std::string& s) {
    if (s == "zero-shot-cot") return PromptStyle::zero_shot_cot;
    if (s == "zero-shot-direct") return PromptStyle::zero_shot_direct;
    if (s == "few-shot-cot") return PromptStyle::few_shot_cot;
    if (s == "few-shot-direct") return PromptStyle::few_shot_direct;
    throw ConfigError("unknown prompt style '" + s + "'");
}

inline TaskKind task_kind_from_string(const std::string& s) {
    if (s == "navigation") return TaskKind::navigation;
    if (s == "manipulation") return TaskKind::manipulation;
    if (s == "keypoint") return TaskKind::keypoint;
    if (s == "pickplace") return TaskKind::pickplace;
    throw ConfigError("unknown task kind '" + s + "'");
}

inline Segment segment_from_string(const std::string& s) {
    if (s == "preamble") return Segment::preamble;
    if (s == "image") return Segment::image;
    if (s == "task") return Segment::task;
    throw ConfigError("unknown prompt segment '" + s + "'");
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& arr, const std::string& where) {
    if (!arr.is_array()) throw ConfigError(where + " must be an array");
    Eigen::VectorXd v(arr.size());
    for (size_t i = 0; i < arr.size(); ++i) v[i] = arr.at(i).get<double>();
    return v;
}

inline Rgb rgb_from_json(const nlohmann::json& arr, const std::string& where) {
    if (!arr.is_array() || arr.size() != 3) throw ConfigError(where + " must be [r, g, b]");
    return {arr.at(0).get<int>(), arr.at(1).get<int>(), arr.at(2).get<int>()};
}

}  // namespace config_detail

inline ActionSpaceSpec action_space_from_json(const nlohmann::json& j) {
    ActionSpaceSpec spec;
    if (!j.contains("kind")) throw ConfigError("action_space: missing field kind");
    spec.kind = config_detail::space_kind_from_string(j.at("kind").get<std::string>());
    if (!j.contains("lower") || !j.contains("upper"))
        throw ConfigError("action_space: missing field lower/upper");
    spec.lower = config_detail::vector_from_json(j.at("lower"), "action_space.lower");
    spec.upper = config_detail::vector_from_json(j.at("upper"), "action_space.upper");
    if (j.contains("origin_mode"))
        spec.origin_mode =
            config_detail::origin_mode_from_string(j.at("origin_mode").get<std::string>());
    else if (spec.kind == SpaceKind::cart3d)
        spec.origin_mode = OriginMode::end_effector_pixel;
    if (j.contains("origin_px")) {
        const auto v = config_detail::vector_from_json(j.at("origin_px"), "action_space.origin_px");
        if (v.size() != 2) throw ConfigError("action_space.origin_px must be [u, v]");
        spec.origin_px = v.head<2>();
    }
    spec.gripper_flag = j.value("gripper_flag", false);
    spec.validate();
    return spec;
}

inline AnnotationStyle style_from_json(const nlohmann::json& j) {
    AnnotationStyle style;
    style.arrow_thickness_px = j.value("arrow_thickness_px", style.arrow_thickness_px);
    style.arrowhead_ratio = j.value("arrowhead_ratio", style.arrowhead_ratio);
    style.label_radius_px = j.value("label_radius_px", style.label_radius_px);
    style.font_height_px = j.value("font_height_px", style.font_height_px);
    style.min_spacing_px = j.value("min_spacing_px", style.min_spacing_px);
    if (j.contains("color_near"))
        style.color_near = config_detail::rgb_from_json(j.at("color_near"), "style.color_near");
    if (j.contains("color_far"))
        style.color_far = config_detail::rgb_from_json(j.at("color_far"), "style.color_far");
    style.validate();
    return style;
}

inline PivotConfig pivot_config_from_json(const nlohmann::json& j) {
    PivotConfig c;
    c.samples = j.value("samples", c.samples);
    c.iterations = j.value("iterations", c.iterations);
    c.top_k = j.value("k", c.top_k);
    c.parallel = j.value("parallel", c.parallel);
    if (j.contains("aggregation")) {
        const std::string a = j.at("aggregation").get<std::string>();
        if (a == "refit")
            c.aggregation = Aggregation::refit;
        else if (a == "arbitrate")
            c.aggregation = Aggregation::arbitrate;
        else
            throw ConfigError("pivot.aggregation must be refit or arbitrate");
    }
    c.sigma_floor = j.value("sigma_floor", c.sigma_floor);
    c.shrink = j.value("shrink", c.shrink);
    c.seed = j.value("seed", c.seed);
    c.oracle_retries = j.value("oracle_retries", c.oracle_retries);
    c.spacing_retries = j.value("spacing_retries", c.spacing_retries);
    c.store_images = j.value("store_images", c.store_images);
    if (j.contains("prompt_style"))
        c.prompt_style =
            config_detail::prompt_style_from_string(j.at("prompt_style").get<std::string>());
    if (j.contains("task_kind"))
        c.task_kind = config_detail::task_kind_from_string(j.at("task_kind").get<std::string>());
    if (j.contains("ordering")) {
        const auto& arr = j.at("ordering");
        if (!arr.is_array() || arr.size() != 3)
            throw ConfigError("pivot.ordering must list preamble, image, task in some order");
        for (int i = 0; i < 3; ++i)
            c.ordering[i] = config_detail::segment_from_string(arr.at(i).get<std::string>());
    }
    if (j.contains("exemplars"))
        for (const auto& e : j.at("exemplars")) c.exemplars.push_back(e.get<std::string>());
    c.validate();
    return c;
}

struct OracleConfig {
    OracleMode mode = OracleMode::synthetic;
    double noise_sigma = 0.0;
    Eigen::VectorXd truth;                // synthetic / text-baseline
    std::vector<std::string> script;      // replay
    std::optional<RemoteConfig> remote;   // remote
};

inline OracleConfig oracle_config_from_json(const nlohmann::json& j) {
    OracleConfig c;
    if (!j.contains("mode")) throw ConfigError("oracle: missing field mode");
    c.mode = oracle_mode_from_string(j.at("mode").get<std::string>());
    c.noise_sigma = j.value("noise_sigma", 0.0);
    if (j.contains("truth"))
        c.truth = config_detail::vector_from_json(j.at("truth"), "oracle.truth");
    if (j.contains("script"))
        for (const auto& s : j.at("script")) c.script.push_back(s.get<std::string>());
    if (j.contains("remote")) {
        const auto& r = j.at("remote");
        RemoteConfig rc;
        if (!r.contains("endpoint")) throw ConfigError("oracle.remote: missing field endpoint");
        rc.endpoint = r.at("endpoint").get<std::string>();
        rc.api_key_env = r.value("api_key_env", "");
        rc.model = r.value("model", rc.model);
        if (r.contains("schema"))
            rc.schema = RemoteConfig::schema_from_string(r.at("schema").get<std::string>());
        rc.timeout_s = r.value("timeout_s", rc.timeout_s);
        rc.max_retries = r.value("max_retries", rc.max_retries);
        rc.max_in_flight = r.value("max_in_flight", rc.max_in_flight);
        c.remote = rc;
    }
    if (c.mode == OracleMode::synthetic && c.truth.size() == 0)
        throw ConfigError("oracle: synthetic mode requires field truth");
    if (c.mode == OracleMode::replay && c.script.empty())
        throw ConfigError("oracle: replay mode requires field script");
    if (c.mode == OracleMode::remote && !c.remote)
        throw ConfigError("oracle: remote mode requires section remote");
    return c;
}

/// Merged view of one run's configuration, mirroring the config file layout.
struct RunConfig {
    PivotConfig pivot;
    AnnotationStyle style;
    std::optional<ActionSpaceSpec> space;
    std::optional<CameraModel> camera;
    OracleConfig oracle;
    nlohmann::json raw;  // snapshot written into the run directory
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.raw = j;
    if (j.contains("pivot")) c.pivot = pivot_config_from_json(j.at("pivot"));
    if (j.contains("style")) c.style = style_from_json(j.at("style"));
    if (j.contains("action_space")) c.space = action_space_from_json(j.at("action_space"));
    if (j.contains("camera")) c.camera = CameraModel::from_json(j.at("camera"));
    if (!j.contains("oracle")) throw ConfigError("config: missing section oracle");
    c.oracle = oracle_config_from_json(j.at("oracle"));
    return c;
}

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return j;
}

inline RunConfig load_run_config(const std::string& path) {
    return run_config_from_json(load_json_file(path));
}

}  // namespace pivot
