#pragma once

#include <algorithm>
#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>
#include <vector>

#include "pivot/optimize.hpp"

namespace pivot {

struct Obstacle {
    Eigen::VectorXd center;
    double radius = 0.0;
};

/// Desk-scale world, 2D (navigation) or 3D (reach). Distances in meters.
struct WorldState {
    Eigen::VectorXd agent_pos;
    Eigen::VectorXd target_pos;
    std::vector<Obstacle> obstacles;
    double max_step = 1.0;
    double success_radius = 0.5;
    int steps_taken = 0;
    int budget = 10;

    int dims() const { return static_cast<int>(agent_pos.size()); }
    double distance_to_target() const { return (target_pos - agent_pos).norm(); }
};

struct EpisodeResult {
    bool success = false;
    int steps = 0;
    bool reached = false;
    std::vector<Eigen::VectorXd> trajectory;
};

/// View geometry for rendering a world and converting between pixel targets
/// and world points. 2D worlds use a top-down affine mapping; 3D worlds a
/// pinhole camera.
struct SimViewSetup {
    int image_w = 320;
    int image_h = 240;
    // 2D top-down: world rectangle (x0, y0, x1, y1) shown in the image.
    Eigen::Vector4d world_rect{-5.0, -5.0, 5.0, 5.0};
    // 3D: camera and the cart3d displacement bounds offered to the optimizer.
    std::optional<CameraModel> camera;
    Eigen::Vector3d reach_lower{-1.0, -1.0, -1.0};
    Eigen::Vector3d reach_upper{1.0, 1.0, 1.0};
};

struct WorldView {
    cv::Mat image;
    Eigen::Vector2d agent_px{0.0, 0.0};

    // 2D affine mapping (identity placeholders for 3D views).
    Eigen::Vector2d rect_origin{0.0, 0.0};
    double px_per_m_x = 1.0, px_per_m_y = 1.0;
    double world_y_max = 0.0;
    bool top_down = true;

    Eigen::Vector2d world_to_px(const Eigen::Vector2d& w) const {
        return {(w.x() - rect_origin.x()) * px_per_m_x, (world_y_max - w.y()) * px_per_m_y};
    }
    Eigen::Vector2d px_to_world(const Eigen::Vector2d& px) const {
        return {rect_origin.x() + px.x() / px_per_m_x, world_y_max - px.y() / px_per_m_y};
    }
};

namespace detail {

inline void draw_disc(cv::Mat& img, const Eigen::Vector2d& center_px, double radius_px,
                      const cv::Scalar& color) {
    cv::circle(img, {int(std::lround(center_px.x())), int(std::lround(center_px.y()))},
               std::max(1, int(std::lround(radius_px))), color, cv::FILLED, cv::LINE_8);
}

}  // namespace detail

/// Renders the schematic scene (white ground, gray obstacles, green target,
/// blue agent) and returns the pixel<->world mapping the synthetic oracle
/// needs. 3D scenes are painted far to near by camera depth.
inline WorldView world_to_view(const WorldState& world, const SimViewSetup& setup) {
    WorldView view;
    view.image = cv::Mat(setup.image_h, setup.image_w, CV_8UC3, cv::Scalar(255, 255, 255));

    if (world.dims() == 2) {
        view.rect_origin = {setup.world_rect[0], setup.world_rect[1]};
        view.world_y_max = setup.world_rect[3];
        view.px_per_m_x = setup.image_w / (setup.world_rect[2] - setup.world_rect[0]);
        view.px_per_m_y = setup.image_h / (setup.world_rect[3] - setup.world_rect[1]);

        const Eigen::Vector2d target_px = view.world_to_px(world.target_pos.head<2>());
        if (target_px.x() < 0 || target_px.x() > setup.image_w - 1 || target_px.y() < 0 ||
            target_px.y() > setup.image_h - 1)
            throw TargetOutOfView("world_to_view: target outside the viewed rectangle");

        int shade = 0;
        for (const auto& obs : world.obstacles) {
            const int gray = 100 + 25 * (shade++ % 5);
            detail::draw_disc(view.image, view.world_to_px(obs.center.head<2>()),
                              obs.radius * view.px_per_m_x, cv::Scalar(gray, gray, gray));
        }
        detail::draw_disc(view.image, target_px, world.success_radius * view.px_per_m_x,
                          {0, 200, 0});
        view.agent_px = view.world_to_px(world.agent_pos.head<2>());
        detail::draw_disc(view.image, view.agent_px, 0.12 * view.px_per_m_x, {200, 80, 0});
        return view;
    }

    if (!setup.camera) throw ConfigError("world_to_view: 3D world requires a camera");
    const CameraModel& cam = *setup.camera;
    view.top_down = false;

    struct Drawable {
        Eigen::Vector3d p;
        double radius;
        cv::Scalar color;
    };
    std::vector<Drawable> items;
    int shade = 0;
    for (const auto& obs : world.obstacles) {
        const int gray = 100 + 25 * (shade++ % 5);
        items.push_back({obs.center.head<3>(), obs.radius, cv::Scalar(gray, gray, gray)});
    }
    items.push_back({world.target_pos.head<3>(), world.success_radius, {0, 200, 0}});
    items.push_back({world.agent_pos.head<3>(), 0.05, {200, 80, 0}});

    const Eigen::Vector3d target_cam = cam.to_camera_frame(world.target_pos.head<3>());
    if (target_cam.z() <= 0.0) throw TargetOutOfView("world_to_view: target behind the camera");
    const Eigen::Vector2d target_px = project(cam, world.target_pos.head<3>());
    if (target_px.x() < 0 || target_px.x() > cam.image_w - 1 || target_px.y() < 0 ||
        target_px.y() > cam.image_h - 1)
        throw TargetOutOfView("world_to_view: target outside the camera frustum");

    std::stable_sort(items.begin(), items.end(), [&](const Drawable& a, const Drawable& b) {
        return cam.to_camera_frame(a.p).z() > cam.to_camera_frame(b.p).z();  // far first
    });
    for (const auto& item : items) {
        const Eigen::Vector3d p_cam = cam.to_camera_frame(item.p);
        if (p_cam.z() <= 0.0) continue;
        detail::draw_disc(view.image, project(cam, item.p), item.radius * cam.fx / p_cam.z(),
                          item.color);
    }
    view.agent_px = project(cam, world.agent_pos.head<3>());
    return view;
}

/// Executes one action: the agent moves along the action direction by
/// min(|action|, max_step), stopping at the first obstacle surface. Returns
/// the new state; the input is untouched.
inline WorldState step(const WorldState& world, const Action& action) {
    if (world.steps_taken >= world.budget)
        throw BudgetExhausted("step: budget of " + std::to_string(world.budget) + " exhausted");
    if (action.components.size() != world.dims())
        throw DimensionMismatch("step: action dims do not match world");

    WorldState next = world;
    next.steps_taken += 1;
    const double norm = action.components.norm();
    if (norm == 0.0) return next;

    const Eigen::VectorXd dir = action.components / norm;
    double move = std::min(norm, world.max_step);

    constexpr double kContactEps = 1e-6;
    for (const auto& obs : world.obstacles) {
        const Eigen::VectorXd oc = world.agent_pos - obs.center;
        const double b = oc.dot(dir);
        const double c0 = oc.squaredNorm() - obs.radius * obs.radius;
        const double disc = b * b - c0;
        if (disc < 0.0) continue;
        const double t = -b - std::sqrt(disc);
        if (t >= 0.0 && t < move) move = std::max(0.0, t - kContactEps);
    }
    next.agent_pos = world.agent_pos + dir * move;
    return next;
}

/// Builds per-step oracles; the hint is the current-step ground-truth action,
/// which synthetic oracles track and scripted ones ignore.
using SimOracleFactory =
    std::function<std::unique_ptr<SelectionOracle>(const ActionSpaceSpec&, const Action& truth,
                                                   uint64_t step_seed)>;

/// Closed loop: render the view, optimize an action, execute it, and repeat
/// until the agent enters the success radius or the budget runs out.
inline EpisodeResult rollout(WorldState world, const SimViewSetup& setup,
                             const SimOracleFactory& make_oracle, const PivotConfig& base_config,
                             const AnnotationStyle& style, uint64_t seed,
                             std::vector<cv::Mat>* step_images = nullptr) {
    EpisodeResult result;
    result.trajectory.push_back(world.agent_pos);

    while (true) {
        if (world.distance_to_target() <= world.success_radius) {
            result.reached = true;
            result.success = true;
            result.steps = world.steps_taken;
            return result;
        }
        if (world.steps_taken >= world.budget) {
            result.steps = world.steps_taken;
            return result;
        }

        const WorldView view = world_to_view(world, setup);

        PivotContext ctx;
        ctx.image = view.image;
        ctx.style = style;
        ctx.instruction = "reach the green target";
        Action truth;
        if (world.dims() == 2) {
            ActionSpaceSpec space = make_nav2d_space(setup.image_w, setup.image_h,
                                                     OriginMode::end_effector_pixel);
            space.origin_px = view.agent_px;
            ctx.space = space;
            truth.components = clamp(space, Action{view.world_to_px(world.target_pos.head<2>())})
                                   .components;
        } else {
            ctx.space = make_cart3d_space(setup.reach_lower, setup.reach_upper);
            ctx.camera = setup.camera;
            Action raw{world.target_pos - world.agent_pos};
            truth = clamp(ctx.space, raw);
        }

        PivotConfig config = base_config;
        config.seed = derive_seed(seed, uint64_t(world.steps_taken) * 2 + 1);
        auto oracle = make_oracle(ctx.space, truth, derive_seed(seed, world.steps_taken * 2));

        std::vector<PivotTrace> traces;
        const Action best = parallel_pivot(ctx, *oracle, config, &traces);
        if (step_images && !traces.empty() && !traces.front().records.empty() &&
            traces.front().records.back().image)
            step_images->push_back(*traces.front().records.back().image);

        Action displacement;
        if (world.dims() == 2) {
            const Eigen::Vector2d chosen_world =
                view.px_to_world(best.components.head<2>());
            displacement.components = chosen_world - Eigen::Vector2d(world.agent_pos.head<2>());
        } else {
            displacement = best;
        }
        world = step(world, displacement);
        result.trajectory.push_back(world.agent_pos);
        if (world.distance_to_target() <= world.success_radius) result.reached = true;
    }
}

/// Parses a world definition: agent/target positions, obstacles, step and
/// success radii, budget, and view geometry.
inline std::pair<WorldState, SimViewSetup> load_world(const nlohmann::json& j) {
    WorldState world;
    SimViewSetup setup;
    for (const char* key : {"agent", "target"})
        if (!j.contains(key)) throw ConfigError(std::string("world: missing field ") + key);
    const auto read_vec = [](const nlohmann::json& arr) {
        Eigen::VectorXd v(arr.size());
        for (size_t i = 0; i < arr.size(); ++i) v[i] = arr.at(i).get<double>();
        return v;
    };
    world.agent_pos = read_vec(j.at("agent"));
    world.target_pos = read_vec(j.at("target"));
    if (world.agent_pos.size() != world.target_pos.size() ||
        (world.dims() != 2 && world.dims() != 3))
        throw ConfigError("world: agent/target must both be 2D or both 3D");
    for (const auto& o : j.value("obstacles", nlohmann::json::array()))
        world.obstacles.push_back({read_vec(o.at("center")), o.at("radius").get<double>()});
    world.max_step = j.value("max_step", 1.0);
    world.success_radius = j.value("success_radius", 0.5);
    world.budget = j.value("budget", 10);
    if (j.contains("view")) {
        const auto& v = j.at("view");
        setup.image_w = v.value("image_w", setup.image_w);
        setup.image_h = v.value("image_h", setup.image_h);
        if (v.contains("world_rect")) {
            const auto& r = v.at("world_rect");
            for (int i = 0; i < 4; ++i) setup.world_rect[i] = r.at(i).get<double>();
        }
        if (v.contains("camera")) setup.camera = CameraModel::from_json(v.at("camera"));
        if (v.contains("reach_lower")) setup.reach_lower = read_vec(v.at("reach_lower")).head<3>();
        if (v.contains("reach_upper")) setup.reach_upper = read_vec(v.at("reach_upper")).head<3>();
    }
    if (world.dims() == 3 && !setup.camera)
        throw ConfigError("world: 3D world requires view.camera");
    if (setup.camera) {
        setup.image_w = setup.camera->image_w;
        setup.image_h = setup.camera->image_h;
    }
    return {world, setup};
}

}  // namespace pivot
