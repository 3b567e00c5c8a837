#pragma once

#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <numeric>
#include <opencv2/imgcodecs.hpp>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pivot/optimize.hpp"

namespace pivot {

enum class TruthKind { action, pixel, bbox };

struct BBox {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
    Eigen::Vector2d center() const { return {x + w / 2.0, y + h / 2.0}; }
    bool contains(const Eigen::Vector2d& p) const {
        return p.x() >= x && p.x() <= x + w && p.y() >= y && p.y() <= y + h;
    }
};

struct EvalRecord {
    std::string image_path;
    std::string instruction;
    std::string category;
    TruthKind truth_kind = TruthKind::pixel;
    Eigen::VectorXd truth;  // action vector, (u, v), or (x, y, w, h)
    std::optional<CameraModel> camera;
};

/// Directional agreement of two camera-frame actions.
inline double cosine_metric(const Eigen::VectorXd& pred, const Eigen::VectorXd& ref) {
    if (pred.size() != ref.size()) throw DimensionMismatch("cosine_metric: size mismatch");
    const double np = pred.norm(), nr = ref.norm();
    if (np == 0.0 || nr == 0.0) throw ZeroVector("cosine_metric: zero-length action");
    return pred.dot(ref) / (np * nr);
}

/// Pixel deviation from the target, normalized by the image width.
inline double normalized_l2(const Eigen::Vector2d& pred_px, const Eigen::Vector2d& truth_px,
                            double image_w) {
    if (image_w <= 0.0) throw ConfigError("normalized_l2: image width must be positive");
    return (pred_px - truth_px).norm() / image_w;
}

struct BboxResult {
    bool hit = false;
    double center_distance = 0.0;
};

/// Whether the prediction lands inside the (closed) ground-truth box, and its
/// width-normalized distance from the box center.
inline BboxResult bbox_metrics(const Eigen::Vector2d& pred_px, const BBox& box, double image_w) {
    if (box.w <= 0.0 || box.h <= 0.0) throw ConfigError("bbox_metrics: box must have positive size");
    if (image_w <= 0.0) throw ConfigError("bbox_metrics: image width must be positive");
    return {box.contains(pred_px), (pred_px - box.center()).norm() / image_w};
}

inline TruthKind truth_kind_from_string(const std::string& s) {
    if (s == "action") return TruthKind::action;
    if (s == "pixel") return TruthKind::pixel;
    if (s == "bbox") return TruthKind::bbox;
    throw ConfigError("unknown truth_kind '" + s + "'");
}

/// Loads a line-delimited manifest. Each line is a JSON object with fields
/// image, instruction, category, truth_kind, truth, and an optional camera
/// (inline object or path to a camera config). Errors name the line number.
inline std::vector<EvalRecord> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);
    std::vector<EvalRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ConfigError("manifest line " + std::to_string(line_no) + ": invalid JSON");
        try {
            EvalRecord rec;
            rec.image_path = j.at("image").get<std::string>();
            rec.instruction = j.at("instruction").get<std::string>();
            rec.category = j.value("category", "");
            rec.truth_kind = truth_kind_from_string(j.at("truth_kind").get<std::string>());
            const auto& t = j.at("truth");
            rec.truth.resize(t.size());
            for (size_t i = 0; i < t.size(); ++i) rec.truth[i] = t.at(i).get<double>();
            const size_t want = rec.truth_kind == TruthKind::pixel  ? 2
                              : rec.truth_kind == TruthKind::bbox   ? 4
                                                                    : rec.truth.size();
            if (rec.truth.size() != Eigen::Index(want) || rec.truth.size() == 0)
                throw ConfigError("truth length inconsistent with truth_kind");
            if (j.contains("camera")) {
                if (j.at("camera").is_string()) {
                    std::ifstream cam_in(j.at("camera").get<std::string>());
                    if (!cam_in) throw IoError("cannot open camera config");
                    nlohmann::json cj;
                    cam_in >> cj;
                    rec.camera = CameraModel::from_json(cj);
                } else {
                    rec.camera = CameraModel::from_json(j.at("camera"));
                }
            }
            out.push_back(std::move(rec));
        } catch (const std::exception& e) {
            throw ConfigError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

/// Seeded subset selection over a manifest (shuffle-then-take).
inline std::vector<EvalRecord> sample_subset(std::vector<EvalRecord> records, size_t n,
                                             uint64_t seed) {
    Rng rng(derive_seed(seed, 0x5eed));
    for (size_t i = records.size(); i > 1; --i)
        std::swap(records[i - 1], records[rng.uniform_int(i)]);
    if (records.size() > n) records.resize(n);
    return records;
}

struct SweepCell {
    int iterations = 0;
    int parallel = 0;
    double metric_mean = 0.0;
    double metric_std = 0.0;
    int n = 0;
};

struct SweepResult {
    std::vector<SweepCell> cells;
};

/// How the sweep runner builds the per-record pieces. make_oracle receives
/// the record and a derived seed; space/camera defaults apply to action-kind
/// records, pixel/bbox records get a nav2d space sized to their image.
struct SweepSetup {
    PivotConfig base;
    AnnotationStyle style;
    std::optional<ActionSpaceSpec> space;    // required for truth_kind action
    std::optional<CameraModel> camera;       // default camera when records carry none
    std::function<std::unique_ptr<SelectionOracle>(const EvalRecord&, uint64_t seed)> make_oracle;
    int repeats = 3;
    uint64_t seed = 0;
    int jobs = 1;
};

namespace detail {

inline double record_metric(const EvalRecord& rec, const Action& pred,
                            const std::optional<CameraModel>& camera, int image_w) {
    switch (rec.truth_kind) {
        case TruthKind::action: {
            Eigen::VectorXd p = pred.components, t = rec.truth;
            if (camera && p.size() == 3) {
                p = camera->rotate_to_camera(Eigen::Vector3d(p));
                t = camera->rotate_to_camera(Eigen::Vector3d(t));
            }
            return cosine_metric(p, t);
        }
        case TruthKind::pixel:
            return normalized_l2(pred.components.head<2>(), rec.truth.head<2>(), image_w);
        case TruthKind::bbox: {
            const BBox box{rec.truth[0], rec.truth[1], rec.truth[2], rec.truth[3]};
            return bbox_metrics(pred.components.head<2>(), box, image_w).hit ? 1.0 : 0.0;
        }
    }
    return 0.0;
}

inline double penalty_metric(TruthKind kind) {
    switch (kind) {
        case TruthKind::action: return -1.0;
        case TruthKind::pixel: return 1.0;
        case TruthKind::bbox: return 0.0;
    }
    return 0.0;
}

inline cv::Mat load_image(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw IoError("cannot read image " + path);
    return img;
}

struct RunOutcome {
    double metric = 0.0;
};

inline double evaluate_one(const EvalRecord& rec, int iterations, int parallel,
                           const SweepSetup& setup, uint64_t run_seed) {
    const cv::Mat image = load_image(rec.image_path);

    PivotContext ctx;
    ctx.image = image;
    ctx.instruction = rec.instruction;
    ctx.style = setup.style;
    if (rec.truth_kind == TruthKind::action) {
        if (!setup.space) throw ConfigError("sweep: action-kind records require an action space");
        ctx.space = *setup.space;
        ctx.camera = rec.camera ? rec.camera : setup.camera;
    } else {
        ctx.space = make_nav2d_space(image.cols, image.rows);
        if (setup.base.task_kind == TaskKind::keypoint)
            ctx.space = make_keypoint2d_space(image.cols, image.rows);
        ctx.camera = std::nullopt;
    }

    PivotConfig config = setup.base;
    config.iterations = iterations;
    config.parallel = std::max(1, parallel);  // "0 parallel" = one instance, no aggregation
    config.seed = run_seed;

    const auto oracle = setup.make_oracle(rec, derive_seed(run_seed, 0x0bac1e));
    const Action best = parallel_pivot(ctx, *oracle, config);
    return record_metric(rec, best, ctx.camera, image.cols);
}

}  // namespace detail

/// Runs the iterations x parallel grid over a dataset with the configured
/// repeat count, aggregating the dataset's metric per cell. A record that
/// errors contributes the metric's worst case rather than being dropped.
inline SweepResult run_sweep(const std::vector<EvalRecord>& records,
                             const std::vector<int>& iteration_grid,
                             const std::vector<int>& parallel_grid, const SweepSetup& setup) {
    if (records.empty()) throw ConfigError("run_sweep: empty dataset");
    if (iteration_grid.empty() || parallel_grid.empty())
        throw ConfigError("run_sweep: empty grid");

    SweepResult result;
    for (const int iters : iteration_grid) {
        for (const int par : parallel_grid) {
            std::vector<double> metrics(records.size() * setup.repeats, 0.0);
            std::vector<std::string> io_failures(metrics.size());
            std::vector<std::function<void()>> tasks;
            for (size_t r = 0; r < records.size(); ++r) {
                for (int rep = 0; rep < setup.repeats; ++rep) {
                    const size_t slot = r * setup.repeats + rep;
                    const uint64_t run_seed = derive_seed(
                        setup.seed, (uint64_t(iters) << 48) ^ (uint64_t(par) << 40) ^
                                        (uint64_t(rep) << 32) ^ uint64_t(r));
                    tasks.push_back([&, r, slot, run_seed, iters, par] {
                        try {
                            metrics[slot] =
                                detail::evaluate_one(records[r], iters, par, setup, run_seed);
                        } catch (const IoError& e) {
                            io_failures[slot] =
                                "record " + records[r].image_path + ": " + e.what();
                        } catch (const std::exception&) {
                            metrics[slot] = detail::penalty_metric(records[r].truth_kind);
                        }
                    });
                }
            }
            if (setup.jobs > 1) {
                std::atomic<size_t> next{0};
                auto worker = [&] {
                    for (size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1))
                        tasks[i]();
                };
                std::vector<std::thread> pool;
                for (int t = 0; t < setup.jobs; ++t) pool.emplace_back(worker);
                for (auto& t : pool) t.join();
            } else {
                for (auto& task : tasks) task();
            }
            for (const auto& failure : io_failures)
                if (!failure.empty()) throw IoError("run_sweep: " + failure);

            SweepCell cell;
            cell.iterations = iters;
            cell.parallel = par;
            cell.n = int(metrics.size());
            const double mean =
                std::accumulate(metrics.begin(), metrics.end(), 0.0) / metrics.size();
            double var = 0.0;
            for (const double m : metrics) var += (m - mean) * (m - mean);
            cell.metric_mean = mean;
            cell.metric_std = std::sqrt(var / metrics.size());
            result.cells.push_back(cell);
        }
    }
    return result;
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::string sweep_to_csv(const SweepResult& result) {
    std::string csv = "iterations,parallel,metric_mean,metric_std,n\n";
    for (const auto& c : result.cells)
        csv += std::to_string(c.iterations) + "," + std::to_string(c.parallel) + "," +
               format_double(c.metric_mean) + "," + format_double(c.metric_std) + "," +
               std::to_string(c.n) + "\n";
    return csv;
}

/// Sample-count ablation: sweeps M at fixed iterations/parallel and reports
/// one row per M.
inline std::string run_sample_count_sweep(const std::vector<EvalRecord>& records,
                                          const std::vector<int>& sample_grid, SweepSetup setup) {
    std::string csv = "samples,metric_mean,metric_std\n";
    for (const int m : sample_grid) {
        setup.base.samples = m;
        setup.base.top_k = std::min(setup.base.top_k, m);
        const SweepResult r = run_sweep(records, {setup.base.iterations},
                                        {setup.base.parallel}, setup);
        csv += std::to_string(m) + "," + format_double(r.cells[0].metric_mean) + "," +
               format_double(r.cells[0].metric_std) + "\n";
    }
    return csv;
}

}  // namespace pivot
