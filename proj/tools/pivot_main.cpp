#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <opencv2/imgcodecs.hpp>

#include "pivot/arrow_dataset.hpp"
#include "pivot/config.hpp"
#include "pivot/eval.hpp"
#include "pivot/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitOracle = 3;
constexpr int kExitIo = 4;

struct CommonFlags {
    std::string config_path;
    std::string out_dir = "runs";
    int64_t seed = -1;
    int jobs = 1;
    int iterations = -1;
    int parallel = -1;
    int samples = -1;
    int top_k = -1;
    std::string oracle_mode;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", flags.config_path, "run config (JSON)");
    if (needs_config) opt->required();
    cmd->add_option("--out", flags.out_dir, "output directory root");
    cmd->add_option("--seed", flags.seed, "seed override");
    cmd->add_option("--jobs", flags.jobs, "worker threads");
    cmd->add_option("--iterations", flags.iterations, "iteration override (N)");
    cmd->add_option("--parallel", flags.parallel, "parallel instance override (E)");
    cmd->add_option("--samples", flags.samples, "samples-per-iteration override (M)");
    cmd->add_option("--k", flags.top_k, "oracle pick-count override (K)");
    cmd->add_option("--oracle", flags.oracle_mode,
                    "oracle override: remote|synthetic|replay|text-baseline");
}

pivot::RunConfig load_and_override(const CommonFlags& flags) {
    pivot::RunConfig config = pivot::load_run_config(flags.config_path);
    if (flags.seed >= 0) config.pivot.seed = uint64_t(flags.seed);
    if (flags.iterations > 0) config.pivot.iterations = flags.iterations;
    if (flags.parallel > 0) config.pivot.parallel = flags.parallel;
    if (flags.samples > 0) config.pivot.samples = flags.samples;
    if (flags.top_k > 0) config.pivot.top_k = flags.top_k;
    if (!flags.oracle_mode.empty())
        config.oracle.mode = pivot::oracle_mode_from_string(flags.oracle_mode);
    config.pivot.validate();
    return config;
}

/// One directory per invocation under the output root, timestamp + seed,
/// uniquified rather than overwritten.
fs::path make_run_dir(const std::string& root, uint64_t seed) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%S", std::localtime(&t));
    fs::path dir = fs::path(root) / (std::string(stamp) + "_seed" + std::to_string(seed));
    for (int k = 1; fs::exists(dir); ++k)
        dir = fs::path(root) / (std::string(stamp) + "_seed" + std::to_string(seed) + "_" +
                                std::to_string(k));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw pivot::IoError("cannot create run directory " + dir.string());
    return dir;
}

json effective_config_json(const pivot::RunConfig& config) {
    json j = config.raw;
    j["pivot"]["seed"] = config.pivot.seed;
    j["pivot"]["iterations"] = config.pivot.iterations;
    j["pivot"]["parallel"] = config.pivot.parallel;
    j["pivot"]["samples"] = config.pivot.samples;
    j["pivot"]["k"] = config.pivot.top_k;
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw pivot::IoError("cannot write " + path.string());
    out << text;
}

std::unique_ptr<pivot::SelectionOracle> make_selection_oracle(const pivot::RunConfig& config,
                                                              const pivot::ActionSpaceSpec& space,
                                                              uint64_t seed) {
    switch (config.oracle.mode) {
        case pivot::OracleMode::synthetic: {
            pivot::Action truth{config.oracle.truth};
            return std::make_unique<pivot::SyntheticOracle>(space, truth,
                                                            config.oracle.noise_sigma,
                                                            pivot::Rng(seed));
        }
        case pivot::OracleMode::replay:
            return std::make_unique<pivot::ReplayOracle>(config.oracle.script);
        case pivot::OracleMode::remote:
            return std::make_unique<pivot::RemoteOracle>(*config.oracle.remote);
        case pivot::OracleMode::text_baseline:
            throw pivot::ConfigError("text-baseline oracle is not a label-selection oracle here");
    }
    throw pivot::ConfigError("unknown oracle mode");
}

int cmd_optimize(const CommonFlags& flags, const std::string& image_path,
                 const std::string& instruction) {
    const pivot::RunConfig config = load_and_override(flags);
    cv::Mat image = cv::imread(image_path, cv::IMREAD_COLOR);
    if (image.empty()) throw pivot::IoError("cannot read image " + image_path);

    const fs::path run_dir = make_run_dir(flags.out_dir, config.pivot.seed);
    write_text(run_dir / "config.json", effective_config_json(config).dump(2) + "\n");

    pivot::PivotContext ctx;
    ctx.image = image;
    ctx.instruction = instruction;
    ctx.style = config.style;
    ctx.space = config.space ? *config.space : pivot::make_nav2d_space(image.cols, image.rows);
    ctx.camera = config.camera;
    if (ctx.space.kind == pivot::SpaceKind::cart3d && !ctx.camera)
        throw pivot::ConfigError("config: cart3d action space requires section camera");

    pivot::Action best;
    std::string trace_text;
    if (config.oracle.mode == pivot::OracleMode::text_baseline) {
        if (config.oracle.truth.size() != 2)
            throw pivot::ConfigError("oracle: text-baseline requires a 2D pixel truth");
        pivot::Rng rng(pivot::derive_seed(config.pivot.seed, 0xba5e));
        const auto [region, center] = pivot::RegionBaseline::pick(
            image.cols, image.rows, config.oracle.truth.head<2>(), config.oracle.noise_sigma,
            rng);
        best.components = center;
        trace_text = json{{"iteration", 0}, {"oracle_text", region}, {"no_op", false}}.dump() + "\n";
    } else {
        pivot::PivotConfig engine = config.pivot;
        engine.store_images = true;
        auto oracle = make_selection_oracle(config, ctx.space,
                                            pivot::derive_seed(engine.seed, 0x0acc1e));
        std::vector<pivot::PivotTrace> traces;
        best = pivot::parallel_pivot(ctx, *oracle, engine, &traces);
        for (size_t e = 0; e < traces.size(); ++e) {
            for (const auto& rec : traces[e].records) {
                json line = pivot::to_json(rec);
                line["instance"] = e;
                trace_text += line.dump() + "\n";
                if (rec.image) {
                    char name[64];
                    std::snprintf(name, sizeof(name), "iter_%02zu_%02d.png", e, rec.iteration);
                    if (!cv::imwrite((run_dir / name).string(), *rec.image))
                        throw pivot::IoError("cannot write annotated PNG");
                }
            }
        }
    }
    write_text(run_dir / "trace.jsonl", trace_text);

    json best_json;
    best_json["space"] = pivot::to_string(ctx.space.kind);
    best_json["action"] = json::array();
    for (int i = 0; i < best.components.size(); ++i)
        best_json["action"].push_back(best.components[i]);
    write_text(run_dir / "best_action.json", best_json.dump(2) + "\n");

    std::cout << "run_dir: " << run_dir.string() << "\n";
    std::cout << "best_action: " << best_json["action"].dump() << "\n";
    return 0;
}

std::vector<int> parse_grid_axis(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoi(item));
    if (out.empty()) throw pivot::ConfigError("empty grid axis '" + s + "'");
    return out;
}

int cmd_eval(const CommonFlags& flags, const std::string& manifest_path, const std::string& grid,
             int repeats, int subset) {
    const pivot::RunConfig config = load_and_override(flags);
    std::vector<pivot::EvalRecord> records = pivot::load_manifest(manifest_path);
    if (subset > 0)
        records = pivot::sample_subset(std::move(records), subset, config.pivot.seed);
    if (records.empty()) throw pivot::ConfigError("manifest has no records");

    std::vector<int> iteration_grid{1, 2, 3}, parallel_grid{0, 2, 3};
    if (!grid.empty()) {
        const auto x = grid.find('x');
        if (x == std::string::npos)
            throw pivot::ConfigError("--grid must look like '1,2,3x0,2,3'");
        iteration_grid = parse_grid_axis(grid.substr(0, x));
        parallel_grid = parse_grid_axis(grid.substr(x + 1));
    }

    const fs::path run_dir = make_run_dir(flags.out_dir, config.pivot.seed);
    write_text(run_dir / "config.json", effective_config_json(config).dump(2) + "\n");

    std::string csv;
    if (config.oracle.mode == pivot::OracleMode::text_baseline) {
        // The baseline has no iterations or parallel calls; one degenerate cell.
        std::vector<double> metrics;
        for (size_t r = 0; r < records.size(); ++r) {
            for (int rep = 0; rep < repeats; ++rep) {
                const auto& rec = records[r];
                cv::Mat img = cv::imread(rec.image_path, cv::IMREAD_COLOR);
                if (img.empty()) throw pivot::IoError("cannot read image " + rec.image_path);
                Eigen::Vector2d truth_px;
                if (rec.truth_kind == pivot::TruthKind::pixel)
                    truth_px = rec.truth.head<2>();
                else if (rec.truth_kind == pivot::TruthKind::bbox)
                    truth_px = pivot::BBox{rec.truth[0], rec.truth[1], rec.truth[2], rec.truth[3]}
                                   .center();
                else
                    throw pivot::ConfigError("text-baseline supports pixel/bbox datasets only");
                pivot::Rng rng(pivot::derive_seed(config.pivot.seed,
                                                  (uint64_t(rep) << 32) ^ uint64_t(r)));
                const auto [region, center] = pivot::RegionBaseline::pick(
                    img.cols, img.rows, truth_px, config.oracle.noise_sigma, rng);
                if (rec.truth_kind == pivot::TruthKind::pixel)
                    metrics.push_back(pivot::normalized_l2(center, truth_px, img.cols));
                else
                    metrics.push_back(pivot::bbox_metrics(
                                          center,
                                          pivot::BBox{rec.truth[0], rec.truth[1], rec.truth[2],
                                                      rec.truth[3]},
                                          img.cols)
                                              .hit
                                          ? 1.0
                                          : 0.0);
            }
        }
        const double mean =
            std::accumulate(metrics.begin(), metrics.end(), 0.0) / metrics.size();
        double var = 0.0;
        for (const double m : metrics) var += (m - mean) * (m - mean);
        pivot::SweepResult result;
        result.cells.push_back({1, 0, mean, std::sqrt(var / metrics.size()), int(metrics.size())});
        csv = pivot::sweep_to_csv(result);
    } else {
        pivot::SweepSetup setup;
        setup.base = config.pivot;
        setup.style = config.style;
        setup.space = config.space;
        setup.camera = config.camera;
        setup.repeats = repeats;
        setup.seed = config.pivot.seed;
        setup.jobs = flags.jobs;
        if (config.oracle.mode == pivot::OracleMode::replay)
            throw pivot::ConfigError("replay oracle is not meaningful for sweeps");
        setup.make_oracle = [&config](const pivot::EvalRecord& rec, uint64_t seed)
            -> std::unique_ptr<pivot::SelectionOracle> {
            if (config.oracle.mode == pivot::OracleMode::remote)
                return std::make_unique<pivot::RemoteOracle>(*config.oracle.remote);
            Eigen::VectorXd truth = rec.truth;
            pivot::ActionSpaceSpec space;
            if (rec.truth_kind == pivot::TruthKind::action) {
                if (!config.space)
                    throw pivot::ConfigError(
                        "config: action-kind records require section action_space");
                space = *config.space;
            } else {
                cv::Mat img = cv::imread(rec.image_path, cv::IMREAD_COLOR);
                if (img.empty()) throw pivot::IoError("cannot read image " + rec.image_path);
                space = pivot::make_nav2d_space(img.cols, img.rows);
                if (rec.truth_kind == pivot::TruthKind::bbox)
                    truth = pivot::BBox{rec.truth[0], rec.truth[1], rec.truth[2], rec.truth[3]}
                                .center();
            }
            return std::make_unique<pivot::SyntheticOracle>(
                space, pivot::Action{truth}, config.oracle.noise_sigma, pivot::Rng(seed));
        };
        const pivot::SweepResult result =
            pivot::run_sweep(records, iteration_grid, parallel_grid, setup);
        csv = pivot::sweep_to_csv(result);
    }

    write_text(run_dir / "sweep.csv", csv);
    std::cout << "run_dir: " << run_dir.string() << "\n" << csv;
    return 0;
}

int cmd_sim(const CommonFlags& flags, const std::string& world_path, int episodes) {
    const pivot::RunConfig config = load_and_override(flags);
    const json world_json = pivot::load_json_file(world_path);
    const auto [world, view_setup] = pivot::load_world(world_json);

    const fs::path run_dir = make_run_dir(flags.out_dir, config.pivot.seed);
    write_text(run_dir / "config.json", effective_config_json(config).dump(2) + "\n");

    if (config.oracle.mode != pivot::OracleMode::synthetic)
        throw pivot::ConfigError("sim supports the synthetic oracle only");
    const double noise = config.oracle.noise_sigma;

    pivot::PivotConfig engine = config.pivot;
    engine.store_images = true;
    pivot::SimOracleFactory factory =
        [noise](const pivot::ActionSpaceSpec& space, const pivot::Action& truth,
                uint64_t step_seed) -> std::unique_ptr<pivot::SelectionOracle> {
        return std::make_unique<pivot::SyntheticOracle>(space, truth, noise,
                                                        pivot::Rng(step_seed));
    };

    int successes = 0;
    std::vector<int> success_steps;
    for (int ep = 0; ep < episodes; ++ep) {
        std::vector<cv::Mat> step_images;
        const pivot::EpisodeResult result =
            pivot::rollout(world, view_setup, factory, engine, config.style,
                           pivot::derive_seed(config.pivot.seed, ep), &step_images);
        if (result.success) {
            ++successes;
            success_steps.push_back(result.steps);
        }
        std::string lines;
        for (size_t i = 0; i < result.trajectory.size(); ++i) {
            json pos = json::array();
            for (int d = 0; d < result.trajectory[i].size(); ++d)
                pos.push_back(result.trajectory[i][d]);
            lines += json{{"step", i},
                          {"pos", pos},
                          {"success", result.success},
                          {"reached", result.reached}}
                         .dump() +
                     "\n";
        }
        char name[64];
        std::snprintf(name, sizeof(name), "episode_%03d.jsonl", ep);
        write_text(run_dir / name, lines);
        for (size_t s = 0; s < step_images.size(); ++s) {
            std::snprintf(name, sizeof(name), "episode_%03d_step_%02zu.png", ep, s);
            if (!cv::imwrite((run_dir / name).string(), step_images[s]))
                throw pivot::IoError("cannot write step PNG");
        }
    }

    const double rate = episodes > 0 ? double(successes) / episodes : 0.0;
    std::sort(success_steps.begin(), success_steps.end());
    std::cout << "run_dir: " << run_dir.string() << "\n";
    char line[128];
    std::snprintf(line, sizeof(line), "success_rate=%.3f", rate);
    std::cout << line;
    if (!success_steps.empty())
        std::cout << " median_steps=" << success_steps[success_steps.size() / 2];
    std::cout << " episodes=" << episodes << "\n";
    return 0;
}

int cmd_gen_arrows(const std::string& out_dir, const std::string& mode, uint64_t seed) {
    pivot::ArrowDatasetParams params;
    params.seed = seed;
    if (mode == "blank")
        params.mode = pivot::ArrowDatasetMode::blank_background;
    else if (mode == "object-referential")
        params.mode = pivot::ArrowDatasetMode::object_referential;
    else
        throw pivot::ConfigError("--mode must be blank or object-referential");
    const auto samples = pivot::gen_arrow_dataset(params);
    pivot::write_arrow_dataset(samples, out_dir);
    std::cout << "wrote " << samples.size() << " images to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative visual optimization over a selection oracle"};
    app.require_subcommand(1);

    CommonFlags opt_flags, eval_flags, sim_flags;
    std::string image_path, instruction, manifest_path, world_path, grid;
    std::string arrows_out = "arrow_dataset", arrows_mode = "blank";
    int repeats = 3, subset = 0, episodes = 10;
    int64_t arrows_seed = 0;

    auto* optimize = app.add_subcommand("optimize", "run the optimizer on one image");
    optimize->add_option("--image", image_path, "input image (PNG)")->required();
    optimize->add_option("--instruction", instruction, "task instruction")->required();
    add_common(optimize, opt_flags);

    auto* eval = app.add_subcommand("eval", "offline metric sweep over a dataset manifest");
    eval->add_option("--manifest", manifest_path, "dataset manifest (JSONL)")->required();
    eval->add_option("--grid", grid, "iteration x parallel grid, e.g. 1,2,3x0,2,3");
    eval->add_option("--repeats", repeats, "runs per cell");
    eval->add_option("--subset", subset, "seeded subset size (0 = all)");
    add_common(eval, eval_flags);

    auto* sim = app.add_subcommand("sim", "closed-loop simulator episodes");
    sim->add_option("--world", world_path, "world definition (JSON)")->required();
    sim->add_option("--episodes", episodes, "episode count");
    add_common(sim, sim_flags);

    auto* arrows = app.add_subcommand("gen-arrows", "emit the arrow-robustness dataset");
    arrows->add_option("--out", arrows_out, "output directory");
    arrows->add_option("--mode", arrows_mode, "blank | object-referential");
    arrows->add_option("--seed", arrows_seed, "generation seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (optimize->parsed()) return cmd_optimize(opt_flags, image_path, instruction);
        if (eval->parsed()) return cmd_eval(eval_flags, manifest_path, grid, repeats, subset);
        if (sim->parsed()) return cmd_sim(sim_flags, world_path, episodes);
        if (arrows->parsed()) return cmd_gen_arrows(arrows_out, arrows_mode, uint64_t(arrows_seed));
    } catch (const pivot::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const pivot::TransportError& e) {
        std::cerr << "oracle failure: " << e.what() << "\n";
        return kExitOracle;
    } catch (const pivot::RateLimited& e) {
        std::cerr << "oracle failure: " << e.what() << "\n";
        return kExitOracle;
    } catch (const pivot::ScriptExhausted& e) {
        std::cerr << "oracle failure: " << e.what() << "\n";
        return kExitOracle;
    } catch (const pivot::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const pivot::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
