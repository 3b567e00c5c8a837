#pragma once

#include <future>
#include <nlohmann/json.hpp>
#include <optional>
#include <utility>
#include <vector>

#include "pivot/annotate.hpp"
#include "pivot/oracle.hpp"

namespace pivot {

/// Isotropic Gaussian proposal over the action space: one shared standard
/// deviation across every dimension.
struct ProposalDistribution {
    Eigen::VectorXd mean;
    double sigma = 0.0;
};

enum class Aggregation { refit, arbitrate };

struct PivotConfig {
    int samples = 10;     // M: candidates rendered per iteration
    int iterations = 3;   // N: max iterations
    int top_k = 3;        // K: labels the oracle is asked to rank
    int parallel = 3;     // E: independent instances
    Aggregation aggregation = Aggregation::refit;
    double sigma_floor = -1.0;  // < 0: resolved to 1% of the largest bound extent
    double shrink = 0.3;        // per-iteration floor on sigma decay (fraction of prev sigma)
    uint64_t seed = 0;
    int oracle_retries = 2;   // transport retries per query
    int spacing_retries = 3;  // top-up resampling rounds after the legibility filter
    bool store_images = false;

    PromptStyle prompt_style = PromptStyle::zero_shot_cot;
    std::array<Segment, 3> ordering{Segment::preamble, Segment::image, Segment::task};
    TaskKind task_kind = TaskKind::navigation;
    std::vector<std::string> exemplars;

    void validate() const {
        if (samples < 1) throw ConfigError("pivot: samples must be >= 1");
        if (iterations < 1) throw ConfigError("pivot: iterations must be >= 1");
        if (top_k < 1 || top_k > samples) throw ConfigError("pivot: need 1 <= k <= samples");
        if (parallel < 1) throw ConfigError("pivot: parallel must be >= 1");
        if (!(shrink > 0.0 && shrink <= 1.0)) throw ConfigError("pivot: shrink must be in (0, 1]");
    }
};

inline double resolve_sigma_floor(const PivotConfig& config, const ActionSpaceSpec& spec) {
    return config.sigma_floor >= 0.0 ? config.sigma_floor : 0.01 * spec.largest_extent();
}

/// Everything one optimization run reads but never mutates.
struct PivotContext {
    cv::Mat image;
    std::string instruction;
    ActionSpaceSpec space;
    std::optional<CameraModel> camera;
    AnnotationStyle style;
};

struct IterationRecord {
    int iteration = 0;
    std::vector<std::pair<int, Action>> candidates;  // label -> rendered action
    uint64_t image_hash = 0;
    std::optional<cv::Mat> image;
    std::string oracle_text;
    std::vector<int> selected;
    ProposalDistribution fitted;
    bool no_op = false;
};

struct PivotTrace {
    std::vector<IterationRecord> records;
};

inline nlohmann::json to_json(const IterationRecord& rec) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& [id, action] : rec.candidates) {
        nlohmann::json a = nlohmann::json::array();
        for (int i = 0; i < action.components.size(); ++i) a.push_back(action.components[i]);
        cands.push_back({{"label", id}, {"action", a}});
    }
    nlohmann::json mean = nlohmann::json::array();
    for (int i = 0; i < rec.fitted.mean.size(); ++i) mean.push_back(rec.fitted.mean[i]);
    return {{"iteration", rec.iteration},
            {"candidates", cands},
            {"image_hash", rec.image_hash},
            {"oracle_text", rec.oracle_text},
            {"selected", rec.selected},
            {"fitted", {{"mean", mean}, {"sigma", rec.fitted.sigma}}},
            {"no_op", rec.no_op}};
}

/// Broad initial proposal covering the whole space: mean at the bounds
/// midpoint, sigma at half the largest extent. Degenerate dimensions stay
/// frozen through clamping.
inline ProposalDistribution init_distribution(const ActionSpaceSpec& spec) {
    spec.validate();
    return {spec.midpoint(), 0.5 * spec.largest_extent()};
}

/// M i.i.d. draws from the proposal, each clamped to the bounds.
inline std::vector<Action> sample(const ProposalDistribution& dist, const ActionSpaceSpec& spec,
                                  int count, Rng& rng) {
    std::vector<Action> out;
    out.reserve(count);
    for (int s = 0; s < count; ++s) {
        Action a;
        a.components.resize(spec.dims());
        for (int i = 0; i < spec.dims(); ++i)
            a.components[i] = dist.mean[i] + dist.sigma * rng.gaussian();
        out.push_back(clamp(spec, a));
    }
    return out;
}

/// Refits the proposal to the selected actions: mean is their average, sigma
/// the root mean squared deviation over all components, kept inside
/// [shrink * prev.sigma, prev.sigma] and floored at sigma_floor. Sigma never
/// expands; a collapsed selection cannot contract it faster than shrink.
inline ProposalDistribution fit(const std::vector<Action>& selected,
                                const ProposalDistribution& prev, const PivotConfig& config,
                                const ActionSpaceSpec& spec) {
    if (selected.empty()) throw EmptySelection("fit: empty selection");
    const int dims = spec.dims();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dims);
    for (const auto& a : selected) {
        if (a.components.size() != dims) throw DimensionMismatch("fit: action dims mismatch");
        mean += a.components;
    }
    mean /= double(selected.size());

    double sum_sq = 0.0;
    for (const auto& a : selected) sum_sq += (a.components - mean).squaredNorm();
    const double rms = std::sqrt(sum_sq / (double(selected.size()) * dims));

    double sigma = std::max(rms, config.shrink * prev.sigma);
    sigma = std::min(sigma, prev.sigma);
    sigma = std::max(sigma, resolve_sigma_floor(config, spec));
    return {clamp(spec, Action{mean}).components, sigma};
}

namespace detail {

struct CandidateBatch {
    std::vector<ArrowGeometry> geometries;         // all drawables, labels re-densified
    std::map<int, Action> labels;                  // label -> action
    std::vector<std::pair<int, Action>> ordered;   // labels in draw order
};

/// Samples candidates, drops ones whose label centers crowd together, and
/// tops the batch back up toward the nominal count by resampling.
inline CandidateBatch draw_candidates(const PivotContext& ctx, const ProposalDistribution& dist,
                                      const PivotConfig& config, Rng& rng) {
    const int image_w = ctx.image.cols, image_h = ctx.image.rows;
    auto geoms_for = [&](const Action& a, int label) {
        return action_to_geometry(ctx.space, ctx.camera, a, label, image_w, image_h);
    };
    auto center_of = [&](const std::vector<ArrowGeometry>& gs) { return gs.back().end_px; };

    std::vector<Action> accepted;
    std::vector<Eigen::Vector2d> centers;
    std::vector<Action> pool = sample(dist, ctx.space, config.samples, rng);
    for (int round = 0; round <= config.spacing_retries; ++round) {
        // Greedy spacing pass over the pool, seeded with already-kept centers.
        for (const auto& candidate : pool) {
            const Eigen::Vector2d c = center_of(geoms_for(candidate, 1));
            bool ok = true;
            for (const auto& prev : centers)
                if ((c - prev).norm() < ctx.style.min_spacing_px) {
                    ok = false;
                    break;
                }
            if (ok) {
                accepted.push_back(candidate);
                centers.push_back(c);
            }
        }
        const int missing = config.samples - int(accepted.size());
        if (missing <= 0 || round == config.spacing_retries) break;
        pool = sample(dist, ctx.space, missing, rng);
    }

    CandidateBatch batch;
    for (int i = 0; i < int(accepted.size()); ++i) {
        const int label = i + 1;
        for (auto& g : geoms_for(accepted[i], label)) batch.geometries.push_back(g);
        batch.labels.emplace(label, accepted[i]);
        batch.ordered.emplace_back(label, accepted[i]);
    }
    return batch;
}

inline SelectionResponse query_with_retries(SelectionOracle& oracle, const SelectionQuery& query,
                                            int retries) {
    for (int attempt = 0;; ++attempt) {
        try {
            return oracle.select(query);
        } catch (const TransportError&) {
            if (attempt >= retries) throw;
        } catch (const RateLimited&) {
            if (attempt >= retries) throw;
        }
    }
}

}  // namespace detail

/// One iteration of the loop: sample, map to image space, annotate, query the
/// oracle, and refit to the actions behind the selected labels. An oracle
/// answer with no usable labels leaves the distribution unchanged and flags
/// the record as a no-op.
inline IterationRecord pivot_step(const PivotContext& ctx, const ProposalDistribution& dist,
                                  SelectionOracle& oracle, const PivotConfig& config, Rng& rng,
                                  int iteration = 0) {
    IterationRecord rec;
    rec.iteration = iteration;

    const auto batch = detail::draw_candidates(ctx, dist, config, rng);
    rec.candidates = batch.ordered;

    AnnotatedImage annotated = render(ctx.image, batch.geometries, batch.labels,
                                      depth_range_for(ctx.space, ctx.camera), ctx.style);
    rec.image_hash = annotated.pixel_hash();
    if (config.store_images) rec.image = annotated.pixels;

    SelectionQuery query;
    query.annotated = std::move(annotated);
    query.instruction = ctx.instruction;
    query.k = std::min<int>(config.top_k, batch.labels.size());
    query.prompt_style = config.prompt_style;
    query.ordering = config.ordering;
    query.task_kind = config.task_kind;
    query.exemplars = config.exemplars;

    try {
        const SelectionResponse resp =
            detail::query_with_retries(oracle, query, config.oracle_retries);
        rec.oracle_text = resp.raw_text;
        for (const int id : resp.ranked_labels)
            if (batch.labels.count(id)) rec.selected.push_back(id);
    } catch (const Unparseable& e) {
        rec.oracle_text = e.what();
    } catch (const EmptyAfterFilter& e) {
        rec.oracle_text = e.what();
    }

    if (rec.selected.empty()) {
        rec.no_op = true;
        rec.fitted = dist;
        return rec;
    }
    std::vector<Action> chosen;
    for (const int id : rec.selected) chosen.push_back(batch.labels.at(id));
    rec.fitted = fit(chosen, dist, config, ctx.space);
    return rec;
}

/// Full PIVOT run: iterates pivot_step up to N times, stopping early once the
/// proposal has collapsed (sigma at the floor and the mean no longer moving).
/// Returns the action behind the first-ranked label of the last iteration
/// that produced a selection, falling back to the final mean if none did.
inline std::pair<Action, PivotTrace> pivot_run(const PivotContext& ctx, SelectionOracle& oracle,
                                               const PivotConfig& config, Rng& rng) {
    config.validate();
    ctx.space.validate();
    const double floor = resolve_sigma_floor(config, ctx.space);

    PivotTrace trace;
    ProposalDistribution dist = init_distribution(ctx.space);
    std::optional<Action> best;
    for (int i = 0; i < config.iterations; ++i) {
        IterationRecord rec = pivot_step(ctx, dist, oracle, config, rng, i);
        if (!rec.no_op) {
            auto it = std::find_if(rec.candidates.begin(), rec.candidates.end(),
                                   [&](const auto& p) { return p.first == rec.selected.front(); });
            best = it->second;
        }
        const double moved = (rec.fitted.mean - dist.mean).norm();
        dist = rec.fitted;
        trace.records.push_back(std::move(rec));
        if (dist.sigma <= floor && moved < floor) break;
    }
    if (!best) best = clamp(ctx.space, Action{dist.mean});
    return {*best, std::move(trace)};
}

/// Runs E independent PIVOT instances on derived seeds and aggregates their
/// candidate actions: refit returns the mean of a distribution fitted to the
/// E candidates; arbitrate renders the candidates as a fresh visual prompt
/// and asks the oracle once for the single best. Fails only when every
/// instance fails.
inline Action parallel_pivot(const PivotContext& ctx, SelectionOracle& oracle,
                             const PivotConfig& config, std::vector<PivotTrace>* traces = nullptr) {
    config.validate();
    const int instances = config.parallel;

    std::vector<std::optional<Action>> results(instances);
    std::vector<PivotTrace> all_traces(instances);
    std::exception_ptr last_error;

    auto run_one = [&](int e) {
        Rng rng(derive_seed(config.seed, uint64_t(e) + 1));
        auto [action, trace] = pivot_run(ctx, oracle, config, rng);
        results[e] = action;
        all_traces[e] = std::move(trace);
    };

    if (oracle.concurrent_safe() && instances > 1) {
        std::vector<std::future<void>> futures;
        for (int e = 0; e < instances; ++e)
            futures.push_back(std::async(std::launch::async, run_one, e));
        for (auto& f : futures) {
            try {
                f.get();
            } catch (...) {
                last_error = std::current_exception();
            }
        }
    } else {
        for (int e = 0; e < instances; ++e) {
            try {
                run_one(e);
            } catch (...) {
                last_error = std::current_exception();
            }
        }
    }

    std::vector<Action> candidates;
    std::vector<int> source_instance;
    for (int e = 0; e < instances; ++e)
        if (results[e]) {
            candidates.push_back(*results[e]);
            source_instance.push_back(e);
        }
    if (candidates.empty()) {
        if (last_error) std::rethrow_exception(last_error);
        throw EmptySelection("parallel_pivot: no instance produced an action");
    }
    if (traces) *traces = std::move(all_traces);
    if (candidates.size() == 1) return candidates.front();

    if (config.aggregation == Aggregation::refit) {
        const ProposalDistribution fitted =
            fit(candidates, init_distribution(ctx.space), config, ctx.space);
        return clamp(ctx.space, Action{fitted.mean});
    }

    // Arbitration: one more multiple-choice round over the E candidates.
    std::vector<ArrowGeometry> geoms;
    std::map<int, Action> labels;
    for (int i = 0; i < int(candidates.size()); ++i) {
        for (auto& g : action_to_geometry(ctx.space, ctx.camera, candidates[i], i + 1,
                                          ctx.image.cols, ctx.image.rows))
            geoms.push_back(g);
        labels.emplace(i + 1, candidates[i]);
    }
    SelectionQuery query;
    query.annotated =
        render(ctx.image, geoms, labels, depth_range_for(ctx.space, ctx.camera), ctx.style);
    query.instruction = ctx.instruction;
    query.k = 1;
    query.prompt_style = config.prompt_style;
    query.ordering = config.ordering;
    query.task_kind = config.task_kind;
    query.exemplars = config.exemplars;
    try {
        const SelectionResponse resp =
            detail::query_with_retries(oracle, query, config.oracle_retries);
        if (!resp.ranked_labels.empty() && labels.count(resp.ranked_labels.front()))
            return labels.at(resp.ranked_labels.front());
    } catch (const Unparseable&) {
    } catch (const EmptyAfterFilter&) {
    }
    return candidates.front();  // lowest surviving instance index, for reproducibility
}

}  // namespace pivot
