#include <catch2/catch_amalgamated.hpp>

#include "pivot/optimize.hpp"
#include "test_util.hpp"

using namespace pivot;

namespace {

PivotConfig engine_config() {
    PivotConfig c;
    c.samples = 10;
    c.iterations = 3;
    c.top_k = 1;
    c.parallel = 1;
    c.seed = 0;
    return c;
}

PivotContext nav_context(int w = 640, int h = 480) {
    PivotContext ctx;
    ctx.image = testutil::white_image(w, h);
    ctx.instruction = "reach the target";
    ctx.space = make_nav2d_space(w, h);
    ctx.style = testutil::plain_style();
    return ctx;
}

std::string trace_string(const PivotTrace& trace) {
    std::string s;
    for (const auto& rec : trace.records) s += to_json(rec).dump() + "\n";
    return s;
}

}  // namespace

TEST_CASE("initial distribution covers the space from the midpoint") {
    ActionSpaceSpec unit;
    unit.kind = SpaceKind::nav2d;
    unit.lower = Eigen::Vector2d(0, 0);
    unit.upper = Eigen::Vector2d(1, 1);
    auto dist = init_distribution(unit);
    REQUIRE(dist.mean == Eigen::Vector2d(0.5, 0.5));
    REQUIRE(dist.sigma == 0.5);

    ActionSpaceSpec rect;
    rect.kind = SpaceKind::nav2d;
    rect.lower = Eigen::Vector2d(-1, 0);
    rect.upper = Eigen::Vector2d(1, 4);
    dist = init_distribution(rect);
    REQUIRE(dist.mean == Eigen::Vector2d(0, 2));
    REQUIRE(dist.sigma == 2.0);
}

TEST_CASE("degenerate dimensions stay frozen") {
    ActionSpaceSpec spec;
    spec.kind = SpaceKind::nav2d;
    spec.lower = Eigen::Vector2d(3, 0);
    spec.upper = Eigen::Vector2d(3, 4);
    const auto dist = init_distribution(spec);
    REQUIRE(dist.sigma == 2.0);  // from the non-degenerate extent
    Rng rng(1);
    for (const auto& a : sample(dist, spec, 50, rng)) REQUIRE(a.components[0] == 3.0);
}

TEST_CASE("sigma zero sampling returns copies of the mean") {
    const auto spec = make_nav2d_space(640, 480);
    ProposalDistribution dist{Eigen::Vector2d(100, 100), 0.0};
    Rng rng(2);
    for (const auto& a : sample(dist, spec, 5, rng))
        REQUIRE(a.components == Eigen::Vector2d(100, 100));
}

TEST_CASE("sampling is deterministic per seed") {
    const auto spec = make_nav2d_space(640, 480);
    const auto dist = init_distribution(spec);
    Rng a(42), b(42);
    const auto sa = sample(dist, spec, 20, a);
    const auto sb = sample(dist, spec, 20, b);
    for (int i = 0; i < 20; ++i) REQUIRE(sa[i].components == sb[i].components);
}

TEST_CASE("sample statistics match the proposal at large M") {
    // Wide bounds so clamping never bites: mean within 3 sigma / sqrt(M),
    // stddev within 5%.
    ActionSpaceSpec wide;
    wide.kind = SpaceKind::nav2d;
    wide.lower = Eigen::Vector2d(-1000, -1000);
    wide.upper = Eigen::Vector2d(1000, 1000);
    ProposalDistribution dist{Eigen::Vector2d(0, 0), 0.5};
    Rng rng(123);
    const int m = 10000;
    const auto draws = sample(dist, wide, m, rng);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& a : draws) mean += Eigen::Vector2d(a.components);
    mean /= double(m);
    REQUIRE(std::abs(mean.x()) < 3.0 * 0.5 / std::sqrt(double(m)) * 3.0);
    REQUIRE(std::abs(mean.y()) < 3.0 * 0.5 / std::sqrt(double(m)) * 3.0);
    double var = 0.0;
    for (const auto& a : draws) var += (Eigen::Vector2d(a.components) - mean).squaredNorm();
    const double stddev = std::sqrt(var / (2.0 * m));
    REQUIRE(stddev == Catch::Approx(0.5).epsilon(0.05));
}

TEST_CASE("fit floors a collapsed selection at sigma_floor") {
    const auto spec = make_nav2d_space(640, 480);
    PivotConfig config = engine_config();
    config.sigma_floor = 0.01;
    config.shrink = 0.1;
    const ProposalDistribution prev{Eigen::Vector2d(5, 5), 0.05};
    const auto fitted = fit({Action{Eigen::Vector2d(9, 9)}}, prev, config, spec);
    REQUIRE(fitted.mean == Eigen::Vector2d(9, 9));
    REQUIRE(fitted.sigma == 0.01);
}

TEST_CASE("fit of a symmetric pair centers on the midpoint") {
    const auto spec = make_nav2d_space(640, 480);
    PivotConfig config = engine_config();
    config.sigma_floor = 0.01;
    const ProposalDistribution prev{Eigen::Vector2d(0, 0), 50.0};
    const auto fitted = fit({Action{Eigen::Vector2d(90, 110)}, Action{Eigen::Vector2d(110, 90)}},
                            prev, config, spec);
    REQUIRE(fitted.mean == Eigen::Vector2d(100, 100));
}

TEST_CASE("fit on the four-point fixture is exact") {
    const auto spec = make_nav2d_space(640, 480);
    PivotConfig config = engine_config();
    config.sigma_floor = 0.01;
    config.shrink = 0.1;
    const ProposalDistribution prev{Eigen::Vector2d(0, 0), 10.0};
    const auto fitted = fit({Action{Eigen::Vector2d(0, 0)}, Action{Eigen::Vector2d(2, 0)},
                             Action{Eigen::Vector2d(0, 2)}, Action{Eigen::Vector2d(2, 2)}},
                            prev, config, spec);
    REQUIRE(fitted.mean == Eigen::Vector2d(1, 1));
    REQUIRE(fitted.sigma == 1.0);
}

TEST_CASE("fit never expands sigma and never drops below the floor") {
    const auto spec = make_nav2d_space(640, 480);
    PivotConfig config = engine_config();
    config.sigma_floor = 2.0;
    Rng rng(8);
    ProposalDistribution prev{Eigen::Vector2d(320, 240), 80.0};
    for (int round = 0; round < 10; ++round) {
        std::vector<Action> selected;
        const int n = 1 + int(rng.uniform_int(5));
        for (int i = 0; i < n; ++i)
            selected.push_back(
                Action{Eigen::Vector2d(rng.uniform(0, 639), rng.uniform(0, 479))});
        const auto fitted = fit(selected, prev, config, spec);
        REQUIRE(fitted.sigma <= prev.sigma);
        REQUIRE(fitted.sigma >= config.sigma_floor);
        prev = fitted;
    }
}

TEST_CASE("fit rejects an empty selection") {
    const auto spec = make_nav2d_space(640, 480);
    REQUIRE_THROWS_AS(fit({}, init_distribution(spec), engine_config(), spec), EmptySelection);
}

TEST_CASE("a zero-noise step moves the mean toward the truth") {
    const auto ctx = nav_context();
    PivotConfig config = engine_config();
    const Action truth{Eigen::Vector2d(480, 360)};
    const ProposalDistribution start{Eigen::Vector2d(160, 120), 100.0};
    const double before = (start.mean - truth.components).norm();
    for (uint64_t seed = 0; seed < 20; ++seed) {
        SyntheticOracle oracle(ctx.space, truth, 0.0, Rng(seed));
        Rng rng(seed);
        const auto rec = pivot_step(ctx, start, oracle, config, rng);
        REQUIRE_FALSE(rec.no_op);
        REQUIRE((rec.fitted.mean - truth.components).norm() < before);
    }
}

TEST_CASE("invalid oracle output flags a no-op step") {
    const auto ctx = nav_context();
    PivotConfig config = engine_config();
    ReplayOracle oracle({R"({"points": [99]})"});
    Rng rng(3);
    const auto dist = init_distribution(ctx.space);
    const auto rec = pivot_step(ctx, dist, oracle, config, rng);
    REQUIRE(rec.no_op);
    REQUIRE(rec.fitted.mean == dist.mean);
    REQUIRE(rec.fitted.sigma == dist.sigma);
    REQUIRE(rec.selected.empty());
}

TEST_CASE("selecting every label moves the mean to the sample average") {
    const auto ctx = nav_context();
    PivotConfig config = engine_config();
    config.samples = 5;
    config.top_k = 5;
    ReplayOracle oracle({R"({"points": [1, 2, 3, 4, 5]})"});
    Rng rng(4);
    const auto dist = init_distribution(ctx.space);
    const auto rec = pivot_step(ctx, dist, oracle, config, rng);
    REQUIRE(rec.candidates.size() == 5);
    Eigen::Vector2d want = Eigen::Vector2d::Zero();
    for (const auto& [id, a] : rec.candidates) want += Eigen::Vector2d(a.components);
    want /= 5.0;
    REQUIRE((rec.fitted.mean - want).norm() < 1e-12);
}

TEST_CASE("single-iteration run reduces to one round of visual prompting") {
    const auto ctx = nav_context();
    PivotConfig config = engine_config();
    config.iterations = 1;
    SyntheticOracle oracle(ctx.space, Action{Eigen::Vector2d(500, 100)}, 0.0, Rng(6));
    Rng rng(6);
    const auto [best, trace] = pivot_run(ctx, oracle, config, rng);
    REQUIRE(trace.records.size() == 1);
    REQUIRE(trace.records[0].selected.size() == 1);
}

TEST_CASE("a scripted oracle that always picks label 1 returns the first sample") {
    const auto ctx = nav_context();
    PivotConfig config = engine_config();
    ReplayOracle oracle({R"({"points": [1]})", R"({"points": [1]})", R"({"points": [1]})"});
    Rng rng(7);
    const auto [best, trace] = pivot_run(ctx, oracle, config, rng);
    const auto& last = trace.records.back();
    REQUIRE(last.selected == std::vector<int>{1});
    REQUIRE(best.components == last.candidates.front().second.components);
}

TEST_CASE("three zero-noise iterations do not lose ground") {
    const auto ctx = nav_context();
    PivotConfig config = engine_config();
    std::vector<double> first, final;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const Action truth{Eigen::Vector2d(100.0 + 20.0 * seed, 70.0 + 15.0 * seed)};
        SyntheticOracle oracle(ctx.space, truth, 0.0, Rng(seed));
        Rng rng(seed);
        const auto [best, trace] = pivot_run(ctx, oracle, config, rng);
        first.push_back((trace.records.front().fitted.mean - truth.components).norm());
        final.push_back((trace.records.back().fitted.mean - truth.components).norm());
    }
    std::sort(first.begin(), first.end());
    std::sort(final.begin(), final.end());
    REQUIRE(final[final.size() / 2] <= first[first.size() / 2]);
}

TEST_CASE("trace invariants: sigma monotone, actions in bounds, labels rendered") {
    const auto ctx = nav_context();
    PivotConfig config = engine_config();
    config.top_k = 3;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        SyntheticOracle oracle(ctx.space, Action{Eigen::Vector2d(33, 451)}, 0.1, Rng(seed));
        Rng rng(seed);
        const auto [best, trace] = pivot_run(ctx, oracle, config, rng);
        double prev_sigma = std::numeric_limits<double>::infinity();
        const double floor = resolve_sigma_floor(config, ctx.space);
        for (const auto& rec : trace.records) {
            REQUIRE(rec.fitted.sigma <= prev_sigma);
            REQUIRE(rec.fitted.sigma >= floor);
            prev_sigma = rec.fitted.sigma;
            for (const auto& [id, a] : rec.candidates) {
                REQUIRE(a.components[0] >= ctx.space.lower[0]);
                REQUIRE(a.components[0] <= ctx.space.upper[0]);
                REQUIRE(a.components[1] >= ctx.space.lower[1]);
                REQUIRE(a.components[1] <= ctx.space.upper[1]);
            }
            for (const int id : rec.selected) {
                const bool known =
                    std::any_of(rec.candidates.begin(), rec.candidates.end(),
                                [&](const auto& p) { return p.first == id; });
                REQUIRE(known);
            }
        }
    }
}

TEST_CASE("the full trace is reproducible bit for bit") {
    const auto ctx = nav_context();
    PivotConfig config = engine_config();
    config.top_k = 2;
    const Action truth{Eigen::Vector2d(77, 310)};
    SyntheticOracle oracle_a(ctx.space, truth, 0.2, Rng(55));
    SyntheticOracle oracle_b(ctx.space, truth, 0.2, Rng(55));
    Rng rng_a(55), rng_b(55);
    const auto [best_a, trace_a] = pivot_run(ctx, oracle_a, config, rng_a);
    const auto [best_b, trace_b] = pivot_run(ctx, oracle_b, config, rng_b);
    REQUIRE(best_a.components == best_b.components);
    REQUIRE(trace_string(trace_a) == trace_string(trace_b));
}

TEST_CASE("parallel pivot with one instance matches a plain run") {
    const auto ctx = nav_context();
    PivotConfig config = engine_config();
    config.parallel = 1;
    config.seed = 99;
    const Action truth{Eigen::Vector2d(512, 123)};
    SyntheticOracle oracle_a(ctx.space, truth, 0.0, Rng(99));
    const Action via_parallel = parallel_pivot(ctx, oracle_a, config);

    SyntheticOracle oracle_b(ctx.space, truth, 0.0, Rng(99));
    Rng rng(derive_seed(config.seed, 1));
    const auto [plain, trace] = pivot_run(ctx, oracle_b, config, rng);
    REQUIRE(via_parallel.components == plain.components);
}

TEST_CASE("refit aggregation of unanimous candidates returns the candidate") {
    const auto spec = make_nav2d_space(640, 480);
    PivotConfig config = engine_config();
    const Action a{Eigen::Vector2d(231, 77)};
    const auto fitted = fit({a, a, a}, init_distribution(spec), config, spec);
    REQUIRE(fitted.mean == a.components);
}

TEST_CASE("arbitration falls back to the first candidate when unanswerable") {
    const auto ctx = nav_context();
    PivotConfig config = engine_config();
    config.parallel = 2;
    config.aggregation = Aggregation::arbitrate;
    // Script: two instances x three iterations answer label 1, then the
    // arbitration query gets garbage.
    std::vector<std::string> script;
    for (int i = 0; i < 6; ++i) script.push_back(R"({"points": [1]})");
    script.push_back("no answer");
    ReplayOracle oracle(script);
    const Action best = parallel_pivot(ctx, oracle, config);
    REQUIRE(oracle.remaining() == 0);  // arbitration query was consumed
    REQUIRE(best.components.size() == 2);
}
