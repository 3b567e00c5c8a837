#include <algorithm>
#include <catch2/catch_amalgamated.hpp>

#include "pivot/oracle.hpp"
#include "test_util.hpp"

using namespace pivot;

namespace {

AnnotatedImage tiny_annotated(int n_labels, int dims = 2) {
    AnnotatedImage img;
    img.pixels = testutil::white_image(64, 48);
    for (int i = 1; i <= n_labels; ++i) {
        Action a;
        a.components = Eigen::VectorXd::Constant(dims, double(i));
        img.labels.emplace(i, a);
        ArrowGeometry g;
        g.label_id = i;
        img.geometries.push_back(g);
    }
    return img;
}

SelectionQuery keypoint_query(const std::string& instruction, int k) {
    SelectionQuery q;
    q.annotated = tiny_annotated(10);
    q.instruction = instruction;
    q.k = k;
    q.task_kind = TaskKind::keypoint;
    return q;
}

}  // namespace

TEST_CASE("keypoint prompt carries the documented clauses") {
    const std::string text = build_prompt(keypoint_query("the red mug", 3));
    REQUIRE(text.find("Choose the 3 numbers that have the most overlap") != std::string::npos);
    REQUIRE(text.find("Provide your answer at the end in a json file") != std::string::npos);
    REQUIRE(text.find("the red mug") != std::string::npos);
    REQUIRE(text.find("{\"points\": []}") != std::string::npos);
}

TEST_CASE("navigation prompt substitutes k") {
    SelectionQuery q;
    q.annotated = tiny_annotated(5);
    q.instruction = "go to the kitchen";
    q.k = 2;
    q.task_kind = TaskKind::navigation;
    const std::string text = build_prompt(q);
    REQUIRE(text.find("Choose 2 best candidate numbers") != std::string::npos);
    REQUIRE(text.find("go to the kitchen") != std::string::npos);
}

TEST_CASE("segment ordering permutes content without changing it") {
    SelectionQuery q = keypoint_query("the bowl", 3);
    q.ordering = {Segment::preamble, Segment::image, Segment::task};
    const std::string pit = build_prompt(q);
    q.ordering = {Segment::image, Segment::preamble, Segment::task};
    const std::string ipt = build_prompt(q);
    REQUIRE(pit != ipt);
    REQUIRE(pit.size() == ipt.size());
    // Same segments present in both.
    for (const auto* clause : {"Your goal is to find", "Choose the 3 numbers", kImageMarker}) {
        REQUIRE(pit.find(clause) != std::string::npos);
        REQUIRE(ipt.find(clause) != std::string::npos);
    }
    // Image-first ordering starts with the marker.
    REQUIRE(ipt.rfind(kImageMarker, 0) == 0);
}

TEST_CASE("prompt building is deterministic") {
    const SelectionQuery q = keypoint_query("the plant", 3);
    REQUIRE(build_prompt(q) == build_prompt(q));
}

TEST_CASE("few-shot styles require and inline exemplars") {
    SelectionQuery q;
    q.annotated = tiny_annotated(4);
    q.instruction = "pick the can";
    q.task_kind = TaskKind::manipulation;
    q.prompt_style = PromptStyle::few_shot_direct;
    REQUIRE_THROWS_AS(build_prompt(q), MissingExemplars);
    q.exemplars = {"IMG,\nTask: Erase the writing on the whiteboard.\nArrow: [5, 10],"};
    const std::string text = build_prompt(q);
    REQUIRE(text.find("Erase the writing on the whiteboard") != std::string::npos);
    REQUIRE(text.find("Arrow: [5, 10],") != std::string::npos);
}

TEST_CASE("manipulation prompt styles differ in reasoning demand") {
    SelectionQuery q;
    q.annotated = tiny_annotated(4);
    q.instruction = "pick the apple";
    q.task_kind = TaskKind::manipulation;
    q.prompt_style = PromptStyle::zero_shot_cot;
    REQUIRE(build_prompt(q).find("Reason through the task first") != std::string::npos);
    q.prompt_style = PromptStyle::zero_shot_direct;
    REQUIRE(build_prompt(q).find("Do not output anything else") != std::string::npos);
}

TEST_CASE("parses the json points format after reasoning text") {
    const std::vector<int> valid{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const auto picked =
        parse_selection("The mug is left of center, points 3 and 5 overlap it.\n"
                        "{\"points\": [3, 5]}",
                        valid);
    REQUIRE(picked == std::vector<int>{3, 5});
}

TEST_CASE("parses the arrow format") {
    const std::vector<int> valid{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const auto picked = parse_selection(
        "The robot should move toward the eraser. Arrow: [5, 10]", valid);
    REQUIRE(picked == std::vector<int>{5, 10});
}

TEST_CASE("unparseable text raises") {
    REQUIRE_THROWS_AS(parse_selection("I cannot decide.", {1, 2, 3}), Unparseable);
}

TEST_CASE("last answer block wins") {
    const auto picked = parse_selection(
        "First guess {\"points\": [1]} but after more thought {\"points\": [2]}", {1, 2, 3});
    REQUIRE(picked == std::vector<int>{2});
}

TEST_CASE("hallucinated labels are filtered, duplicates deduplicated") {
    REQUIRE(parse_selection("{\"points\": [99, 3, 3]}", {1, 2, 3}) == std::vector<int>{3});
    REQUIRE(parse_selection("Arrow: [7, 7, 2]", {2, 7}) == std::vector<int>{7, 2});
    REQUIRE_THROWS_AS(parse_selection("{\"points\": [99]}", {1, 2, 3}), EmptyAfterFilter);
    REQUIRE_THROWS_AS(parse_selection("{\"points\": []}", {1, 2, 3}), EmptyAfterFilter);
}

TEST_CASE("parse output is always a duplicate-free subset of valid labels") {
    Rng rng(21);
    const std::vector<int> valid{1, 2, 3, 4, 5};
    for (int trial = 0; trial < 200; ++trial) {
        std::string text = "noise " + std::to_string(rng.uniform_int(1000)) + " {\"points\": [";
        const int n = 1 + int(rng.uniform_int(6));
        for (int i = 0; i < n; ++i)
            text += std::to_string(rng.uniform_int(9)) + (i + 1 < n ? ", " : "");
        text += "]}";
        try {
            const auto picked = parse_selection(text, valid);
            std::vector<int> seen;
            for (const int label : picked) {
                REQUIRE(std::count(valid.begin(), valid.end(), label) == 1);
                REQUIRE(std::count(seen.begin(), seen.end(), label) == 0);
                seen.push_back(label);
            }
        } catch (const EmptyAfterFilter&) {
        }
    }
}

TEST_CASE("synthetic oracle ranks the exact match first") {
    const auto spec = make_nav2d_space(64, 48);
    AnnotatedImage img;
    img.pixels = testutil::white_image(64, 48);
    img.labels.emplace(1, Action{Eigen::Vector2d(10, 10)});
    img.labels.emplace(2, Action{Eigen::Vector2d(40, 20)});
    img.labels.emplace(3, Action{Eigen::Vector2d(60, 45)});
    SelectionQuery q;
    q.annotated = img;
    q.k = 1;
    SyntheticOracle oracle(spec, Action{Eigen::Vector2d(40, 20)}, 0.0, Rng(1));
    REQUIRE(oracle.select(q).ranked_labels == std::vector<int>{2});
}

TEST_CASE("noise-free synthetic oracle with k = M is the brute-force distance sort") {
    const auto spec = make_nav2d_space(640, 480);
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        AnnotatedImage img;
        img.pixels = testutil::white_image(64, 48);
        const int n = 2 + int(rng.uniform_int(9));
        for (int i = 1; i <= n; ++i)
            img.labels.emplace(i, Action{Eigen::Vector2d(rng.uniform(0, 639), rng.uniform(0, 479))});
        const Action truth{Eigen::Vector2d(rng.uniform(0, 639), rng.uniform(0, 479))};

        SelectionQuery q;
        q.annotated = img;
        q.k = n;
        SyntheticOracle oracle(spec, truth, 0.0, Rng(trial));
        const auto ranked = oracle.select(q).ranked_labels;

        std::vector<int> brute;
        for (const auto& [id, _] : img.labels) brute.push_back(id);
        std::stable_sort(brute.begin(), brute.end(), [&](int a, int b) {
            return (img.labels.at(a).components - truth.components).norm() <
                   (img.labels.at(b).components - truth.components).norm();
        });
        REQUIRE(ranked == brute);
    }
}

TEST_CASE("synthetic oracle noise calibration over 1000 seeded trials") {
    // Two candidates, the better one twice as close; noise 0.05 x extent.
    const auto spec = make_nav2d_space(640, 480);
    AnnotatedImage img;
    img.pixels = testutil::white_image(64, 48);
    img.labels.emplace(1, Action{Eigen::Vector2d(320, 240)});  // distance ~128
    img.labels.emplace(2, Action{Eigen::Vector2d(448, 240)});  // distance ~256
    const Action truth{Eigen::Vector2d(192, 240)};
    SelectionQuery q;
    q.annotated = img;
    q.k = 1;
    int best_first = 0;
    for (int seed = 0; seed < 1000; ++seed) {
        SyntheticOracle oracle(spec, truth, 0.05, Rng(seed));
        if (oracle.select(q).ranked_labels.front() == 1) ++best_first;
    }
    REQUIRE(best_first > 950);
}

TEST_CASE("synthetic oracle is deterministic for a fixed seed") {
    const auto spec = make_nav2d_space(64, 48);
    SelectionQuery q;
    q.annotated = tiny_annotated(6);
    q.k = 3;
    SyntheticOracle a(spec, Action{Eigen::Vector2d(3, 3)}, 0.3, Rng(77));
    SyntheticOracle b(spec, Action{Eigen::Vector2d(3, 3)}, 0.3, Rng(77));
    REQUIRE(a.select(q).ranked_labels == b.select(q).ranked_labels);
}

TEST_CASE("replay oracle pops its script in order and then exhausts") {
    SelectionQuery q;
    q.annotated = tiny_annotated(10);
    ReplayOracle oracle({R"({"points": [1]})", "Arrow: [4, 2]"});
    REQUIRE(oracle.select(q).ranked_labels == std::vector<int>{1});
    REQUIRE(oracle.select(q).ranked_labels == std::vector<int>{4, 2});
    REQUIRE_THROWS_AS(oracle.select(q), ScriptExhausted);
}

TEST_CASE("replay oracle surfaces filter failures") {
    SelectionQuery q;
    q.annotated = tiny_annotated(10);
    ReplayOracle oracle({R"({"points": [99]})"});
    REQUIRE_THROWS_AS(oracle.select(q), EmptyAfterFilter);
}

TEST_CASE("region baseline names a 3x3 grid and maps to centers") {
    REQUIRE(RegionBaseline::region_names()[0] == "top left");
    REQUIRE(RegionBaseline::region_names()[7] == "bottom middle");
    REQUIRE(RegionBaseline::region_center(0, 600, 300) == Eigen::Vector2d(100, 50));
    Rng rng(4);
    const auto [name, center] = RegionBaseline::pick(600, 300, {590, 290}, 0.0, rng);
    REQUIRE(name == "bottom right");
    REQUIRE(center == Eigen::Vector2d(500, 250));
}
