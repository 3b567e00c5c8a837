#pragma once

#include <algorithm>
#include <array>
#include <deque>
#include <memory>
#include <nlohmann/json.hpp>
#include <regex>
#include <string>
#include <vector>

#include "pivot/annotate.hpp"
#include "pivot/common.hpp"

namespace pivot {

enum class PromptStyle { zero_shot_cot, zero_shot_direct, few_shot_cot, few_shot_direct };
enum class TaskKind { navigation, manipulation, keypoint, pickplace };
enum class Segment { preamble, image, task };

/// Marker standing in for the image inside the assembled prompt text; remote
/// clients split the text here and splice the encoded image between the parts.
inline constexpr const char* kImageMarker = "IMG,";

struct SelectionQuery {
    AnnotatedImage annotated;
    std::string instruction;
    int k = 3;
    PromptStyle prompt_style = PromptStyle::zero_shot_cot;
    std::array<Segment, 3> ordering{Segment::preamble, Segment::image, Segment::task};
    TaskKind task_kind = TaskKind::navigation;
    std::vector<std::string> exemplars;

    std::vector<int> valid_labels() const {
        std::vector<int> out;
        for (const auto& [id, _] : annotated.labels) out.push_back(id);
        return out;
    }
};

struct SelectionResponse {
    std::vector<int> ranked_labels;
    std::string raw_text;
};

namespace detail {

inline bool is_cot(PromptStyle s) {
    return s == PromptStyle::zero_shot_cot || s == PromptStyle::few_shot_cot;
}

inline bool is_few_shot(PromptStyle s) {
    return s == PromptStyle::few_shot_cot || s == PromptStyle::few_shot_direct;
}

inline std::string points_format_clause(bool cot) {
    std::string s = cot ? "Give a one sentence analysis of why you chose those points. "
                        : "Skip analysis and ";
    s += cot ? "Provide your answer at the end in a json file of this format:\n{\"points\": []}"
             : "provide your answer at the end in a json file of this form:\n{\"points\": []}";
    return s;
}

inline std::string keypoint_preamble(const std::string& instruction) {
    return "Your goal is to find the " + instruction +
           " in this scene. I have annotated the image with numbered circles.";
}

inline std::string keypoint_task(const std::string& instruction, int k, bool cot) {
    return "Choose the " + std::to_string(k) + " numbers that have the most overlap with the " +
           instruction +
           ". If there are no points with overlap, then don't choose any points. You are a "
           "five-time world champion in this game. " +
           points_format_clause(cot);
}

inline std::string navigation_preamble() {
    return "I am a wheeled robot that cannot go over objects. This is the image I'm seeing right "
           "now. I have annotated it with numbered circles. Each number represent a general "
           "direction I can follow.";
}

inline std::string navigation_task(const std::string& instruction, int k, bool cot) {
    return "Now you are a five-time world-champion navigation agent and your task is to tell me "
           "which circle I should pick for the task of: " +
           instruction + "? Choose " + std::to_string(k) +
           " best candidate numbers. Do NOT choose routes that goes through objects. " +
           points_format_clause(cot);
}

inline std::string manipulation_preamble() {
    return "Summary: The arrows are actions the robot can take.\n"
           "Red means move the arm forward (away from the camera), blue means move the arm "
           "backwards (towards the camera).\n"
           "Smaller circles are further from the camera and thus move the arm forward, larger "
           "circles are closer and thus move the arm backwards.";
}

inline std::string manipulation_task(const std::string& instruction, int k, bool cot) {
    std::string s;
    if (cot) {
        s += "Description: The robot can only grasp or move objects if the gripper is around the "
             "object and closed on the object.\n"
             "Reason through the task first and at the end summarize the correct action "
             "choice(s) with the format, Arrow: [<number>, <number>, etc.]. A general rule of "
             "thumb is to return " +
             std::to_string(k) + " candidates, ranked from worst to best.\n";
    } else {
        s += "Do not output anything else, direct answer with the format, Arrow: [<number>, "
             "<number>, etc.]. Return up to " +
             std::to_string(k) + " candidates.\n";
    }
    s += "Task: " + instruction;
    return s;
}

inline std::string pickplace_preamble() {
    return "I have annotated the image with numbered markers for pick and place locations.";
}

inline std::string pickplace_task(const std::string& instruction, int k, bool cot) {
    return "Which " + std::to_string(k) + " number markers are closest to the " + instruction +
           "? " + points_format_clause(cot);
}

}  // namespace detail

/// Assembles the full prompt text for a query: the task template instantiated
/// with the instruction and k, the segments laid out in the configured order,
/// and (for few-shot styles) the caller's exemplars spliced in verbatim ahead
/// of the task.
inline std::string build_prompt(const SelectionQuery& q) {
    const bool cot = detail::is_cot(q.prompt_style);
    std::string preamble, task;
    switch (q.task_kind) {
        case TaskKind::keypoint:
            preamble = detail::keypoint_preamble(q.instruction);
            task = detail::keypoint_task(q.instruction, q.k, cot);
            break;
        case TaskKind::navigation:
            preamble = detail::navigation_preamble();
            task = detail::navigation_task(q.instruction, q.k, cot);
            break;
        case TaskKind::manipulation:
            preamble = detail::manipulation_preamble();
            task = detail::manipulation_task(q.instruction, q.k, cot);
            break;
        case TaskKind::pickplace:
            preamble = detail::pickplace_preamble();
            task = detail::pickplace_task(q.instruction, q.k, cot);
            break;
    }
    if (detail::is_few_shot(q.prompt_style)) {
        if (q.exemplars.empty())
            throw MissingExemplars("build_prompt: few-shot style requires exemplars");
        std::string shots;
        for (const auto& e : q.exemplars) shots += e + "\n";
        task = shots + task;
    }
    std::string out;
    for (const Segment seg : q.ordering) {
        if (!out.empty()) out += "\n";
        switch (seg) {
            case Segment::preamble: out += preamble; break;
            case Segment::image: out += kImageMarker; break;
            case Segment::task: out += task; break;
        }
    }
    return out;
}

/// Extracts the ranked label list from raw oracle text. Prefers the last
/// well-formed {"points": [...]} object anywhere in the text, then the last
/// Arrow: [...] list. Labels not in valid_labels are dropped; duplicates keep
/// their first occurrence.
inline std::vector<int> parse_selection(const std::string& raw_text,
                                        const std::vector<int>& valid_labels) {
    std::vector<int> picked;
    bool format_found = false;

    static const std::regex points_re{R"(\{[^{}]*"points"[^{}]*\})"};
    for (auto it = std::sregex_iterator(raw_text.begin(), raw_text.end(), points_re);
         it != std::sregex_iterator(); ++it) {
        const nlohmann::json j = nlohmann::json::parse(it->str(), nullptr, false);
        if (j.is_discarded() || !j.contains("points") || !j.at("points").is_array()) continue;
        std::vector<int> labels;
        for (const auto& e : j.at("points")) {
            if (e.is_number_integer()) {
                labels.push_back(e.get<int>());
            } else if (e.is_number_float()) {
                const double v = e.get<double>();
                if (v == std::floor(v)) labels.push_back(int(v));
            } else if (e.is_string()) {
                try {
                    labels.push_back(std::stoi(e.get<std::string>()));
                } catch (...) {
                }
            }
        }
        picked = labels;  // keep the last well-formed block
        format_found = true;
    }

    if (!format_found) {
        static const std::regex arrow_re{R"(Arrow\s*:\s*\[([^\[\]]*)\])"};
        std::smatch last;
        for (auto it = std::sregex_iterator(raw_text.begin(), raw_text.end(), arrow_re);
             it != std::sregex_iterator(); ++it)
            last = *it;
        if (!last.empty()) {
            format_found = true;
            static const std::regex int_re{R"(-?\d+)"};
            const std::string body = last[1].str();
            for (auto it = std::sregex_iterator(body.begin(), body.end(), int_re);
                 it != std::sregex_iterator(); ++it)
                picked.push_back(std::stoi(it->str()));
        }
    }

    if (!format_found) throw Unparseable("parse_selection: no answer block found");

    std::vector<int> out;
    for (const int label : picked) {
        const bool valid = std::find(valid_labels.begin(), valid_labels.end(), label) !=
                           valid_labels.end();
        const bool seen = std::find(out.begin(), out.end(), label) != out.end();
        if (valid && !seen) out.push_back(label);
    }
    if (out.empty()) throw EmptyAfterFilter("parse_selection: no valid labels in answer");
    return out;
}

/// Port for anything that can rank the displayed labels: a remote VLM, the
/// synthetic ground-truth stand-in, or a scripted replay.
class SelectionOracle {
public:
    virtual ~SelectionOracle() = default;
    virtual SelectionResponse select(const SelectionQuery& query) = 0;
    virtual bool concurrent_safe() const { return false; }
};

/// Deterministic stand-in for the VLM: scores each candidate by distance to a
/// hidden ground-truth action plus Gaussian noise scaled by the space extent,
/// and returns the k lowest-scoring labels in ascending score order.
class SyntheticOracle final : public SelectionOracle {
public:
    SyntheticOracle(ActionSpaceSpec space, Action truth, double noise_sigma, Rng rng)
        : space_(std::move(space)), truth_(std::move(truth)), noise_sigma_(noise_sigma),
          rng_(rng) {
        if (truth_.components.size() != space_.dims())
            throw DimensionMismatch("synthetic oracle: truth dims do not match space");
    }

    SelectionResponse select(const SelectionQuery& query) override {
        const double extent = space_.largest_extent();
        std::vector<std::pair<double, int>> scored;
        for (const auto& [id, action] : query.annotated.labels) {
            double score = (action.components - truth_.components).norm();
            if (noise_sigma_ > 0.0) score += rng_.gaussian() * noise_sigma_ * extent;
            scored.emplace_back(score, id);
        }
        std::sort(scored.begin(), scored.end());  // ties break toward the lower label id
        const int k = std::min<int>(query.k, scored.size());
        SelectionResponse resp;
        nlohmann::json points = nlohmann::json::array();
        for (int i = 0; i < k; ++i) {
            resp.ranked_labels.push_back(scored[i].second);
            points.push_back(scored[i].second);
        }
        resp.raw_text = nlohmann::json{{"points", points}}.dump();
        return resp;
    }

private:
    ActionSpaceSpec space_;
    Action truth_;
    double noise_sigma_;
    Rng rng_;
};

/// Pops canned response texts in order; the deterministic harness for engine
/// tests.
class ReplayOracle final : public SelectionOracle {
public:
    explicit ReplayOracle(std::vector<std::string> script)
        : script_(script.begin(), script.end()) {}

    SelectionResponse select(const SelectionQuery& query) override {
        if (script_.empty()) throw ScriptExhausted("replay oracle: script exhausted");
        SelectionResponse resp;
        resp.raw_text = script_.front();
        script_.pop_front();
        resp.ranked_labels = parse_selection(resp.raw_text, query.valid_labels());
        return resp;
    }

    size_t remaining() const { return script_.size(); }

private:
    std::deque<std::string> script_;
};

/// Text-only baseline: instead of annotated labels, the image is treated as a
/// 3x3 grid of named regions and the answer is one region name mapped to its
/// center pixel.
struct RegionBaseline {
    static const std::array<std::string, 9>& region_names() {
        static const std::array<std::string, 9> names{
            "top left",    "top middle",    "top right",
            "middle left", "middle middle", "middle right",
            "bottom left", "bottom middle", "bottom right"};
        return names;
    }

    static Eigen::Vector2d region_center(int index, int image_w, int image_h) {
        const int row = index / 3, col = index % 3;
        return {(col + 0.5) * image_w / 3.0, (row + 0.5) * image_h / 3.0};
    }

    /// Synthetic desk-scale stand-in: picks the region whose center is nearest
    /// the hidden truth pixel, with the same noise model as the main oracle.
    static std::pair<std::string, Eigen::Vector2d> pick(int image_w, int image_h,
                                                        const Eigen::Vector2d& truth_px,
                                                        double noise_sigma, Rng& rng) {
        int best = 0;
        double best_score = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 9; ++i) {
            double score = (region_center(i, image_w, image_h) - truth_px).norm();
            if (noise_sigma > 0.0) score += rng.gaussian() * noise_sigma * image_w;
            if (score < best_score) {
                best_score = score;
                best = i;
            }
        }
        return {region_names()[best], region_center(best, image_w, image_h)};
    }
};

}  // namespace pivot
