#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <httplib.h>
#include <mutex>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <string>
#include <thread>

#include "pivot/oracle.hpp"

namespace pivot {

enum class WireSchema { openai_chat, gemini_generate };

struct RemoteConfig {
    std::string endpoint;     // full URL, e.g. http://host:port/v1/chat/completions
    std::string api_key_env;  // environment variable holding the key; never a flag
    std::string model = "gpt-4-vision-preview";
    WireSchema schema = WireSchema::openai_chat;
    double timeout_s = 60.0;
    int max_retries = 2;     // 429 retries, honoring Retry-After
    int max_in_flight = 4;

    static WireSchema schema_from_string(const std::string& s) {
        if (s == "openai-chat") return WireSchema::openai_chat;
        if (s == "gemini-generate") return WireSchema::gemini_generate;
        throw ConfigError("unknown wire schema '" + s + "'");
    }
};

namespace detail {

inline std::string base64_encode(const unsigned char* data, size_t len) {
    static const char* table =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (size_t i = 0; i < len; i += 3) {
        uint32_t chunk = uint32_t(data[i]) << 16;
        if (i + 1 < len) chunk |= uint32_t(data[i + 1]) << 8;
        if (i + 2 < len) chunk |= uint32_t(data[i + 2]);
        out.push_back(table[(chunk >> 18) & 0x3f]);
        out.push_back(table[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < len ? table[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < len ? table[chunk & 0x3f] : '=');
    }
    return out;
}

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("remote: endpoint must be a full URL");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string encode_png_base64(const cv::Mat& image) {
    std::vector<unsigned char> buf;
    if (!cv::imencode(".png", image, buf))
        throw TransportError("remote: failed to encode image as PNG");
    return base64_encode(buf.data(), buf.size());
}

}  // namespace detail

/// HTTP client for GPT-4V/Gemini-class chat endpoints: one request per query
/// carrying the prompt text with the annotated image spliced in as base64 PNG
/// at the position of the image marker.
class RemoteOracle final : public SelectionOracle {
public:
    explicit RemoteOracle(RemoteConfig config) : config_(std::move(config)) {}

    SelectionResponse select(const SelectionQuery& query) override {
        InFlightGuard guard(*this);

        const std::string prompt = build_prompt(query);
        std::string pre = prompt, post;
        if (const auto pos = prompt.find(kImageMarker); pos != std::string::npos) {
            pre = prompt.substr(0, pos);
            post = prompt.substr(pos + std::string(kImageMarker).size());
        }
        const std::string image_b64 = detail::encode_png_base64(query.annotated.pixels);
        const nlohmann::json body = config_.schema == WireSchema::openai_chat
                                        ? openai_body(pre, post, image_b64)
                                        : gemini_body(pre, post, image_b64);

        const std::string text = post_with_retries(body.dump());
        SelectionResponse resp;
        resp.raw_text = text;
        resp.ranked_labels = parse_selection(text, query.valid_labels());
        return resp;
    }

    bool concurrent_safe() const override { return true; }

private:
    struct InFlightGuard {
        RemoteOracle& oracle;
        explicit InFlightGuard(RemoteOracle& o) : oracle(o) {
            std::unique_lock lock(o.mutex_);
            o.cv_.wait(lock, [&] { return o.in_flight_ < o.config_.max_in_flight; });
            ++o.in_flight_;
        }
        ~InFlightGuard() {
            std::lock_guard lock(oracle.mutex_);
            --oracle.in_flight_;
            oracle.cv_.notify_one();
        }
    };

    nlohmann::json openai_body(const std::string& pre, const std::string& post,
                               const std::string& image_b64) const {
        nlohmann::json content = nlohmann::json::array();
        if (!pre.empty()) content.push_back({{"type", "text"}, {"text", pre}});
        content.push_back(
            {{"type", "image_url"},
             {"image_url", {{"url", "data:image/png;base64," + image_b64}}}});
        if (!post.empty()) content.push_back({{"type", "text"}, {"text", post}});
        return {{"model", config_.model},
                {"messages", nlohmann::json::array(
                                 {{{"role", "user"}, {"content", content}}})}};
    }

    nlohmann::json gemini_body(const std::string& pre, const std::string& post,
                               const std::string& image_b64) const {
        nlohmann::json parts = nlohmann::json::array();
        if (!pre.empty()) parts.push_back({{"text", pre}});
        parts.push_back({{"inline_data", {{"mime_type", "image/png"}, {"data", image_b64}}}});
        if (!post.empty()) parts.push_back({{"text", post}});
        return {{"contents", nlohmann::json::array({{{"parts", parts}}})}};
    }

    std::string extract_text(const std::string& body) const {
        const nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) throw TransportError("remote: response is not JSON");
        try {
            if (config_.schema == WireSchema::openai_chat)
                return j.at("choices").at(0).at("message").at("content").get<std::string>();
            std::string text;
            for (const auto& part : j.at("candidates").at(0).at("content").at("parts"))
                if (part.contains("text")) text += part.at("text").get<std::string>();
            return text;
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("remote: unexpected response shape: ") + e.what());
        }
    }

    std::string post_with_retries(const std::string& body) const {
        const auto url = detail::split_url(config_.endpoint);
        for (int attempt = 0;; ++attempt) {
            httplib::Client client(url.base);
            client.set_read_timeout(std::chrono::milliseconds(int64_t(config_.timeout_s * 1000)));
            client.set_connection_timeout(
                std::chrono::milliseconds(int64_t(config_.timeout_s * 1000)));
            httplib::Headers headers{{"Content-Type", "application/json"}};
            if (!config_.api_key_env.empty()) {
                if (const char* key = std::getenv(config_.api_key_env.c_str())) {
                    if (config_.schema == WireSchema::openai_chat)
                        headers.emplace("Authorization", std::string("Bearer ") + key);
                    else
                        headers.emplace("x-goog-api-key", key);
                }
            }
            const httplib::Result res = client.Post(url.path, headers, body, "application/json");
            if (!res)
                throw TransportError("remote: request to " + config_.endpoint + " failed: " +
                                     httplib::to_string(res.error()));
            if (res->status == 429) {
                if (attempt >= config_.max_retries)
                    throw RateLimited("remote: rate limited after " +
                                      std::to_string(attempt + 1) + " attempts");
                double wait_s = 1.0;
                if (res->has_header("Retry-After"))
                    wait_s = std::min(30.0, std::atof(res->get_header_value("Retry-After").c_str()));
                std::this_thread::sleep_for(std::chrono::milliseconds(int64_t(wait_s * 1000)));
                continue;
            }
            if (res->status < 200 || res->status >= 300)
                throw TransportError("remote: HTTP " + std::to_string(res->status) + " from " +
                                     config_.endpoint);
            return extract_text(res->body);
        }
    }

    RemoteConfig config_;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    mutable int in_flight_ = 0;
};

}  // namespace pivot
