#pragma once

#include <httplib.h>

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chiq/error.hpp"
#include "chiq/hash.hpp"
#include "chiq/text.hpp"

namespace chiq::llm {

struct GenerationConfig {
    double temperature = 0.7;
    int max_new_tokens = 64;
    std::optional<std::int64_t> seed;

    void validate() const {
        if (!(temperature >= 0.0 && temperature <= 2.0)) {
            throw Error(ErrorKind::validation, "temperature must lie in [0, 2]");
        }
        if (max_new_tokens < 1) throw Error(ErrorKind::validation, "max_new_tokens must be >= 1");
    }
};

struct ChatRequest {
    std::string system_instruction;
    std::string user_content;
    GenerationConfig config;
};

struct ChatResponse {
    std::string text;
    std::string backend_id;
    bool cached = false;
};

/// The prompt as one string: instruction, blank line, user content. Mock
/// substring rules and hash rules both match against this.
inline std::string combined_prompt(const ChatRequest& request) {
    return request.system_instruction + "\n\n" + request.user_content;
}

inline std::string prompt_hash(const ChatRequest& request) {
    return hash::sha256_hex(combined_prompt(request));
}

/// Raised by backends for failures worth retrying (connection errors, 429, 5xx).
class TransientError : public Error {
public:
    explicit TransientError(const std::string& message) : Error(ErrorKind::transport, message) {}
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string id() const = 0;
    virtual std::string generate(const ChatRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Mock backend

enum class MatchKind { substring, hash };

struct MockRule {
    MatchKind kind = MatchKind::substring;
    std::string pattern;
    std::string response;
};

inline constexpr std::string_view kUnmatchedResponse = "UNMATCHED";

/// Deterministic rule table. The most recently registered matching rule
/// wins; an unmatched prompt yields "UNMATCHED".
class MockBackend final : public ChatBackend {
public:
    std::string id() const override { return "mock"; }

    void add_rule(MockRule rule) {
        std::unique_lock lock(mutex_);
        rules_.push_back(std::move(rule));
    }

    std::string generate(const ChatRequest& request) override {
        const auto prompt = combined_prompt(request);
        std::optional<std::string> digest;
        std::shared_lock lock(mutex_);
        for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) {
            if (it->kind == MatchKind::substring) {
                if (text::contains(prompt, it->pattern)) return it->response;
            } else {
                if (!digest) digest = hash::sha256_hex(prompt);
                if (*digest == it->pattern) return it->response;
            }
        }
        const auto n = ++unmatched_;
        if (n <= 3) {
            std::fprintf(stderr, "warning: mock backend has no rule for prompt %s\n",
                         hash::sha256_hex(prompt).substr(0, 12).c_str());
        }
        return std::string(kUnmatchedResponse);
    }

    std::size_t unmatched_count() const { return unmatched_.load(); }
    std::size_t rule_count() const {
        std::shared_lock lock(mutex_);
        return rules_.size();
    }

private:
    mutable std::shared_mutex mutex_;
    std::vector<MockRule> rules_;
    std::atomic<std::size_t> unmatched_{0};
};

inline std::vector<MockRule> parse_mock_rules(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("rules") || !doc["rules"].is_array()) {
        throw Error(ErrorKind::schema, "mock rules: expected {\"rules\": [...]}");
    }
    std::vector<MockRule> rules;
    for (const auto& r : doc["rules"]) {
        if (!r.is_object() || !r.contains("match") || !r["match"].is_string() || !r.contains("response") ||
            !r["response"].is_string()) {
            throw Error(ErrorKind::schema, "mock rules: each rule needs string \"match\" and \"response\"");
        }
        MockRule rule;
        const auto kind = r.value("kind", std::string("substring"));
        if (kind == "substring") {
            rule.kind = MatchKind::substring;
        } else if (kind == "hash") {
            rule.kind = MatchKind::hash;
        } else {
            throw Error(ErrorKind::schema, "mock rules: unknown kind '" + kind + "'");
        }
        rule.pattern = r["match"].get<std::string>();
        rule.response = r["response"].get<std::string>();
        rules.push_back(std::move(rule));
    }
    return rules;
}

inline std::vector<MockRule> load_mock_rules(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open mock rules " + path.string());
    try {
        return parse_mock_rules(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::parse, path.string() + ": " + e.what());
    }
}

inline nlohmann::json to_json(const std::vector<MockRule>& rules) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : rules) {
        list.push_back({{"match", r.pattern},
                        {"kind", r.kind == MatchKind::hash ? "hash" : "substring"},
                        {"response", r.response}});
    }
    return {{"rules", std::move(list)}};
}

// ---------------------------------------------------------------------------
// HTTP transport

struct Endpoint {
    std::string scheme_host_port;  // e.g. "http://localhost:8000"
    std::string path;              // e.g. "/v1/chat/completions"
};

inline Endpoint parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorKind::config, "URL without scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint ep;
    ep.scheme_host_port = url.substr(0, path_start);
    ep.path = path_start == std::string::npos ? "/" : url.substr(path_start);
    return ep;
}

struct HttpSettings {
    std::string url;
    std::string api_key;
    std::chrono::seconds timeout{60};
};

namespace detail {

/// POSTs a JSON body and returns the parsed JSON reply. Connection failures,
/// 429 and 5xx are transient; other non-2xx statuses and unparsable bodies
/// are protocol errors.
inline nlohmann::json post_json(const HttpSettings& settings, const nlohmann::json& body) {
    const auto ep = parse_url(settings.url);
    httplib::Client client(ep.scheme_host_port);
    client.set_connection_timeout(settings.timeout);
    client.set_read_timeout(settings.timeout);
    client.set_write_timeout(settings.timeout);
    httplib::Headers headers;
    if (!settings.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings.api_key);

    auto result = client.Post(ep.path, headers, body.dump(), "application/json");
    if (!result) {
        throw TransientError("POST " + settings.url + " failed: " + httplib::to_string(result.error()));
    }
    const int status = result->status;
    if (status == 429 || status >= 500) {
        throw TransientError("POST " + settings.url + " returned status " + std::to_string(status));
    }
    if (status < 200 || status >= 300) {
        throw Error(ErrorKind::protocol, "POST " + settings.url + " returned status " + std::to_string(status));
    }
    if (result->body.empty()) throw Error(ErrorKind::protocol, "empty response body from " + settings.url);
    try {
        return nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::protocol, "unparsable response from " + settings.url + ": " + e.what());
    }
}

}  // namespace detail

inline nlohmann::json chat_request_body(const std::string& model, const ChatRequest& request) {
    nlohmann::json body = {
        {"model", model},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", request.system_instruction}},
                                {{"role", "user"}, {"content", request.user_content}}})},
        {"temperature", request.config.temperature},
        {"max_tokens", request.config.max_new_tokens},
    };
    if (request.config.seed) body["seed"] = *request.config.seed;
    return body;
}

inline std::string chat_response_text(const nlohmann::json& reply) {
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorKind::protocol, "response has no choices[0].message.content");
    }
}

class HttpChatBackend final : public ChatBackend {
public:
    HttpChatBackend(HttpSettings settings, std::string model)
        : settings_(std::move(settings)), model_(std::move(model)) {
        parse_url(settings_.url);
    }

    std::string id() const override { return "http:" + model_ + "@" + settings_.url; }

    std::string generate(const ChatRequest& request) override {
        return chat_response_text(detail::post_json(settings_, chat_request_body(model_, request)));
    }

private:
    HttpSettings settings_;
    std::string model_;
};

// ---------------------------------------------------------------------------
// Cache

/// Content-addressed directory of JSON files: <dir>/<key[0:2]>/<key>.json.
/// Writes go through a temp file and an atomic rename, so readers never see a
/// partial entry and need no lock.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw Error(ErrorKind::io, "cannot create cache dir " + dir_.string() + ": " + ec.message());
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::filesystem::path path_for(const std::string& key) const {
        return dir_ / key.substr(0, 2) / (key + ".json");
    }

    std::optional<nlohmann::json> get(const std::string& key) const {
        std::ifstream in(path_for(key), std::ios::binary);
        if (!in) return std::nullopt;
        try {
            return nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error&) {
            return std::nullopt;
        }
    }

    void put(const std::string& key, const nlohmann::json& value) {
        std::lock_guard lock(stripes_[hash::fnv1a64(key) % stripes_.size()]);
        const auto target = path_for(key);
        std::filesystem::create_directories(target.parent_path());
        auto tmp = target;
        tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw Error(ErrorKind::io, "cannot write cache entry " + tmp.string());
            out << value.dump(2) << '\n';
        }
        std::filesystem::rename(tmp, target);
    }

private:
    std::filesystem::path dir_;
    mutable std::array<std::mutex, 64> stripes_;
};

inline std::string chat_cache_key(const std::string& backend_id, const ChatRequest& request) {
    char temperature[32];
    std::snprintf(temperature, sizeof temperature, "%.17g", request.config.temperature);
    return hash::FieldHasher()
        .add("chat")
        .add(backend_id)
        .add(request.system_instruction)
        .add(request.user_content)
        .add(temperature)
        .add(std::to_string(request.config.max_new_tokens))
        .add(request.config.seed ? std::to_string(*request.config.seed) : std::string("none"))
        .hex();
}

// ---------------------------------------------------------------------------
// Retry

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{250};
    double multiplier = 2.0;
};

/// Runs fn, retrying TransientError up to max_retries times with exponential
/// backoff. The final transient failure is rethrown as a transport error.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
    auto delay = policy.base_delay;
    for (int attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const TransientError& e) {
            if (attempt >= policy.max_retries) {
                throw Error(ErrorKind::transport,
                            std::string(e.what()) + " (after " + std::to_string(attempt + 1) + " attempts)");
            }
        }
        std::this_thread::sleep_for(delay);
        delay = std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(delay.count()) * policy.multiplier));
    }
}

// ---------------------------------------------------------------------------
// Gateway

struct GatewayOptions {
    RetryPolicy retry;
    int max_in_flight = 4;
    std::optional<std::filesystem::path> cache_dir;
};

struct CallRecord {
    ChatRequest request;
    std::string text;
    bool cached = false;
};

/// Single entry point for model calls: bounded concurrency, on-disk cache,
/// retries, and a call log for auditing which prompts ran.
class Gateway {
public:
    explicit Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options = {})
        : backend_(std::move(backend)),
          options_(std::move(options)),
          slots_(std::max(1, options_.max_in_flight)) {
        if (!backend_) throw Error(ErrorKind::config, "gateway needs a backend");
        if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
    }

    static Gateway mock(GatewayOptions options = {}) {
        return Gateway(std::make_shared<MockBackend>(), std::move(options));
    }

    ChatResponse complete(const ChatRequest& request) {
        if (text::trim(request.user_content).empty()) {
            throw Error(ErrorKind::validation, "chat request with empty user content");
        }
        request.config.validate();
        const auto backend_id = backend_->id();

        std::optional<std::string> key;
        if (cache_) {
            key = chat_cache_key(backend_id, request);
            if (auto hit = cache_->get(*key); hit && hit->contains("text") && (*hit)["text"].is_string()) {
                ChatResponse response{(*hit)["text"].get<std::string>(), backend_id, true};
                log(request, response);
                return response;
            }
        }

        std::string text;
        {
            slots_.acquire();
            struct Release {
                std::counting_semaphore<kMaxSlots>& s;
                ~Release() { s.release(); }
            } release{slots_};
            text = with_retries(options_.retry, [&] { return backend_->generate(request); });
        }

        if (cache_) {
            cache_->put(*key, {{"backend_id", backend_id},
                               {"system_instruction", request.system_instruction},
                               {"user_content", request.user_content},
                               {"temperature", request.config.temperature},
                               {"max_new_tokens", request.config.max_new_tokens},
                               {"seed", request.config.seed ? nlohmann::json(*request.config.seed) : nlohmann::json()},
                               {"text", text}});
        }
        ChatResponse response{std::move(text), backend_id, false};
        log(request, response);
        return response;
    }

    /// Adds a rule to the mock backend. Remote backends reject this.
    void register_mock(MatchKind kind, std::string pattern, std::string response) {
        auto* mock = dynamic_cast<MockBackend*>(backend_.get());
        if (!mock) throw Error(ErrorKind::config, "register_mock called on non-mock backend " + backend_->id());
        mock->add_rule({kind, std::move(pattern), std::move(response)});
    }

    void register_mock(const std::vector<MockRule>& rules) {
        for (const auto& r : rules) register_mock(r.kind, r.pattern, r.response);
    }

    bool is_mock() const { return dynamic_cast<const MockBackend*>(backend_.get()) != nullptr; }
    std::string backend_id() const { return backend_->id(); }
    const std::optional<ResponseCache>& cache() const { return cache_; }
    const GatewayOptions& options() const { return options_; }

    std::size_t unmatched_count() const {
        auto* mock = dynamic_cast<const MockBackend*>(backend_.get());
        return mock ? mock->unmatched_count() : 0;
    }

    std::vector<CallRecord> call_log() const {
        std::lock_guard lock(log_mutex_);
        return log_;
    }

    void clear_call_log() {
        std::lock_guard lock(log_mutex_);
        log_.clear();
    }

private:
    static constexpr std::ptrdiff_t kMaxSlots = 1024;

    void log(const ChatRequest& request, const ChatResponse& response) {
        std::lock_guard lock(log_mutex_);
        log_.push_back({request, response.text, response.cached});
    }

    std::shared_ptr<ChatBackend> backend_;
    GatewayOptions options_;
    std::counting_semaphore<kMaxSlots> slots_;
    std::optional<ResponseCache> cache_;
    mutable std::mutex log_mutex_;
    std::vector<CallRecord> log_;
};

}  // namespace chiq::llm
