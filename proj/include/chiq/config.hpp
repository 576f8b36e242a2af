#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "chiq/analyzer.hpp"
#include "chiq/bm25.hpp"
#include "chiq/dense.hpp"
#include "chiq/error.hpp"
#include "chiq/metrics.hpp"
#include "chiq/rewrite.hpp"

namespace chiq::config {

inline constexpr std::array<std::string_view, 6> kPresets = {"topiocqa", "qrecc", "cast19", "cast20", "cast21",
                                                             "custom"};

struct Truncation {
    std::size_t query = rewrite::kQueryTokenLimit;
    std::size_t input = rewrite::kInputTokenLimit;
    std::size_t passage = kPassageTokenLimit;
};

struct GatewaySettings {
    std::string url;  // empty selects the mock backend
    std::string model;
    std::string api_key;
    std::string cache_dir;
    std::string mock_rules;
    int max_retries = 3;
    int backoff_ms = 250;
    int max_in_flight = 4;
    int timeout_s = 60;
};

struct EmbeddingSettings {
    std::string url;  // empty selects the hashing embedder
    std::size_t dimension = 64;
    Similarity similarity = Similarity::dot;
};

struct PipelineConfig {
    std::string preset = "custom";
    std::string retriever = "sparse";
    Bm25Params bm25;
    int threshold = 1;
    Truncation truncation;
    double temperature = 0.7;
    double fusion_alpha = 1.0;
    std::size_t fusion_depth = 100;
    std::size_t retrieval_depth = 100;
    metrics::EvalConfig eval;
    AnalyzerConfig analyzer;
    GatewaySettings gateway;
    EmbeddingSettings embedding;
    std::optional<std::int64_t> seed;
    int threads = 4;

    void validate() const {
        bm25.validate();
        eval.validate();
        if (retriever != "sparse" && retriever != "dense") {
            throw Error(ErrorKind::config, "retriever must be sparse or dense, got " + retriever);
        }
        if (threshold < 1) throw Error(ErrorKind::config, "threshold must be >= 1");
        if (truncation.query == 0 || truncation.input == 0 || truncation.passage == 0) {
            throw Error(ErrorKind::config, "truncation limits must be positive");
        }
        if (!(temperature >= 0.0)) throw Error(ErrorKind::config, "temperature must be >= 0");
        if (!(fusion_alpha >= 0.0)) throw Error(ErrorKind::config, "fusion alpha must be >= 0");
        if (fusion_depth == 0 || retrieval_depth == 0) throw Error(ErrorKind::config, "depths must be positive");
        if (gateway.max_retries < 0 || gateway.max_in_flight < 1 || gateway.timeout_s < 1 || gateway.backoff_ms < 0) {
            throw Error(ErrorKind::config, "invalid gateway limits");
        }
        if (embedding.dimension == 0) throw Error(ErrorKind::config, "embedding dimension must be positive");
        if (threads < 1) throw Error(ErrorKind::config, "threads must be >= 1");
    }
};

inline bool is_preset(std::string_view name) {
    return std::find(kPresets.begin(), kPresets.end(), name) != kPresets.end();
}

inline PipelineConfig preset(std::string_view name) {
    if (!is_preset(name)) throw Error(ErrorKind::config, "unknown preset '" + std::string(name) + "'");
    PipelineConfig c;
    c.preset = std::string(name);
    if (name == "qrecc") c.bm25 = Bm25Params::qrecc();
    if (name == "topiocqa") c.bm25 = Bm25Params::topiocqa();
    if (name == "cast20" || name == "cast21") c.threshold = 2;
    return c;
}

inline nlohmann::json to_json(const PipelineConfig& c, bool redact_secrets = true) {
    std::string key = c.gateway.api_key;
    if (redact_secrets && !key.empty()) key = "***";
    return {
        {"preset", c.preset},
        {"retriever", c.retriever},
        {"bm25", {{"k1", c.bm25.k1}, {"b", c.bm25.b}}},
        {"threshold", c.threshold},
        {"truncation", {{"query", c.truncation.query}, {"input", c.truncation.input}, {"passage", c.truncation.passage}}},
        {"temperature", c.temperature},
        {"fusion", {{"alpha", c.fusion_alpha}, {"depth", c.fusion_depth}}},
        {"retrieval_depth", c.retrieval_depth},
        {"eval",
         {{"ndcg_cutoff", c.eval.ndcg_cutoff},
          {"recall_cutoff", c.eval.recall_cutoff},
          {"mrr_depth", c.eval.mrr_depth},
          {"gain", c.eval.gain == metrics::Gain::exponential ? "exponential" : "linear"}}},
        {"analyzer", chiq::to_json(c.analyzer)},
        {"gateway",
         {{"url", c.gateway.url},
          {"model", c.gateway.model},
          {"api_key", key},
          {"cache_dir", c.gateway.cache_dir},
          {"mock_rules", c.gateway.mock_rules},
          {"max_retries", c.gateway.max_retries},
          {"backoff_ms", c.gateway.backoff_ms},
          {"max_in_flight", c.gateway.max_in_flight},
          {"timeout_s", c.gateway.timeout_s}}},
        {"embedding",
         {{"url", c.embedding.url},
          {"dimension", c.embedding.dimension},
          {"similarity", std::string(to_string(c.embedding.similarity))}}},
        {"seed", c.seed ? nlohmann::json(*c.seed) : nlohmann::json()},
        {"threads", c.threads},
    };
}

namespace detail {

/// Rejects keys the schema does not know, naming the full path.
inline void check_keys(const nlohmann::json& layer, const nlohmann::json& schema, const std::string& where) {
    if (!layer.is_object()) throw Error(ErrorKind::config, (where.empty() ? "config" : where) + " must be an object");
    for (const auto& [key, value] : layer.items()) {
        const auto path = where.empty() ? key : where + "." + key;
        if (!schema.contains(key)) throw Error(ErrorKind::config, "unknown config key '" + path + "'");
        if (schema[key].is_object()) check_keys(value, schema[key], path);
    }
}

/// Recursive overlay; unlike RFC 7386 a null value is kept rather than
/// deleting the key.
inline void overlay(nlohmann::json& base, const nlohmann::json& layer) {
    for (const auto& [key, value] : layer.items()) {
        if (value.is_object() && base.contains(key) && base[key].is_object()) {
            overlay(base[key], value);
        } else {
            base[key] = value;
        }
    }
}

}  // namespace detail

inline PipelineConfig from_json(const nlohmann::json& j) {
    detail::check_keys(j, to_json(PipelineConfig{}, false), "");
    try {
        PipelineConfig c;
        c.preset = j.value("preset", c.preset);
        c.retriever = j.value("retriever", c.retriever);
        if (j.contains("bm25")) {
            c.bm25.k1 = j["bm25"].value("k1", c.bm25.k1);
            c.bm25.b = j["bm25"].value("b", c.bm25.b);
        }
        c.threshold = j.value("threshold", c.threshold);
        if (j.contains("truncation")) {
            const auto& t = j["truncation"];
            c.truncation.query = t.value("query", c.truncation.query);
            c.truncation.input = t.value("input", c.truncation.input);
            c.truncation.passage = t.value("passage", c.truncation.passage);
        }
        c.temperature = j.value("temperature", c.temperature);
        if (j.contains("fusion")) {
            c.fusion_alpha = j["fusion"].value("alpha", c.fusion_alpha);
            c.fusion_depth = j["fusion"].value("depth", c.fusion_depth);
        }
        c.retrieval_depth = j.value("retrieval_depth", c.retrieval_depth);
        if (j.contains("eval")) {
            const auto& e = j["eval"];
            c.eval.ndcg_cutoff = e.value("ndcg_cutoff", c.eval.ndcg_cutoff);
            c.eval.recall_cutoff = e.value("recall_cutoff", c.eval.recall_cutoff);
            c.eval.mrr_depth = e.value("mrr_depth", c.eval.mrr_depth);
            const auto gain = e.value("gain", std::string("exponential"));
            if (gain != "exponential" && gain != "linear") throw Error(ErrorKind::config, "unknown gain " + gain);
            c.eval.gain = gain == "linear" ? metrics::Gain::linear : metrics::Gain::exponential;
        }
        if (j.contains("analyzer")) c.analyzer = analyzer_from_json(j["analyzer"]);
        if (j.contains("gateway")) {
            const auto& g = j["gateway"];
            c.gateway.url = g.value("url", c.gateway.url);
            c.gateway.model = g.value("model", c.gateway.model);
            c.gateway.api_key = g.value("api_key", c.gateway.api_key);
            c.gateway.cache_dir = g.value("cache_dir", c.gateway.cache_dir);
            c.gateway.mock_rules = g.value("mock_rules", c.gateway.mock_rules);
            c.gateway.max_retries = g.value("max_retries", c.gateway.max_retries);
            c.gateway.backoff_ms = g.value("backoff_ms", c.gateway.backoff_ms);
            c.gateway.max_in_flight = g.value("max_in_flight", c.gateway.max_in_flight);
            c.gateway.timeout_s = g.value("timeout_s", c.gateway.timeout_s);
        }
        if (j.contains("embedding")) {
            const auto& e = j["embedding"];
            c.embedding.url = e.value("url", c.embedding.url);
            c.embedding.dimension = e.value("dimension", c.embedding.dimension);
            c.embedding.similarity = similarity_from_string(e.value("similarity", std::string("dot")));
        }
        if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::int64_t>();
        c.threads = j.value("threads", c.threads);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::config, std::string("config value: ") + e.what());
    }
}

inline nlohmann::json read_file(const std::filesystem::path& path) {
    if (path.extension() == ".toml") {
        throw Error(ErrorKind::config, "TOML config files are not supported; use JSON: " + path.string());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open config " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::parse, path.string() + ": " + e.what());
    }
}

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

inline nlohmann::json env_layer(const EnvLookup& lookup = process_env) {
    nlohmann::json layer = nlohmann::json::object();
    if (auto v = lookup("CHIQ_LLM_URL")) layer["gateway"]["url"] = *v;
    if (auto v = lookup("CHIQ_LLM_MODEL")) layer["gateway"]["model"] = *v;
    if (auto v = lookup("CHIQ_LLM_KEY")) layer["gateway"]["api_key"] = *v;
    if (auto v = lookup("CHIQ_CACHE_DIR")) layer["gateway"]["cache_dir"] = *v;
    return layer;
}

/// Layers in increasing precedence: preset defaults, environment, config
/// file, command-line flags. The preset named by the highest layer that sets
/// one picks the defaults.
inline PipelineConfig resolve(const nlohmann::json& flags, const nlohmann::json& file, const nlohmann::json& env) {
    const auto schema = to_json(PipelineConfig{}, false);
    for (const auto* layer : {&env, &file, &flags}) {
        if (!layer->is_null()) detail::check_keys(*layer, schema, "");
    }
    std::string name = "custom";
    for (const auto* layer : {&env, &file, &flags}) {
        if (layer->is_object() && layer->contains("preset")) name = (*layer)["preset"].get<std::string>();
    }
    auto merged = to_json(preset(name), false);
    for (const auto* layer : {&env, &file, &flags}) {
        if (layer->is_object()) detail::overlay(merged, *layer);
    }
    auto c = from_json(merged);
    c.validate();
    return c;
}

}  // namespace chiq::config
