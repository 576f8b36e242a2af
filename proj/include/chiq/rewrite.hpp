#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chiq/corpus.hpp"
#include "chiq/enhance.hpp"
#include "chiq/llm_gateway.hpp"
#include "chiq/prompts.hpp"
#include "chiq/text.hpp"

namespace chiq::rewrite {

inline constexpr std::size_t kQueryTokenLimit = 32;
inline constexpr std::size_t kInputTokenLimit = 512;

/// Which enhanced fields feed the rewrite prompt. An empty set is the
/// original-history baseline.
struct Configuration {
    bool qd = false;
    bool re = false;
    bool pr = false;
    bool ts = false;
    bool hs = false;

    bool uses_enhancement() const { return qd || re || pr || ts || hs; }

    static Configuration original() { return {}; }
    static Configuration chiq_default() { return {true, true, true, true, true}; }

    /// "original", "default", or symbols joined by '+', e.g. "QD+RE+PR+HS".
    static Configuration parse(std::string_view label) {
        if (label == "original" || label.empty()) return original();
        if (label == "default") return chiq_default();
        Configuration c;
        std::size_t start = 0;
        while (start <= label.size()) {
            auto end = label.find('+', start);
            if (end == std::string_view::npos) end = label.size();
            const auto sym = label.substr(start, end - start);
            bool* slot = sym == "QD"   ? &c.qd
                         : sym == "RE" ? &c.re
                         : sym == "PR" ? &c.pr
                         : sym == "TS" ? &c.ts
                         : sym == "HS" ? &c.hs
                                       : nullptr;
            if (!slot) throw Error(ErrorKind::config, "unknown configuration symbol '" + std::string(sym) + "'");
            *slot = true;
            start = end + 1;
        }
        return c;
    }

    std::string label() const {
        std::string out;
        auto add = [&](bool on, const char* sym) {
            if (!on) return;
            if (!out.empty()) out += '+';
            out += sym;
        };
        add(qd, "QD");
        add(re, "RE");
        add(pr, "PR");
        add(ts, "TS");
        add(hs, "HS");
        return out.empty() ? "original" : out;
    }
};

struct RewriteConfig {
    Configuration configuration = Configuration::chiq_default();
    bool fallback = true;
    double temperature = 0.7;
    int max_new_tokens = 64;
    std::optional<std::int64_t> seed;
    std::size_t query_token_limit = kQueryTokenLimit;
    std::size_t input_token_limit = kInputTokenLimit;
};

struct RewriteRequest {
    std::string history_rendering;
    std::string question;
    std::optional<std::string> pseudo_response;
    std::string configuration_label;
};

enum class QuerySource { llm, fallback };

inline std::string_view to_string(QuerySource s) { return s == QuerySource::llm ? "llm" : "fallback"; }

struct RewrittenQuery {
    std::string turn_id;
    std::string text;
    QuerySource source = QuerySource::llm;
    std::string configuration_label;

    friend bool operator==(const RewrittenQuery&, const RewrittenQuery&) = default;
};

/// CQR prompt: instruction plus history, "New question:" line and an optional
/// "Expected answer:" line, front-truncated to the input token budget.
inline llm::ChatRequest build_cqr_prompt(const RewriteRequest& request, const RewriteConfig& cfg = {}) {
    if (text::trim(request.question).empty()) throw Error(ErrorKind::validation, "rewrite request without question");
    auto content = prompts::with_new_question(request.history_rendering, request.question);
    if (request.pseudo_response && !request.pseudo_response->empty()) {
        content += "\nExpected answer: ";
        content += *request.pseudo_response;
    }
    llm::ChatRequest chat;
    chat.system_instruction = std::string(prompts::kQueryRewriting);
    chat.user_content = text::keep_tail_tokens(content, cfg.input_token_limit);
    chat.config.temperature = cfg.temperature;
    chat.config.max_new_tokens = cfg.max_new_tokens;
    chat.config.seed = cfg.seed;
    return chat;
}

namespace detail {

/// End of the balanced {...} starting at `open`, honoring JSON strings.
inline std::optional<std::size_t> matching_brace(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i;
        }
    }
    return std::nullopt;
}

inline std::string strip_label(std::string_view line) {
    line = text::trim(line);
    for (std::string_view label : {"query:", "search query:"}) {
        if (line.size() >= label.size() && text::to_lower(line.substr(0, label.size())) == label) {
            line = text::trim(line.substr(label.size()));
            break;
        }
    }
    if (line.size() >= 2 && line.front() == '"' && line.back() == '"') line = line.substr(1, line.size() - 2);
    return std::string(text::trim(line));
}

}  // namespace detail

/// Pulls the search query out of model output. Returns nullopt when nothing
/// usable is present; callers then substitute a fallback query.
inline std::optional<std::string> extract_query(std::string_view output) {
    for (auto open = output.find('{'); open != std::string_view::npos; open = output.find('{', open + 1)) {
        auto close = detail::matching_brace(output, open);
        if (!close) continue;
        nlohmann::json parsed = nlohmann::json::parse(output.substr(open, *close - open + 1), nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) continue;
        auto it = parsed.find("query");
        if (it == parsed.end() || !it->is_string()) continue;
        auto query = std::string(text::trim(it->get<std::string>()));
        if (query.empty()) return std::nullopt;
        return query;
    }
    std::size_t pos = 0;
    while (pos <= output.size()) {
        auto end = output.find('\n', pos);
        if (end == std::string_view::npos) end = output.size();
        const auto line = text::trim(output.substr(pos, end - pos));
        pos = end + 1;
        if (line.starts_with("```")) continue;
        auto cleaned = detail::strip_label(line);
        if (!cleaned.empty()) return cleaned;
    }
    return std::nullopt;
}

/// Assembles the rewrite input for a configuration. HS swaps the pair
/// rendering for the summary; TS keeps only the last turn after a switch;
/// RE replaces the last response; QD appends u' to the question.
inline RewriteRequest assemble_request(const ConversationSession& session, const enhance::EnhancedHistory* enhanced,
                                       const Configuration& configuration) {
    if (configuration.uses_enhancement() && !enhanced) {
        throw Error(ErrorKind::validation,
                    "configuration " + configuration.label() + " needs enhanced history for " + session.turn_id);
    }
    RewriteRequest request;
    request.configuration_label = configuration.label();
    request.question = session.current_question;
    if (!enhanced) {
        request.history_rendering = prompts::render_pairs(session.turns);
        return request;
    }

    const bool switched = configuration.ts && enhanced->topic_switched;
    std::vector<ConversationTurn> turns = session.turns;
    if (switched && !turns.empty()) turns.erase(turns.begin(), turns.end() - 1);
    if (configuration.re && enhanced->expanded_last_response && !turns.empty()) {
        turns.back().response = *enhanced->expanded_last_response;
    }
    if (configuration.hs && enhanced->summary && !switched) {
        request.history_rendering = *enhanced->summary;
    } else {
        request.history_rendering = prompts::render_pairs(turns);
    }
    if (configuration.qd && enhanced->disambiguated_question != session.current_question &&
        !text::trim(enhanced->disambiguated_question).empty()) {
        request.question = session.current_question + " " + enhanced->disambiguated_question;
    }
    if (configuration.pr) request.pseudo_response = enhanced->pseudo_response;
    return request;
}

inline std::string fallback_query(const ConversationSession& session, const enhance::EnhancedHistory* enhanced,
                                  const Configuration& configuration) {
    if (enhanced && configuration.qd && !text::trim(enhanced->disambiguated_question).empty()) {
        return enhanced->disambiguated_question;
    }
    return session.current_question;
}

/// One gateway call per session. The result is never empty and never longer
/// than the query token budget.
inline RewrittenQuery rewrite_query(llm::Gateway& gateway, const ConversationSession& session,
                                    const enhance::EnhancedHistory* enhanced, const RewriteConfig& cfg = {}) {
    const auto request = assemble_request(session, enhanced, cfg.configuration);
    RewrittenQuery out;
    out.turn_id = session.turn_id;
    out.configuration_label = request.configuration_label;

    std::optional<std::string> query;
    try {
        query = extract_query(gateway.complete(build_cqr_prompt(request, cfg)).text);
    } catch (const Error&) {
        if (!cfg.fallback) throw;
    }
    if (!query) {
        query = fallback_query(session, enhanced, cfg.configuration);
        out.source = QuerySource::fallback;
    }
    out.text = text::keep_head_tokens(*query, cfg.query_token_limit);
    return out;
}

// ---------------------------------------------------------------------------
// Rewrite dump: {"turn_id", "query", "source", "config"} per line

inline nlohmann::json to_json(const RewrittenQuery& q) {
    return {{"turn_id", q.turn_id},
            {"query", q.text},
            {"source", std::string(to_string(q.source))},
            {"config", q.configuration_label}};
}

inline RewrittenQuery from_json(const nlohmann::json& j) {
    try {
        RewrittenQuery q;
        q.turn_id = j.at("turn_id").get<std::string>();
        q.text = j.at("query").get<std::string>();
        const auto source = j.at("source").get<std::string>();
        if (source != "llm" && source != "fallback") throw Error(ErrorKind::schema, "unknown source " + source);
        q.source = source == "llm" ? QuerySource::llm : QuerySource::fallback;
        q.configuration_label = j.at("config").get<std::string>();
        return q;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::schema, std::string("rewrite record: ") + e.what());
    }
}

inline void write_dump(const std::vector<RewrittenQuery>& queries, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    for (const auto& q : queries) out << to_json(q).dump() << '\n';
}

inline std::vector<RewrittenQuery> read_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::vector<RewrittenQuery> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace chiq::rewrite
