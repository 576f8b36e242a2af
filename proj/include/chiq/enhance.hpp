#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chiq/corpus.hpp"
#include "chiq/llm_gateway.hpp"
#include "chiq/prompts.hpp"
#include "chiq/text.hpp"

namespace chiq::enhance {

/// Which of the five enhancement steps run. Turning one off reproduces the
/// corresponding ablation.
struct Steps {
    bool qd = true;
    bool re = true;
    bool pr = true;
    bool ts = true;
    bool hs = true;
};

struct EnhanceConfig {
    Steps steps;
    /// On gateway failure, fall back to the unenhanced value instead of throwing.
    bool fallback = true;
    double temperature = 0.7;
    std::optional<std::int64_t> seed;
    int qd_max_tokens = 64;
    int re_max_tokens = 96;
    int pr_max_tokens = 96;
    int ts_max_tokens = 8;
    int hs_max_tokens = 256;
};

struct EnhancedHistory {
    std::string session_id;
    std::string turn_id;
    std::string question;                 // u_{n+1}, unchanged
    std::vector<ConversationTurn> turns;  // H', truncated on topic switch, last response expanded
    std::string disambiguated_question;   // u'_{n+1}
    std::optional<std::string> expanded_last_response;
    std::optional<std::string> pseudo_response;
    std::optional<std::string> summary;
    bool topic_switched = false;
    std::map<std::string, std::string> provenance;
    std::vector<std::string> warnings;

    friend bool operator==(const EnhancedHistory&, const EnhancedHistory&) = default;
};

namespace detail {

inline llm::ChatRequest make_request(prompts::PromptKind kind, std::string user_content, const EnhanceConfig& cfg,
                                     int max_tokens) {
    llm::ChatRequest request;
    request.system_instruction = std::string(prompts::instruction(kind));
    request.user_content = std::move(user_content);
    request.config.temperature = cfg.temperature;
    request.config.max_new_tokens = max_tokens;
    request.config.seed = cfg.seed;
    return request;
}

/// Calls the gateway; with fallback enabled a failure yields nullopt and a
/// warning instead of an exception.
inline std::optional<std::string> call(llm::Gateway& gateway, const llm::ChatRequest& request,
                                       const EnhanceConfig& cfg, std::vector<std::string>* warnings,
                                       std::string_view step) {
    try {
        return gateway.complete(request).text;
    } catch (const Error& e) {
        if (!cfg.fallback) throw;
        if (warnings) warnings->push_back(std::string(step) + ": gateway error: " + e.what());
        return std::nullopt;
    }
}

}  // namespace detail

struct StepOutput {
    std::string text;
    bool fallback = false;
};

inline StepOutput disambiguate_question(llm::Gateway& gateway, const std::vector<ConversationTurn>& history,
                                        const std::string& question, const EnhanceConfig& cfg = {},
                                        std::vector<std::string>* warnings = nullptr) {
    if (text::trim(question).empty()) throw Error(ErrorKind::validation, "disambiguate_question: empty question");
    auto request = detail::make_request(prompts::PromptKind::QD,
                                        prompts::with_new_question(prompts::render_pairs(history), question), cfg,
                                        cfg.qd_max_tokens);
    auto out = detail::call(gateway, request, cfg, warnings, "QD");
    auto line = out ? text::first_line(*out) : std::string();
    if (line.empty()) return {question, true};
    return {std::move(line), false};
}

/// r'_n. Returns nullopt when there is no last response to expand.
inline std::optional<StepOutput> expand_response(llm::Gateway& gateway, const std::vector<ConversationTurn>& history,
                                                 const EnhanceConfig& cfg = {},
                                                 std::vector<std::string>* warnings = nullptr) {
    if (history.empty() || text::trim(history.back().response).empty()) return std::nullopt;
    auto request =
        detail::make_request(prompts::PromptKind::RE, prompts::render_pairs(history), cfg, cfg.re_max_tokens);
    auto out = detail::call(gateway, request, cfg, warnings, "RE");
    auto trimmed = out ? std::string(text::trim(*out)) : std::string();
    if (trimmed.empty()) return StepOutput{history.back().response, true};
    return StepOutput{std::move(trimmed), false};
}

/// r'_{n+1}. Unset when the model produced nothing usable.
inline std::optional<std::string> pseudo_response(llm::Gateway& gateway, const std::vector<ConversationTurn>& history,
                                                  const std::string& question, const EnhanceConfig& cfg = {},
                                                  std::vector<std::string>* warnings = nullptr) {
    if (text::trim(question).empty()) throw Error(ErrorKind::validation, "pseudo_response: empty question");
    auto request = detail::make_request(prompts::PromptKind::PR,
                                        prompts::with_new_question(prompts::render_pairs(history), question), cfg,
                                        cfg.pr_max_tokens);
    auto out = detail::call(gateway, request, cfg, warnings, "PR");
    if (!out) return std::nullopt;
    auto trimmed = std::string(text::trim(*out));
    if (trimmed.empty()) return std::nullopt;
    return trimmed;
}

struct TopicLabel {
    bool switched = false;
    bool ambiguous = false;
};

/// "new_topic" alone means a switch. Both labels, or neither, is ambiguous
/// and resolves to no switch.
inline TopicLabel parse_topic_label(std::string_view output) {
    const auto lower = text::to_lower(output);
    const bool has_new = text::contains(lower, "new_topic");
    const bool has_old = text::contains(lower, "old_topic");
    if (has_new && !has_old) return {true, false};
    if (has_old && !has_new) return {false, false};
    return {false, true};
}

struct TopicDecision {
    bool switched = false;
    bool called = false;
    bool ambiguous = false;
};

inline TopicDecision detect_topic_switch(llm::Gateway& gateway, const std::vector<ConversationTurn>& history,
                                         const std::string& question, const EnhanceConfig& cfg = {},
                                         std::vector<std::string>* warnings = nullptr) {
    if (history.empty()) return {};
    auto request = detail::make_request(prompts::PromptKind::TS,
                                        prompts::with_new_question(prompts::render_pairs(history), question), cfg,
                                        cfg.ts_max_tokens);
    auto out = detail::call(gateway, request, cfg, warnings, "TS");
    if (!out) return {false, true, true};
    auto label = parse_topic_label(*out);
    if (label.ambiguous && warnings) warnings->push_back("TS: ambiguous label, keeping history");
    return {label.switched, true, label.ambiguous};
}

inline std::optional<std::string> summarize_history(llm::Gateway& gateway,
                                                    const std::vector<ConversationTurn>& enhanced_turns,
                                                    const EnhanceConfig& cfg = {},
                                                    std::vector<std::string>* warnings = nullptr) {
    if (enhanced_turns.empty()) throw Error(ErrorKind::validation, "summarize_history: no turns");
    auto request = detail::make_request(prompts::PromptKind::HS, prompts::render_pairs(enhanced_turns), cfg,
                                        cfg.hs_max_tokens);
    auto out = detail::call(gateway, request, cfg, warnings, "HS");
    if (!out) return std::nullopt;
    auto trimmed = std::string(text::trim(*out));
    if (trimmed.empty()) return std::nullopt;
    return trimmed;
}

/// Default policy: topic switch first; on a switch keep only the last turn
/// and run QD, RE, PR on it; otherwise run QD, RE, PR on the full history and
/// summarize the result.
inline EnhancedHistory enhance_history(llm::Gateway& gateway, const ConversationSession& session,
                                       const EnhanceConfig& cfg = {}) {
    if (text::trim(session.current_question).empty()) {
        throw Error(ErrorKind::validation, "session " + session.turn_id + " has an empty question");
    }
    EnhancedHistory out;
    out.session_id = session.session_id;
    out.turn_id = session.turn_id;
    out.question = session.current_question;
    out.turns = session.turns;
    out.disambiguated_question = session.current_question;
    auto* warnings = &out.warnings;
    const auto& steps = cfg.steps;

    if (steps.ts && !out.turns.empty()) {
        auto decision = detect_topic_switch(gateway, out.turns, out.question, cfg, warnings);
        out.topic_switched = decision.switched;
        out.provenance["topic_switched"] = decision.ambiguous ? "TS:ambiguous" : "TS";
        if (decision.switched) {
            out.turns.erase(out.turns.begin(), out.turns.end() - 1);
            out.provenance["turns"] = "TS";
        }
    }

    if (steps.qd) {
        auto qd = disambiguate_question(gateway, out.turns, out.question, cfg, warnings);
        out.disambiguated_question = std::move(qd.text);
        out.provenance["disambiguated_question"] = qd.fallback ? "QD:fallback" : "QD";
    }

    if (steps.re) {
        if (auto re = expand_response(gateway, out.turns, cfg, warnings)) {
            out.expanded_last_response = re->text;
            out.turns.back().response = std::move(re->text);
            out.provenance["expanded_last_response"] = re->fallback ? "RE:fallback" : "RE";
        }
    }

    if (steps.pr) {
        out.pseudo_response = pseudo_response(gateway, out.turns, out.question, cfg, warnings);
        out.provenance["pseudo_response"] = out.pseudo_response ? "PR" : "PR:empty";
    }

    if (steps.hs && !out.topic_switched && !out.turns.empty()) {
        out.summary = summarize_history(gateway, out.turns, cfg, warnings);
        out.provenance["summary"] = out.summary ? "HS" : "HS:fallback";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dump format (json-lines, one record per evaluation turn)

inline nlohmann::json to_json(const EnhancedHistory& e) {
    auto opt = [](const std::optional<std::string>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : e.turns) turns.push_back({{"question", t.question}, {"response", t.response}});
    return {{"session_id", e.session_id},
            {"turn_id", e.turn_id},
            {"question", e.question},
            {"turns", std::move(turns)},
            {"disambiguated_question", e.disambiguated_question},
            {"expanded_last_response", opt(e.expanded_last_response)},
            {"pseudo_response", opt(e.pseudo_response)},
            {"summary", opt(e.summary)},
            {"topic_switched", e.topic_switched},
            {"provenance", e.provenance},
            {"warnings", e.warnings}};
}

inline EnhancedHistory from_json(const nlohmann::json& j) {
    auto opt = [&](const char* field) -> std::optional<std::string> {
        if (!j.contains(field) || j[field].is_null()) return std::nullopt;
        return j[field].get<std::string>();
    };
    try {
        EnhancedHistory e;
        e.session_id = j.at("session_id").get<std::string>();
        e.turn_id = j.at("turn_id").get<std::string>();
        e.question = j.at("question").get<std::string>();
        for (const auto& t : j.at("turns")) {
            e.turns.push_back({t.at("question").get<std::string>(), t.value("response", std::string())});
        }
        e.disambiguated_question = j.at("disambiguated_question").get<std::string>();
        e.expanded_last_response = opt("expanded_last_response");
        e.pseudo_response = opt("pseudo_response");
        e.summary = opt("summary");
        e.topic_switched = j.at("topic_switched").get<bool>();
        if (j.contains("provenance")) e.provenance = j["provenance"].get<std::map<std::string, std::string>>();
        if (j.contains("warnings")) e.warnings = j["warnings"].get<std::vector<std::string>>();
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::schema, std::string("enhancement record: ") + ex.what());
    }
}

inline void write_dump(const std::vector<EnhancedHistory>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<EnhancedHistory> read_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::vector<EnhancedHistory> out;
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

}  // namespace chiq::enhance
