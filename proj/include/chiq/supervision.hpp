#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "chiq/bm25.hpp"
#include "chiq/corpus.hpp"
#include "chiq/enhance.hpp"
#include "chiq/llm_gateway.hpp"
#include "chiq/metrics.hpp"
#include "chiq/parallel.hpp"
#include "chiq/prompts.hpp"
#include "chiq/retriever.hpp"
#include "chiq/rewrite.hpp"

namespace chiq::supervision {

/// Structural ablations of the candidate generation step.
enum class Ablation {
    none,
    no_hprime,  // original history in the generation prompt
    no_multi,   // a single candidate
    no_gold,    // gold passage left out of the prompt
};

inline Ablation ablation_from_string(std::string_view s) {
    if (s == "none") return Ablation::none;
    if (s == "no-hprime") return Ablation::no_hprime;
    if (s == "no-multi") return Ablation::no_multi;
    if (s == "no-gold") return Ablation::no_gold;
    throw Error(ErrorKind::config, "unknown ablation '" + std::string(s) + "'");
}

inline std::string_view to_string(Ablation a) {
    switch (a) {
        case Ablation::none: return "none";
        case Ablation::no_hprime: return "no-hprime";
        case Ablation::no_multi: return "no-multi";
        case Ablation::no_gold: return "no-gold";
    }
    return "?";
}

enum class HistoryInput { original, enhanced };

struct SupervisionConfig {
    std::size_t m = 5;
    Ablation ablation = Ablation::none;
    HistoryInput input_history = HistoryInput::original;
    std::size_t search_depth = 10;
    std::size_t selection_cutoff = 3;  // NDCG@3 selects the target
    double temperature = 0.7;
    int max_new_tokens = 256;
    std::optional<std::int64_t> seed;
    int threads = 4;
    std::size_t query_token_limit = rewrite::kQueryTokenLimit;
    std::size_t input_token_limit = rewrite::kInputTokenLimit;
    std::size_t passage_token_limit = kPassageTokenLimit;

    std::size_t candidate_count() const { return ablation == Ablation::no_multi ? 1 : m; }
};

/// H' as used for generation and enhanced-input records: RE replacement, TS
/// truncation and HS summary applied, question left as u_{n+1}.
inline std::string render_enhanced_history(const ConversationSession& session, const enhance::EnhancedHistory& e) {
    rewrite::Configuration c;
    c.re = c.ts = c.hs = true;
    return rewrite::assemble_request(session, &e, c).history_rendering;
}

inline llm::ChatRequest build_generation_prompt(const ConversationSession& session,
                                                const enhance::EnhancedHistory* enhanced, const Passage* gold,
                                                const SupervisionConfig& cfg) {
    const bool use_enhanced = enhanced && cfg.ablation != Ablation::no_hprime;
    const auto history = use_enhanced ? render_enhanced_history(session, *enhanced)
                                      : prompts::render_pairs(session.turns);
    std::string content;
    if (gold && cfg.ablation != Ablation::no_gold) {
        content += "Relevant passage: ";
        content += text::keep_head_tokens(gold->text, cfg.passage_token_limit);
        content += "\n\n";
    }
    content += text::keep_tail_tokens(prompts::with_new_question(history, session.current_question),
                                      cfg.input_token_limit);
    llm::ChatRequest request;
    request.system_instruction = std::string(prompts::kPseudoSupervision);
    request.user_content = std::move(content);
    request.config.temperature = cfg.temperature;
    request.config.max_new_tokens = cfg.max_new_tokens;
    request.config.seed = cfg.seed;
    return request;
}

/// Numbered or bulleted list items ("1.", "2)", "- "), trimmed, deduplicated,
/// capped at m.
inline std::vector<std::string> parse_candidate_list(std::string_view output, std::size_t m) {
    static const std::regex item(R"(^\s*(?:\d+\s*[.)]|[-*])\s+(.*)$)");
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    std::size_t pos = 0;
    while (pos <= output.size() && out.size() < m) {
        auto end = output.find('\n', pos);
        if (end == std::string_view::npos) end = output.size();
        const std::string line(output.substr(pos, end - pos));
        pos = end + 1;
        std::smatch match;
        if (!std::regex_match(line, match, item)) continue;
        const std::string item_text = match[1].str();
        std::string_view candidate = text::trim(item_text);
        if (candidate.size() >= 2 && candidate.front() == '"' && candidate.back() == '"') {
            candidate = text::trim(candidate.substr(1, candidate.size() - 2));
        }
        if (candidate.empty()) continue;
        std::string value(candidate);
        if (seen.insert(value).second) out.push_back(std::move(value));
    }
    return out;
}

struct CandidateSet {
    std::vector<std::string> candidates;
    bool fallback = false;
    std::string prompt_user_content;
};

/// One gateway call; falls back to single-query extraction when the output
/// is not a list.
inline CandidateSet generate_candidates(llm::Gateway& gateway, const ConversationSession& session,
                                        const enhance::EnhancedHistory* enhanced, const Passage* gold,
                                        const SupervisionConfig& cfg = {}) {
    if (cfg.candidate_count() == 0) throw Error(ErrorKind::validation, "candidate count must be positive");
    const auto request = build_generation_prompt(session, enhanced, gold, cfg);
    const auto output = gateway.complete(request).text;
    CandidateSet set;
    set.prompt_user_content = request.user_content;
    set.candidates = parse_candidate_list(output, cfg.candidate_count());
    if (set.candidates.empty()) {
        set.fallback = true;
        auto single = rewrite::extract_query(output);
        set.candidates.push_back(single ? *single : session.current_question);
    }
    for (auto& c : set.candidates) c = text::keep_head_tokens(c, cfg.query_token_limit);
    return set;
}

/// NDCG at the selection cutoff of the candidate's retrieval run.
inline double score_candidate(const std::string& query, const Retriever& retriever, const Qrels& turn_qrels,
                              const std::string& query_id, std::size_t depth = 10, std::size_t cutoff = 3) {
    const auto list = retriever.search(query_id, query, std::max(depth, cutoff));
    return metrics::ndcg_at_k(list, turn_qrels, cutoff);
}

struct PseudoQuerySet {
    std::string turn_id;
    std::vector<std::string> candidates;
    std::vector<double> scores;
    std::size_t selected_index = 0;
    std::string selected_query;
    bool zero_signal = false;
};

/// Argmax with the first index winning ties.
inline PseudoQuerySet select_best(std::vector<std::string> candidates, std::vector<double> scores,
                                  std::string turn_id = {}) {
    if (candidates.empty()) throw Error(ErrorKind::validation, "select_best: no candidates");
    if (candidates.size() != scores.size()) throw Error(ErrorKind::validation, "select_best: size mismatch");
    PseudoQuerySet set;
    set.turn_id = std::move(turn_id);
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[set.selected_index]) set.selected_index = i;
    }
    set.zero_signal = std::all_of(scores.begin(), scores.end(), [](double s) { return s == 0.0; });
    set.selected_query = candidates[set.selected_index];
    set.candidates = std::move(candidates);
    set.scores = std::move(scores);
    return set;
}

struct FtRecord {
    std::string turn_id;
    std::string input_text;
    std::string target_text;
    double selection_score = 0.0;
    PseudoQuerySet audit;
};

inline std::string render_ft_input(const ConversationSession& session, const enhance::EnhancedHistory* enhanced,
                                   HistoryInput input, std::size_t input_token_limit = rewrite::kInputTokenLimit) {
    const auto history = input == HistoryInput::enhanced && enhanced ? render_enhanced_history(session, *enhanced)
                                                                     : prompts::render_pairs(session.turns);
    return text::keep_tail_tokens(prompts::with_new_question(history, session.current_question), input_token_limit);
}

inline nlohmann::json to_json(const FtRecord& r) {
    return {{"turn_id", r.turn_id},
            {"input_text", r.input_text},
            {"target_text", r.target_text},
            {"selection_score", r.selection_score},
            {"candidates", r.audit.candidates},
            {"scores", r.audit.scores},
            {"selected_index", r.audit.selected_index},
            {"zero_signal", r.audit.zero_signal}};
}

struct BuildStats {
    std::size_t turns = 0;
    std::size_t records = 0;
    std::size_t skipped_no_gold = 0;
    std::size_t zero_signal = 0;
    std::size_t enhanced_on_the_fly = 0;
    std::size_t candidate_fallbacks = 0;
};

struct FtDataset {
    std::vector<FtRecord> records;
    BuildStats stats;
};

/// Offline pseudo-labelling: for every turn with a gold passage, generate
/// candidates, score each by retrieval and keep the best as the target.
inline FtDataset build_ft_dataset(llm::Gateway& gateway, const std::vector<ConversationSession>& sessions,
                                  const std::map<std::string, enhance::EnhancedHistory>& enhanced,
                                  const InvertedIndex& collection, const Retriever& retriever, const Qrels& qrels,
                                  const SupervisionConfig& cfg = {}, const enhance::EnhanceConfig& enhance_cfg = {}) {
    struct Outcome {
        std::optional<FtRecord> record;
        bool no_gold = false;
        bool enhanced_now = false;
        bool fallback = false;
    };
    const bool needs_enhanced =
        cfg.ablation != Ablation::no_hprime || cfg.input_history == HistoryInput::enhanced;

    auto outcomes = parallel_map(sessions.size(), cfg.threads, [&](std::size_t i) {
        const auto& session = sessions[i];
        Outcome outcome;
        const auto gold_id = qrels.best_relevant(session.query_id());
        const auto gold = gold_id ? collection.passage(*gold_id) : std::nullopt;
        if (!gold) {
            outcome.no_gold = true;
            return outcome;
        }
        std::optional<enhance::EnhancedHistory> fresh;
        const enhance::EnhancedHistory* history = nullptr;
        if (auto it = enhanced.find(session.turn_id); it != enhanced.end()) {
            history = &it->second;
        } else if (needs_enhanced) {
            fresh = enhance::enhance_history(gateway, session, enhance_cfg);
            history = &*fresh;
            outcome.enhanced_now = true;
        }
        auto set = generate_candidates(gateway, session, history, &*gold, cfg);
        outcome.fallback = set.fallback;
        const auto turn_qrels = qrels.slice(session.query_id());
        std::vector<double> scores;
        for (const auto& c : set.candidates) {
            scores.push_back(
                score_candidate(c, retriever, turn_qrels, session.query_id(), cfg.search_depth, cfg.selection_cutoff));
        }
        auto best = select_best(set.candidates, std::move(scores), session.turn_id);
        FtRecord record;
        record.turn_id = session.turn_id;
        record.input_text = render_ft_input(session, history, cfg.input_history, cfg.input_token_limit);
        record.target_text = best.selected_query;
        record.selection_score = best.scores[best.selected_index];
        record.audit = std::move(best);
        outcome.record = std::move(record);
        return outcome;
    });

    FtDataset dataset;
    dataset.stats.turns = sessions.size();
    for (auto& o : outcomes) {
        dataset.stats.skipped_no_gold += o.no_gold ? 1 : 0;
        dataset.stats.enhanced_on_the_fly += o.enhanced_now ? 1 : 0;
        dataset.stats.candidate_fallbacks += o.fallback ? 1 : 0;
        if (o.record) {
            dataset.stats.zero_signal += o.record->audit.zero_signal ? 1 : 0;
            dataset.records.push_back(std::move(*o.record));
        }
    }
    dataset.stats.records = dataset.records.size();
    return dataset;
}

inline void write_dataset(const std::vector<FtRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

}  // namespace chiq::supervision
