#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chiq/error.hpp"
#include "chiq/ranked_list.hpp"
#include "chiq/text.hpp"

namespace chiq {

struct Passage {
    std::string doc_id;
    std::string text;

    friend bool operator==(const Passage&, const Passage&) = default;
};

struct ConversationTurn {
    std::string question;
    std::string response;

    friend bool operator==(const ConversationTurn&, const ConversationTurn&) = default;
};

/// One evaluation point: the prior history H plus the question u_{n+1}.
struct ConversationSession {
    std::string session_id;
    std::string turn_id;
    std::vector<ConversationTurn> turns;
    std::string current_question;

    /// Position of the current question inside its conversation (1-based).
    std::size_t turn_index() const { return turns.size() + 1; }
    /// Evaluation identifier used in qrels and run files.
    const std::string& query_id() const { return turn_id; }

    friend bool operator==(const ConversationSession&, const ConversationSession&) = default;
};

enum class CollectionFormat { tsv, jsonl };

inline CollectionFormat collection_format_from_path(const std::filesystem::path& path) {
    const auto ext = text::to_lower(path.extension().string());
    if (ext == ".tsv" || ext == ".txt") return CollectionFormat::tsv;
    if (ext == ".jsonl" || ext == ".json") return CollectionFormat::jsonl;
    throw Error(ErrorKind::config, "cannot infer collection format from extension '" + ext + "'");
}

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    return in;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline std::string location(const std::filesystem::path& path, std::size_t line_no) {
    return path.string() + ":" + std::to_string(line_no);
}

}  // namespace detail

/// Streams passages in file order. Blank lines are skipped; every other line
/// must yield a passage with a unique, non-empty id and non-blank text.
inline void for_each_passage(const std::filesystem::path& path, CollectionFormat format,
                             const std::function<void(Passage&&)>& sink) {
    auto in = detail::open_input(path);
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_cr(line);
        if (text::trim(line).empty()) continue;

        Passage passage;
        if (format == CollectionFormat::tsv) {
            const auto tab = line.find('\t');
            if (tab == std::string::npos) {
                throw Error(ErrorKind::parse, detail::location(path, line_no) + ": expected doc_id<TAB>text");
            }
            passage.doc_id = std::string(text::trim(std::string_view(line).substr(0, tab)));
            passage.text = line.substr(tab + 1);
        } else {
            nlohmann::json record;
            try {
                record = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw Error(ErrorKind::parse, detail::location(path, line_no) + ": " + e.what());
            }
            if (!record.is_object() || !record.contains("id") || !record["id"].is_string() ||
                !record.contains("contents") || !record["contents"].is_string()) {
                throw Error(ErrorKind::parse,
                            detail::location(path, line_no) + ": expected {\"id\": string, \"contents\": string}");
            }
            passage.doc_id = record["id"].get<std::string>();
            passage.text = record["contents"].get<std::string>();
        }
        if (passage.doc_id.empty()) {
            throw Error(ErrorKind::parse, detail::location(path, line_no) + ": empty doc_id");
        }
        if (text::trim(passage.text).empty()) {
            throw Error(ErrorKind::parse, detail::location(path, line_no) + ": empty text for " + passage.doc_id);
        }
        if (!seen.insert(passage.doc_id).second) {
            throw Error(ErrorKind::duplicate,
                        detail::location(path, line_no) + ": duplicate doc_id " + passage.doc_id);
        }
        sink(std::move(passage));
    }
}

inline std::vector<Passage> load_collection(const std::filesystem::path& path, CollectionFormat format) {
    std::vector<Passage> out;
    for_each_passage(path, format, [&](Passage&& p) { out.push_back(std::move(p)); });
    return out;
}

inline std::vector<Passage> load_collection(const std::filesystem::path& path) {
    return load_collection(path, collection_format_from_path(path));
}

// ---------------------------------------------------------------------------
// Sessions

struct SessionLoadStats {
    std::size_t records = 0;
    std::size_t reordered_sessions = 0;   // input order differed from turn order
    std::size_t non_contiguous_sessions = 0;
    std::size_t dropped_without_gold = 0;
};

inline ConversationSession session_from_json(const nlohmann::json& record, const std::string& where) {
    auto require_string = [&](const char* field) -> std::string {
        if (!record.contains(field) || !record[field].is_string()) {
            throw Error(ErrorKind::schema, where + ": missing or non-string field \"" + field + "\"");
        }
        return record[field].get<std::string>();
    };
    if (!record.is_object()) throw Error(ErrorKind::schema, where + ": record is not an object");

    ConversationSession session;
    session.session_id = require_string("session_id");
    session.turn_id = require_string("turn_id");
    session.current_question = require_string("question");
    if (text::trim(session.current_question).empty()) {
        throw Error(ErrorKind::schema, where + ": empty \"question\"");
    }
    if (!record.contains("history") || !record["history"].is_array()) {
        throw Error(ErrorKind::schema, where + ": missing array field \"history\"");
    }
    for (const auto& turn : record["history"]) {
        if (!turn.is_object() || !turn.contains("question") || !turn["question"].is_string()) {
            throw Error(ErrorKind::schema, where + ": history entry without \"question\"");
        }
        ConversationTurn t;
        t.question = turn["question"].get<std::string>();
        if (turn.contains("response")) {
            if (!turn["response"].is_string()) {
                throw Error(ErrorKind::schema, where + ": non-string history \"response\"");
            }
            t.response = turn["response"].get<std::string>();
        }
        if (text::trim(t.question).empty()) {
            throw Error(ErrorKind::schema, where + ": empty history question");
        }
        session.turns.push_back(std::move(t));
    }
    return session;
}

inline nlohmann::json session_to_json(const ConversationSession& session) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& t : session.turns) history.push_back({{"question", t.question}, {"response", t.response}});
    return {{"session_id", session.session_id},
            {"turn_id", session.turn_id},
            {"history", std::move(history)},
            {"question", session.current_question}};
}

/// Reads one record per evaluation turn. Records are grouped by session in
/// order of first appearance; inside a session they are ordered by turn index
/// (history length + 1).
inline std::vector<ConversationSession> load_sessions(const std::filesystem::path& path,
                                                      SessionLoadStats* stats = nullptr) {
    auto in = detail::open_input(path);
    std::vector<std::string> session_order;
    std::unordered_map<std::string, std::vector<ConversationSession>> grouped;
    std::set<std::pair<std::string, std::string>> keys;
    SessionLoadStats local;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_cr(line);
        if (text::trim(line).empty()) continue;
        const auto where = detail::location(path, line_no) + " (record " + std::to_string(local.records) + ")";
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::parse, where + ": " + e.what());
        }
        auto session = session_from_json(record, where);
        if (!keys.emplace(session.session_id, session.turn_id).second) {
            throw Error(ErrorKind::duplicate,
                        where + ": duplicate (session_id, turn_id) (" + session.session_id + ", " + session.turn_id + ")");
        }
        auto [it, inserted] = grouped.try_emplace(session.session_id);
        if (inserted) session_order.push_back(session.session_id);
        it->second.push_back(std::move(session));
        ++local.records;
    }

    std::vector<ConversationSession> out;
    out.reserve(local.records);
    for (const auto& id : session_order) {
        auto& turns = grouped[id];
        auto by_index = [](const ConversationSession& a, const ConversationSession& b) {
            return a.turn_index() < b.turn_index();
        };
        if (!std::is_sorted(turns.begin(), turns.end(), by_index)) {
            ++local.reordered_sessions;
            std::stable_sort(turns.begin(), turns.end(), by_index);
        }
        for (std::size_t i = 1; i < turns.size(); ++i) {
            if (turns[i].turn_index() != turns[i - 1].turn_index() + 1) {
                ++local.non_contiguous_sessions;
                break;
            }
        }
        for (auto& s : turns) out.push_back(std::move(s));
    }
    if (local.reordered_sessions || local.non_contiguous_sessions) {
        std::fprintf(stderr, "warning: %s: %zu session(s) re-sorted, %zu with non-contiguous turn indices\n",
                     path.string().c_str(), local.reordered_sessions, local.non_contiguous_sessions);
    }
    if (stats) *stats = local;
    return out;
}

// ---------------------------------------------------------------------------
// Relevance judgments

/// Graded judgments. The binary threshold is carried alongside the grades and
/// only applied by consumers that binarize.
class Qrels {
public:
    using Judgments = std::map<std::string, int>;

    Qrels() = default;
    explicit Qrels(int binary_threshold) { set_threshold(binary_threshold); }

    int threshold() const { return threshold_; }
    void set_threshold(int t) {
        if (t < 1) throw Error(ErrorKind::validation, "binary threshold must be >= 1");
        threshold_ = t;
    }

    void add(const std::string& query_id, const std::string& doc_id, int grade) {
        if (grade < 0) throw Error(ErrorKind::validation, "negative grade for " + query_id + "/" + doc_id);
        judgments_[query_id][doc_id] = grade;
    }

    /// Unjudged pairs have grade 0.
    int grade(const std::string& query_id, const std::string& doc_id) const {
        auto q = judgments_.find(query_id);
        if (q == judgments_.end()) return 0;
        auto d = q->second.find(doc_id);
        return d == q->second.end() ? 0 : d->second;
    }

    bool is_relevant(const std::string& query_id, const std::string& doc_id) const {
        return grade(query_id, doc_id) >= threshold_;
    }

    bool has_query(const std::string& query_id) const { return judgments_.count(query_id) != 0; }

    const Judgments& judgments(const std::string& query_id) const {
        static const Judgments kEmpty;
        auto q = judgments_.find(query_id);
        return q == judgments_.end() ? kEmpty : q->second;
    }

    std::size_t relevant_count(const std::string& query_id) const {
        std::size_t n = 0;
        for (const auto& [doc, g] : judgments(query_id)) n += g >= threshold_ ? 1 : 0;
        return n;
    }

    /// Highest-graded relevant document (ties by doc_id), if any.
    std::optional<std::string> best_relevant(const std::string& query_id) const {
        std::optional<std::string> best;
        int best_grade = -1;
        for (const auto& [doc, g] : judgments(query_id)) {
            if (g >= threshold_ && g > best_grade) {
                best = doc;
                best_grade = g;
            }
        }
        return best;
    }

    Qrels slice(const std::string& query_id) const {
        Qrels out(threshold_);
        auto q = judgments_.find(query_id);
        if (q != judgments_.end()) out.judgments_[query_id] = q->second;
        return out;
    }

    std::vector<std::string> query_ids() const {
        std::vector<std::string> ids;
        for (const auto& [q, _] : judgments_) ids.push_back(q);
        return ids;
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [q, docs] : judgments_) n += docs.size();
        return n;
    }

private:
    std::map<std::string, Judgments> judgments_;
    int threshold_ = 1;
};

inline Qrels load_qrels(const std::filesystem::path& path, int threshold) {
    auto in = detail::open_input(path);
    Qrels qrels(threshold);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_cr(line);
        auto fields = text::split_whitespace(line);
        if (fields.empty()) continue;
        if (fields.size() != 4) {
            throw Error(ErrorKind::parse, detail::location(path, line_no) + ": expected 4 columns");
        }
        int grade = 0;
        const std::string grade_text(fields[3]);
        std::size_t consumed = 0;
        try {
            grade = std::stoi(grade_text, &consumed);
        } catch (const std::exception&) {
            consumed = 0;
        }
        if (consumed != grade_text.size() || grade_text.empty()) {
            throw Error(ErrorKind::parse, detail::location(path, line_no) + ": non-integer grade '" + grade_text + "'");
        }
        if (grade < 0) {
            throw Error(ErrorKind::validation, detail::location(path, line_no) + ": negative grade " + grade_text);
        }
        qrels.add(std::string(fields[0]), std::string(fields[2]), grade);
    }
    return qrels;
}

/// Removes evaluation points with no relevant document; returns how many
/// were dropped.
inline std::size_t drop_sessions_without_gold(std::vector<ConversationSession>& sessions, const Qrels& qrels) {
    const auto before = sessions.size();
    std::erase_if(sessions, [&](const ConversationSession& s) { return qrels.relevant_count(s.query_id()) == 0; });
    return before - sessions.size();
}

// ---------------------------------------------------------------------------
// TREC runs

struct RunEntry {
    std::string query_id;
    std::string doc_id;
    int rank = 1;
    double score = 0.0;
    std::string tag;

    friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

/// Ranks within a query must be 1..k in order and scores non-increasing.
inline void validate_run(const std::vector<RunEntry>& entries) {
    std::unordered_map<std::string, std::pair<int, double>> last;
    for (const auto& e : entries) {
        auto it = last.find(e.query_id);
        const int expected = it == last.end() ? 1 : it->second.first + 1;
        if (e.rank != expected) throw Error(ErrorKind::validation, "rank gap at " + e.query_id);
        if (it != last.end() && e.score > it->second.second) {
            throw Error(ErrorKind::validation, "score inversion at " + e.query_id);
        }
        last[e.query_id] = {e.rank, e.score};
    }
}

inline std::string format_run_line(const RunEntry& e) {
    char score[64];
    std::snprintf(score, sizeof score, "%.6f", e.score);
    return e.query_id + " Q0 " + e.doc_id + " " + std::to_string(e.rank) + " " + score + " " + e.tag;
}

inline void write_run(const std::vector<RunEntry>& entries, std::ostream& out) {
    validate_run(entries);
    for (const auto& e : entries) out << format_run_line(e) << '\n';
}

inline void write_run(const std::vector<RunEntry>& entries, const std::filesystem::path& path) {
    validate_run(entries);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    write_run(entries, out);
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

inline std::vector<RunEntry> read_run(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    std::vector<RunEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_cr(line);
        auto f = text::split_whitespace(line);
        if (f.empty()) continue;
        if (f.size() != 6) throw Error(ErrorKind::parse, detail::location(path, line_no) + ": expected 6 columns");
        RunEntry e;
        e.query_id = std::string(f[0]);
        e.doc_id = std::string(f[2]);
        try {
            std::size_t used = 0;
            e.rank = std::stoi(std::string(f[3]), &used);
            if (used != f[3].size()) throw std::invalid_argument("rank");
            e.score = std::stod(std::string(f[4]), &used);
            if (used != f[4].size()) throw std::invalid_argument("score");
        } catch (const std::exception&) {
            throw Error(ErrorKind::parse, detail::location(path, line_no) + ": bad rank or score");
        }
        e.tag = std::string(f[5]);
        entries.push_back(std::move(e));
    }
    validate_run(entries);
    return entries;
}

inline std::vector<RunEntry> to_run_entries(const RankedList& list, const std::string& tag) {
    std::vector<RunEntry> out;
    out.reserve(list.hits.size());
    for (std::size_t i = 0; i < list.hits.size(); ++i) {
        out.push_back({list.query_id, list.hits[i].doc_id, static_cast<int>(i + 1), list.hits[i].score, tag});
    }
    return out;
}

/// Groups run entries into ranked lists keyed by query id, in rank order.
inline std::map<std::string, RankedList> group_run(const std::vector<RunEntry>& entries) {
    std::map<std::string, RankedList> lists;
    for (const auto& e : entries) {
        auto& list = lists[e.query_id];
        list.query_id = e.query_id;
        list.hits.push_back({e.doc_id, e.score});
    }
    for (auto& [_, list] : lists) list.depth = list.hits.size();
    return lists;
}

}  // namespace chiq
