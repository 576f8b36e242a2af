#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chiq/corpus.hpp"
#include "chiq/error.hpp"
#include "chiq/ranked_list.hpp"

namespace chiq::metrics {

enum class Gain { exponential, linear };

struct EvalConfig {
    std::size_t ndcg_cutoff = 3;
    std::size_t recall_cutoff = 10;
    std::size_t mrr_depth = 0;  // 0 = whole run
    Gain gain = Gain::exponential;

    void validate() const {
        if (ndcg_cutoff < 1 || recall_cutoff < 1) throw Error(ErrorKind::validation, "metric cutoffs must be >= 1");
    }
};

/// Reciprocal rank of the first hit graded >= threshold within depth
/// (0 = no limit).
inline double mrr(const RankedList& hits, const Qrels& qrels, int threshold, std::size_t depth = 0) {
    const auto limit = depth == 0 ? hits.hits.size() : std::min(depth, hits.hits.size());
    for (std::size_t i = 0; i < limit; ++i) {
        if (qrels.grade(hits.query_id, hits.hits[i].doc_id) >= threshold) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

inline double gain_of(int grade, Gain gain) {
    if (grade <= 0) return 0.0;
    return gain == Gain::exponential ? std::exp2(static_cast<double>(grade)) - 1.0 : static_cast<double>(grade);
}

/// DCG@k over raw grades divided by the DCG of the k best judged grades.
inline double ndcg_at_k(const RankedList& hits, const Qrels& qrels, std::size_t k, Gain gain = Gain::exponential) {
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, hits.hits.size()); ++i) {
        dcg += gain_of(qrels.grade(hits.query_id, hits.hits[i].doc_id), gain) / std::log2(static_cast<double>(i) + 2.0);
    }
    std::vector<int> grades;
    for (const auto& [doc, g] : qrels.judgments(hits.query_id)) grades.push_back(g);
    std::sort(grades.begin(), grades.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) {
        idcg += gain_of(grades[i], gain) / std::log2(static_cast<double>(i) + 2.0);
    }
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

/// Fraction of relevant documents found in the top k; nullopt when the query
/// has no relevant documents.
inline std::optional<double> recall_at_k_defined(const RankedList& hits, const Qrels& qrels, int threshold,
                                                 std::size_t k) {
    std::size_t total = 0;
    for (const auto& [doc, g] : qrels.judgments(hits.query_id)) total += g >= threshold ? 1 : 0;
    if (total == 0) return std::nullopt;
    std::size_t found = 0;
    for (std::size_t i = 0; i < std::min(k, hits.hits.size()); ++i) {
        found += qrels.grade(hits.query_id, hits.hits[i].doc_id) >= threshold ? 1 : 0;
    }
    return static_cast<double>(found) / static_cast<double>(total);
}

inline double recall_at_k(const RankedList& hits, const Qrels& qrels, int threshold, std::size_t k) {
    return recall_at_k_defined(hits, qrels, threshold, k).value_or(0.0);
}

struct QueryMetrics {
    double mrr = 0.0;
    double ndcg = 0.0;
    std::optional<double> recall;
};

struct EvalReport {
    std::map<std::string, QueryMetrics> per_query;
    double mean_mrr = 0.0;
    double mean_ndcg = 0.0;
    double mean_recall = 0.0;
    std::size_t judged_query_count = 0;
    std::size_t recall_query_count = 0;
    std::vector<std::string> unjudged_queries;  // in the run, absent from qrels
    std::size_t judged_queries_missing_from_run = 0;
};

/// Scores every judged query present in the run. Queries without judgments
/// are listed and left out of the means.
inline EvalReport evaluate_run(const std::vector<RunEntry>& run, const Qrels& qrels, const EvalConfig& config = {}) {
    config.validate();
    validate_run(run);
    EvalReport report;
    const int threshold = qrels.threshold();
    const auto lists = group_run(run);
    for (const auto& [qid, list] : lists) {
        if (qrels.judgments(qid).empty()) {
            report.unjudged_queries.push_back(qid);
            continue;
        }
        QueryMetrics m;
        m.mrr = mrr(list, qrels, threshold, config.mrr_depth);
        m.ndcg = ndcg_at_k(list, qrels, config.ndcg_cutoff, config.gain);
        m.recall = recall_at_k_defined(list, qrels, threshold, config.recall_cutoff);
        report.mean_mrr += m.mrr;
        report.mean_ndcg += m.ndcg;
        if (m.recall) {
            report.mean_recall += *m.recall;
            ++report.recall_query_count;
        }
        ++report.judged_query_count;
        report.per_query.emplace(qid, m);
    }
    for (const auto& qid : qrels.query_ids()) {
        if (!lists.count(qid) && !qrels.judgments(qid).empty()) ++report.judged_queries_missing_from_run;
    }
    if (report.judged_query_count) {
        report.mean_mrr /= static_cast<double>(report.judged_query_count);
        report.mean_ndcg /= static_cast<double>(report.judged_query_count);
    }
    if (report.recall_query_count) report.mean_recall /= static_cast<double>(report.recall_query_count);
    return report;
}

inline nlohmann::json to_json(const EvalReport& report, const EvalConfig& config, int threshold) {
    const auto ndcg_key = "ndcg@" + std::to_string(config.ndcg_cutoff);
    const auto recall_key = "recall@" + std::to_string(config.recall_cutoff);
    nlohmann::json per_query = nlohmann::json::object();
    for (const auto& [qid, m] : report.per_query) {
        per_query[qid] = {{"mrr", m.mrr},
                          {ndcg_key, m.ndcg},
                          {recall_key, m.recall ? nlohmann::json(*m.recall) : nlohmann::json()}};
    }
    return {
        {"config",
         {{"threshold", threshold},
          {"ndcg_cutoff", config.ndcg_cutoff},
          {"recall_cutoff", config.recall_cutoff},
          {"mrr_depth", config.mrr_depth},
          {"gain", config.gain == Gain::exponential ? "exponential" : "linear"}}},
        {"means", {{"mrr", report.mean_mrr}, {ndcg_key, report.mean_ndcg}, {recall_key, report.mean_recall}}},
        {"judged_query_count", report.judged_query_count},
        {"recall_query_count", report.recall_query_count},
        {"unjudged_queries", report.unjudged_queries},
        {"judged_queries_missing_from_run", report.judged_queries_missing_from_run},
        {"per_query", std::move(per_query)},
    };
}

inline std::string format_table(const EvalReport& report, const EvalConfig& config) {
    std::string out;
    char line[256];
    const auto ndcg_head = "NDCG@" + std::to_string(config.ndcg_cutoff);
    const auto recall_head = "R@" + std::to_string(config.recall_cutoff);
    std::size_t width = 5;
    for (const auto& [qid, _] : report.per_query) width = std::max(width, qid.size());
    std::snprintf(line, sizeof line, "%-*s %8s %8s %8s\n", static_cast<int>(width), "query", "MRR", ndcg_head.c_str(),
                  recall_head.c_str());
    out += line;
    for (const auto& [qid, m] : report.per_query) {
        char recall[16] = "-";
        if (m.recall) std::snprintf(recall, sizeof recall, "%.4f", *m.recall);
        std::snprintf(line, sizeof line, "%-*s %8.4f %8.4f %8s\n", static_cast<int>(width), qid.c_str(), m.mrr,
                      m.ndcg, recall);
        out += line;
    }
    std::snprintf(line, sizeof line, "%-*s %8.4f %8.4f %8.4f\n", static_cast<int>(width), "all", report.mean_mrr,
                  report.mean_ndcg, report.mean_recall);
    out += line;
    return out;
}

}  // namespace chiq::metrics
