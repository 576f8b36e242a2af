#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "chiq/error.hpp"
#include "chiq/ranked_list.hpp"

namespace chiq::fusion {

struct FusionConfig {
    double alpha = 1.0;  // weight of the second list
    std::size_t depth = 100;

    void validate() const {
        if (!(alpha >= 0.0)) throw Error(ErrorKind::validation, "fusion alpha must be >= 0");
        if (depth == 0) throw Error(ErrorKind::validation, "fusion depth must be positive");
    }
};

/// Min-max scaling to [0, 1]. A list with a single distinct score maps every
/// hit to 1.0.
inline RankedList normalize_scores(const RankedList& list) {
    RankedList out = list;
    if (out.hits.empty()) return out;
    auto [lo, hi] = std::minmax_element(out.hits.begin(), out.hits.end(),
                                        [](const Hit& a, const Hit& b) { return a.score < b.score; });
    const double min = lo->score;
    const double range = hi->score - min;
    for (auto& h : out.hits) h.score = range > 0.0 ? (h.score - min) / range : 1.0;
    return out;
}

/// Weighted CombSUM over normalized scores: norm_a(d) + alpha * norm_b(d),
/// a document missing from a list contributing 0 from it.
inline RankedList fuse(const RankedList& list_a, const RankedList& list_b, const FusionConfig& config = {}) {
    config.validate();
    if (!list_a.query_id.empty() && !list_b.query_id.empty() && list_a.query_id != list_b.query_id) {
        throw Error(ErrorKind::mismatch, "cannot fuse lists for " + list_a.query_id + " and " + list_b.query_id);
    }
    std::map<std::string, double> fused;
    for (const auto& h : normalize_scores(list_a).hits) fused[h.doc_id] += h.score;
    for (const auto& h : normalize_scores(list_b).hits) fused[h.doc_id] += config.alpha * h.score;

    RankedList out;
    out.query_id = list_a.query_id.empty() ? list_b.query_id : list_a.query_id;
    out.depth = config.depth;
    out.hits.reserve(fused.size());
    for (auto& [doc, score] : fused) out.hits.push_back({doc, score});
    sort_and_cut(out.hits, config.depth);
    return out;
}

}  // namespace chiq::fusion
