#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <vector>

namespace chiq {

struct Hit {
    std::string doc_id;
    double score = 0.0;

    friend bool operator==(const Hit&, const Hit&) = default;
};

/// Score descending, then doc_id ascending. The one ordering used for every
/// ranked output in the library.
inline bool hit_order(const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
}

/// Ordered results P_{n+1} for one query.
struct RankedList {
    std::string query_id;
    std::vector<Hit> hits;
    std::size_t depth = 0;

    std::size_t size() const { return hits.size(); }
    bool empty() const { return hits.empty(); }
};

/// Sorts by hit_order and keeps the first k hits.
inline void sort_and_cut(std::vector<Hit>& hits, std::size_t k) {
    if (k < hits.size()) {
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), hit_order);
        hits.resize(k);
    } else {
        std::sort(hits.begin(), hits.end(), hit_order);
    }
}

/// True when scores are non-increasing, ties are ordered by doc_id and no
/// doc_id repeats.
inline bool is_well_formed(const RankedList& list) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < list.hits.size(); ++i) {
        if (!seen.insert(list.hits[i].doc_id).second) return false;
        if (i > 0 && hit_order(list.hits[i], list.hits[i - 1])) return false;
    }
    return true;
}

}  // namespace chiq
