#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "chiq/analyzer.hpp"
#include "chiq/corpus.hpp"
#include "chiq/error.hpp"
#include "chiq/ranked_list.hpp"
#include "chiq/text.hpp"

namespace chiq {

inline constexpr std::size_t kPassageTokenLimit = 384;
inline constexpr std::size_t kQueryTokenLimit = 32;

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;

    static Bm25Params topiocqa() { return {0.9, 0.4}; }
    static Bm25Params qrecc() { return {0.82, 0.68}; }

    void validate() const {
        if (!(k1 > 0.0)) throw Error(ErrorKind::validation, "BM25 k1 must be > 0");
        if (!(b >= 0.0 && b <= 1.0)) throw Error(ErrorKind::validation, "BM25 b must lie in [0, 1]");
    }

    friend bool operator==(const Bm25Params&, const Bm25Params&) = default;
};

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;
};

/// Term -> (doc ordinal, tf) postings plus the collection statistics BM25
/// needs. Immutable once built; searches share it freely across threads.
class InvertedIndex {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    static InvertedIndex build(std::span<const Passage> passages, const AnalyzerConfig& analyzer = {},
                               std::size_t passage_token_limit = kPassageTokenLimit) {
        if (passages.empty()) throw Error(ErrorKind::validation, "cannot index an empty collection");
        InvertedIndex index;
        index.analyzer_ = analyzer;
        index.passage_token_limit_ = passage_token_limit;
        Analyzer analysis(analyzer);
        std::uint64_t total_length = 0;
        for (const auto& passage : passages) {
            const auto ordinal = static_cast<std::uint32_t>(index.doc_ids_.size());
            if (!index.ordinals_.emplace(passage.doc_id, ordinal).second) {
                throw Error(ErrorKind::duplicate, "duplicate doc_id " + passage.doc_id);
            }
            index.doc_ids_.push_back(passage.doc_id);
            index.texts_.push_back(passage.text);

            const auto terms = analysis.analyze(text::keep_head_tokens(passage.text, passage_token_limit));
            index.doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
            total_length += terms.size();

            std::unordered_map<std::string_view, std::uint32_t> counts;
            for (const auto& t : terms) ++counts[t];
            for (const auto& [term, tf] : counts) index.postings_[std::string(term)].push_back({ordinal, tf});
        }
        index.avgdl_ = static_cast<double>(total_length) / static_cast<double>(index.doc_ids_.size());
        return index;
    }

    std::size_t size() const { return doc_ids_.size(); }
    double avgdl() const { return avgdl_; }
    std::size_t passage_token_limit() const { return passage_token_limit_; }
    const AnalyzerConfig& analyzer() const { return analyzer_; }
    std::string fingerprint() const { return analyzer_.fingerprint(); }

    const std::string& doc_id(std::uint32_t ordinal) const { return doc_ids_.at(ordinal); }
    const std::string& text(std::uint32_t ordinal) const { return texts_.at(ordinal); }
    std::uint32_t doc_length(std::uint32_t ordinal) const { return doc_lengths_.at(ordinal); }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }

    std::optional<std::uint32_t> ordinal(const std::string& doc_id) const {
        auto it = ordinals_.find(doc_id);
        if (it == ordinals_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<Passage> passage(const std::string& doc_id) const {
        auto o = ordinal(doc_id);
        if (!o) return std::nullopt;
        return Passage{doc_ids_[*o], texts_[*o]};
    }

    std::span<const Posting> postings(const std::string& term) const {
        auto it = postings_.find(term);
        if (it == postings_.end()) return {};
        return it->second;
    }

    std::size_t document_frequency(const std::string& term) const { return postings(term).size(); }

    std::uint32_t term_frequency(const std::string& term, std::uint32_t ordinal) const {
        auto list = postings(term);
        auto it = std::lower_bound(list.begin(), list.end(), ordinal,
                                   [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        return it != list.end() && it->doc == ordinal ? it->tf : 0;
    }

    std::size_t vocabulary_size() const { return postings_.size(); }

    // -- persistence ---------------------------------------------------------

    void save(const std::filesystem::path& dir, const nlohmann::json& extra_manifest = {}) const {
        std::filesystem::create_directories(dir);
        {
            std::ofstream out(dir / "docs.bin", std::ios::binary | std::ios::trunc);
            if (!out) throw Error(ErrorKind::io, "cannot write " + (dir / "docs.bin").string());
            write_magic(out, "CHIQDOC1");
            write_u32(out, static_cast<std::uint32_t>(doc_ids_.size()));
            for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
                write_string(out, doc_ids_[i]);
                write_string(out, texts_[i]);
                write_u32(out, doc_lengths_[i]);
            }
        }
        {
            std::ofstream out(dir / "postings.bin", std::ios::binary | std::ios::trunc);
            if (!out) throw Error(ErrorKind::io, "cannot write " + (dir / "postings.bin").string());
            write_magic(out, "CHIQPST1");
            std::vector<const std::string*> terms;
            terms.reserve(postings_.size());
            for (const auto& [term, _] : postings_) terms.push_back(&term);
            std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
            write_u32(out, static_cast<std::uint32_t>(terms.size()));
            for (const auto* term : terms) {
                const auto& list = postings_.at(*term);
                write_string(out, *term);
                write_u32(out, static_cast<std::uint32_t>(list.size()));
                for (const auto& p : list) {
                    write_u32(out, p.doc);
                    write_u32(out, p.tf);
                }
            }
        }
        nlohmann::json manifest = {
            {"format", "chiq-index"},
            {"version", kFormatVersion},
            {"analyzer", to_json(analyzer_)},
            {"fingerprint", fingerprint()},
            {"N", doc_ids_.size()},
            {"avgdl", avgdl_},
            {"passage_token_limit", passage_token_limit_},
        };
        if (extra_manifest.is_object()) {
            for (const auto& [k, v] : extra_manifest.items()) manifest[k] = v;
        }
        std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
        out << manifest.dump(2) << '\n';
    }

    static nlohmann::json read_manifest(const std::filesystem::path& dir) {
        std::ifstream in(dir / "manifest.json", std::ios::binary);
        if (!in) throw Error(ErrorKind::io, "no index manifest in " + dir.string());
        nlohmann::json manifest;
        try {
            manifest = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::parse, "index manifest: " + std::string(e.what()));
        }
        if (manifest.value("format", std::string()) != "chiq-index" ||
            manifest.value("version", 0u) != kFormatVersion) {
            throw Error(ErrorKind::schema, "unsupported index format in " + dir.string());
        }
        return manifest;
    }

    static InvertedIndex load(const std::filesystem::path& dir) {
        const auto manifest = read_manifest(dir);
        InvertedIndex index;
        index.analyzer_ = analyzer_from_json(manifest.at("analyzer"));
        if (manifest.value("fingerprint", std::string()) != index.analyzer_.fingerprint()) {
            throw Error(ErrorKind::mismatch, "index manifest fingerprint does not match its analyzer");
        }
        index.passage_token_limit_ = manifest.value("passage_token_limit", kPassageTokenLimit);
        {
            std::ifstream in(dir / "docs.bin", std::ios::binary);
            if (!in) throw Error(ErrorKind::io, "cannot open " + (dir / "docs.bin").string());
            read_magic(in, "CHIQDOC1");
            const auto n = read_u32(in);
            std::uint64_t total = 0;
            for (std::uint32_t i = 0; i < n; ++i) {
                index.doc_ids_.push_back(read_string(in));
                index.texts_.push_back(read_string(in));
                index.doc_lengths_.push_back(read_u32(in));
                total += index.doc_lengths_.back();
                index.ordinals_.emplace(index.doc_ids_.back(), i);
            }
            if (n == 0) throw Error(ErrorKind::schema, "index has no documents");
            index.avgdl_ = static_cast<double>(total) / static_cast<double>(n);
        }
        {
            std::ifstream in(dir / "postings.bin", std::ios::binary);
            if (!in) throw Error(ErrorKind::io, "cannot open " + (dir / "postings.bin").string());
            read_magic(in, "CHIQPST1");
            const auto terms = read_u32(in);
            for (std::uint32_t t = 0; t < terms; ++t) {
                auto term = read_string(in);
                const auto count = read_u32(in);
                std::vector<Posting> list(count);
                for (auto& p : list) {
                    p.doc = read_u32(in);
                    p.tf = read_u32(in);
                    if (p.doc >= index.doc_ids_.size()) throw Error(ErrorKind::schema, "posting ordinal out of range");
                }
                index.postings_.emplace(std::move(term), std::move(list));
            }
        }
        return index;
    }

private:
    static void write_magic(std::ostream& out, const char* magic) { out.write(magic, 8); }
    static void read_magic(std::istream& in, const char* magic) {
        char buf[8];
        if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) {
            throw Error(ErrorKind::schema, std::string("bad index file header, expected ") + magic);
        }
    }
    static void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
    static std::uint32_t read_u32(std::istream& in) {
        std::uint32_t v = 0;
        if (!in.read(reinterpret_cast<char*>(&v), 4)) throw Error(ErrorKind::schema, "truncated index file");
        return v;
    }
    static void write_string(std::ostream& out, const std::string& s) {
        write_u32(out, static_cast<std::uint32_t>(s.size()));
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    static std::string read_string(std::istream& in) {
        std::string s(read_u32(in), '\0');
        if (!in.read(s.data(), static_cast<std::streamsize>(s.size()))) {
            throw Error(ErrorKind::schema, "truncated index file");
        }
        return s;
    }

    AnalyzerConfig analyzer_;
    std::size_t passage_token_limit_ = kPassageTokenLimit;
    std::vector<std::string> doc_ids_;
    std::vector<std::string> texts_;
    std::vector<std::uint32_t> doc_lengths_;
    std::unordered_map<std::string, std::uint32_t> ordinals_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    double avgdl_ = 0.0;
};

/// Lucene-style idf, strictly positive for any indexed term.
inline double bm25_idf(std::size_t n_docs, std::size_t df) {
    const auto n = static_cast<double>(n_docs);
    const auto d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

inline double bm25_term_weight(double idf, double tf, double doc_length, double avgdl, const Bm25Params& params) {
    const double norm = params.k1 * (1.0 - params.b + params.b * doc_length / avgdl);
    return idf * (tf * (params.k1 + 1.0)) / (tf + norm);
}

namespace detail {

inline std::vector<std::string> unique_sorted(std::vector<std::string> terms) {
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    return terms;
}

}  // namespace detail

inline double bm25_score(const InvertedIndex& index, const Bm25Params& params,
                         const std::vector<std::string>& query_terms, std::uint32_t ordinal) {
    if (ordinal >= index.size()) throw Error(ErrorKind::validation, "doc ordinal out of range");
    double score = 0.0;
    const double dl = index.doc_length(ordinal);
    for (const auto& term : detail::unique_sorted(query_terms)) {
        const auto tf = index.term_frequency(term, ordinal);
        if (tf == 0) continue;
        score += bm25_term_weight(bm25_idf(index.size(), index.document_frequency(term)), tf, dl, index.avgdl(),
                                  params);
    }
    return score;
}

/// Top-k by BM25 over documents sharing at least one term with the query.
/// The query is cut to its first 32 whitespace tokens before analysis.
inline RankedList search_sparse(const InvertedIndex& index, const Bm25Params& params, std::string_view query,
                                std::size_t k, std::string query_id = {},
                                std::size_t query_token_limit = kQueryTokenLimit) {
    params.validate();
    RankedList result;
    result.query_id = std::move(query_id);
    result.depth = k;
    const auto terms = detail::unique_sorted(
        Analyzer(index.analyzer()).analyze(text::keep_head_tokens(query, query_token_limit)));

    std::unordered_map<std::uint32_t, double> accumulators;
    for (const auto& term : terms) {
        const auto list = index.postings(term);
        if (list.empty()) continue;
        const double idf = bm25_idf(index.size(), list.size());
        for (const auto& p : list) {
            accumulators[p.doc] +=
                bm25_term_weight(idf, p.tf, index.doc_length(p.doc), index.avgdl(), params);
        }
    }
    result.hits.reserve(accumulators.size());
    for (const auto& [doc, score] : accumulators) result.hits.push_back({index.doc_id(doc), score});
    sort_and_cut(result.hits, k);
    return result;
}

/// As above, but refuses a query analyzer that differs from the index's.
inline RankedList search_sparse(const InvertedIndex& index, const Bm25Params& params, std::string_view query,
                                std::size_t k, const AnalyzerConfig& query_analyzer, std::string query_id = {}) {
    if (query_analyzer.fingerprint() != index.fingerprint()) {
        throw Error(ErrorKind::mismatch, "query analyzer " + query_analyzer.fingerprint() +
                                             " differs from index analyzer " + index.fingerprint());
    }
    return search_sparse(index, params, query, k, std::move(query_id));
}

}  // namespace chiq
