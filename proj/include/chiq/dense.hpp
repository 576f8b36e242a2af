#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chiq/analyzer.hpp"
#include "chiq/corpus.hpp"
#include "chiq/error.hpp"
#include "chiq/hash.hpp"
#include "chiq/llm_gateway.hpp"
#include "chiq/ranked_list.hpp"

namespace chiq {

enum class Similarity { dot, cosine };

inline std::string_view to_string(Similarity s) { return s == Similarity::dot ? "dot" : "cosine"; }

inline Similarity similarity_from_string(std::string_view s) {
    if (s == "dot") return Similarity::dot;
    if (s == "cosine") return Similarity::cosine;
    throw Error(ErrorKind::config, "unknown similarity '" + std::string(s) + "'");
}

/// Row-major matrix of document vectors for exhaustive search.
class VectorIndex {
public:
    VectorIndex(std::size_t dimension, Similarity similarity) : dim_(dimension), similarity_(similarity) {
        if (dim_ == 0) throw Error(ErrorKind::validation, "vector dimension must be positive");
    }

    void add(std::string doc_id, std::span<const float> vector) {
        if (vector.size() != dim_) {
            throw Error(ErrorKind::mismatch, "vector for " + doc_id + " has dimension " +
                                                 std::to_string(vector.size()) + ", index expects " +
                                                 std::to_string(dim_));
        }
        if (similarity_ == Similarity::cosine && norm(vector) == 0.0) {
            throw Error(ErrorKind::validation, "zero vector for " + doc_id + " in cosine mode");
        }
        doc_ids_.push_back(std::move(doc_id));
        data_.insert(data_.end(), vector.begin(), vector.end());
    }

    std::size_t dimension() const { return dim_; }
    Similarity similarity() const { return similarity_; }
    std::size_t size() const { return doc_ids_.size(); }
    const std::string& doc_id(std::size_t i) const { return doc_ids_.at(i); }
    std::span<const float> vector(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    static double dot(std::span<const float> a, std::span<const float> b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        return s;
    }
    static double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
        out.write("CHIQVEC1", 8);
        const std::uint32_t header[3] = {static_cast<std::uint32_t>(dim_), static_cast<std::uint32_t>(size()),
                                         similarity_ == Similarity::dot ? 0u : 1u};
        out.write(reinterpret_cast<const char*>(header), sizeof header);
        for (const auto& id : doc_ids_) {
            const auto len = static_cast<std::uint32_t>(id.size());
            out.write(reinterpret_cast<const char*>(&len), 4);
            out.write(id.data(), len);
        }
        out.write(reinterpret_cast<const char*>(data_.data()), static_cast<std::streamsize>(data_.size() * sizeof(float)));
    }

    static VectorIndex load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
        char magic[8];
        std::uint32_t header[3];
        if (!in.read(magic, 8) || std::memcmp(magic, "CHIQVEC1", 8) != 0 ||
            !in.read(reinterpret_cast<char*>(header), sizeof header)) {
            throw Error(ErrorKind::schema, "bad vector file " + path.string());
        }
        VectorIndex index(header[0], header[2] == 0 ? Similarity::dot : Similarity::cosine);
        for (std::uint32_t i = 0; i < header[1]; ++i) {
            std::uint32_t len = 0;
            in.read(reinterpret_cast<char*>(&len), 4);
            std::string id(len, '\0');
            in.read(id.data(), len);
            index.doc_ids_.push_back(std::move(id));
        }
        index.data_.resize(static_cast<std::size_t>(header[0]) * header[1]);
        if (!in.read(reinterpret_cast<char*>(index.data_.data()),
                     static_cast<std::streamsize>(index.data_.size() * sizeof(float)))) {
            throw Error(ErrorKind::schema, "truncated vector file " + path.string());
        }
        return index;
    }

private:
    std::size_t dim_;
    Similarity similarity_;
    std::vector<std::string> doc_ids_;
    std::vector<float> data_;
};

/// Exhaustive similarity scan; top-k with doc_id tie-break.
inline RankedList search_dense(const VectorIndex& index, std::span<const float> query, std::size_t k,
                               std::string query_id = {}) {
    if (query.size() != index.dimension()) {
        throw Error(ErrorKind::mismatch, "query dimension " + std::to_string(query.size()) + " vs index " +
                                             std::to_string(index.dimension()));
    }
    double query_norm = 1.0;
    if (index.similarity() == Similarity::cosine) {
        query_norm = VectorIndex::norm(query);
        if (query_norm == 0.0) throw Error(ErrorKind::validation, "zero query vector in cosine mode");
    }
    RankedList result;
    result.query_id = std::move(query_id);
    result.depth = k;
    result.hits.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto doc = index.vector(i);
        double score = VectorIndex::dot(query, doc);
        if (index.similarity() == Similarity::cosine) score /= query_norm * VectorIndex::norm(doc);
        result.hits.push_back({index.doc_id(i), score});
    }
    sort_and_cut(result.hits, k);
    return result;
}

// ---------------------------------------------------------------------------
// Embedding endpoints

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string id() const = 0;
    virtual std::vector<float> embed(const std::string& text) = 0;
};

/// Deterministic stand-in encoder: signed feature hashing of analyzed terms.
/// Texts sharing terms get positive dot products, so rankings are meaningful.
class HashEmbedder final : public EmbeddingBackend {
public:
    explicit HashEmbedder(std::size_t dimension = 64, AnalyzerConfig analyzer = {})
        : dim_(dimension), analyzer_(std::move(analyzer)) {
        if (dim_ == 0) throw Error(ErrorKind::validation, "embedding dimension must be positive");
    }

    std::string id() const override { return "hash-" + std::to_string(dim_); }

    std::vector<float> embed(const std::string& text) override {
        std::vector<float> v(dim_, 0.0f);
        for (const auto& term : analyzer_.analyze(text)) {
            const auto h = hash::fnv1a64(term);
            v[h % dim_] += (h >> 63) ? -1.0f : 1.0f;
        }
        return v;
    }

private:
    std::size_t dim_;
    Analyzer analyzer_;
};

/// {"input": text} -> {"embedding": [numbers]}
class HttpEmbedder final : public EmbeddingBackend {
public:
    explicit HttpEmbedder(llm::HttpSettings settings) : settings_(std::move(settings)) { llm::parse_url(settings_.url); }

    std::string id() const override { return "http-embed@" + settings_.url; }

    std::vector<float> embed(const std::string& text) override {
        const auto reply = llm::detail::post_json(settings_, {{"input", text}});
        if (!reply.contains("embedding") || !reply["embedding"].is_array()) {
            throw Error(ErrorKind::protocol, "embedding response lacks an \"embedding\" array");
        }
        std::vector<float> v;
        for (const auto& x : reply["embedding"]) {
            if (!x.is_number()) throw Error(ErrorKind::protocol, "non-numeric embedding component");
            v.push_back(x.get<float>());
        }
        return v;
    }

private:
    llm::HttpSettings settings_;
};

/// Adds retries, caching and a dimension check in front of a backend.
class EmbeddingClient {
public:
    EmbeddingClient(std::shared_ptr<EmbeddingBackend> backend, std::optional<std::filesystem::path> cache_dir = {},
                    llm::RetryPolicy retry = {})
        : backend_(std::move(backend)), retry_(retry) {
        if (!backend_) throw Error(ErrorKind::config, "embedding client needs a backend");
        if (cache_dir) cache_.emplace(*cache_dir);
    }

    std::string backend_id() const { return backend_->id(); }

    /// When set, every returned vector must have this dimension.
    void expect_dimension(std::size_t dim) { expected_dim_ = dim; }

    struct Result {
        std::vector<float> vector;
        bool cached = false;
    };

    Result embed_with_status(const std::string& text) {
        std::optional<std::string> key;
        if (cache_) {
            key = hash::FieldHasher().add("embed").add(backend_->id()).add(text).hex();
            if (auto hit = cache_->get(*key); hit && hit->contains("embedding")) {
                auto v = (*hit)["embedding"].get<std::vector<float>>();
                check(v);
                return {std::move(v), true};
            }
        }
        auto v = llm::with_retries(retry_, [&] { return backend_->embed(text); });
        check(v);
        if (cache_) cache_->put(*key, {{"backend_id", backend_->id()}, {"input", text}, {"embedding", v}});
        return {std::move(v), false};
    }

    std::vector<float> embed(const std::string& text) { return embed_with_status(text).vector; }

private:
    void check(const std::vector<float>& v) const {
        if (expected_dim_ && v.size() != *expected_dim_) {
            throw Error(ErrorKind::mismatch, "embedding dimension " + std::to_string(v.size()) + ", expected " +
                                                 std::to_string(*expected_dim_));
        }
    }

    std::shared_ptr<EmbeddingBackend> backend_;
    llm::RetryPolicy retry_;
    std::optional<llm::ResponseCache> cache_;
    std::optional<std::size_t> expected_dim_;
};

inline VectorIndex build_vector_index(std::span<const Passage> passages, EmbeddingClient& embedder,
                                      std::size_t dimension, Similarity similarity,
                                      std::size_t passage_token_limit = 384) {
    VectorIndex index(dimension, similarity);
    embedder.expect_dimension(dimension);
    for (const auto& p : passages) index.add(p.doc_id, embedder.embed(text::keep_head_tokens(p.text, passage_token_limit)));
    return index;
}

}  // namespace chiq
