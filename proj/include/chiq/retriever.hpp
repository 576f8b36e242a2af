#pragma once

#include <memory>
#include <string>

#include "chiq/bm25.hpp"
#include "chiq/dense.hpp"
#include "chiq/ranked_list.hpp"
#include "chiq/text.hpp"

namespace chiq {

/// Query text in, ranked list out. Implementations are safe for concurrent
/// search once constructed.
class Retriever {
public:
    virtual ~Retriever() = default;
    virtual RankedList search(const std::string& query_id, const std::string& query, std::size_t k) const = 0;
};

class SparseRetriever final : public Retriever {
public:
    SparseRetriever(const InvertedIndex& index, Bm25Params params, std::size_t query_token_limit = kQueryTokenLimit)
        : index_(index), params_(params), query_token_limit_(query_token_limit) {
        params_.validate();
    }

    RankedList search(const std::string& query_id, const std::string& query, std::size_t k) const override {
        return search_sparse(index_, params_, query, k, query_id, query_token_limit_);
    }

private:
    const InvertedIndex& index_;
    Bm25Params params_;
    std::size_t query_token_limit_;
};

class DenseRetriever final : public Retriever {
public:
    DenseRetriever(const VectorIndex& index, EmbeddingClient& embedder,
                   std::size_t query_token_limit = kQueryTokenLimit)
        : index_(index), embedder_(embedder), query_token_limit_(query_token_limit) {
        embedder_.expect_dimension(index_.dimension());
    }

    RankedList search(const std::string& query_id, const std::string& query, std::size_t k) const override {
        const auto vector = embedder_.embed(text::keep_head_tokens(query, query_token_limit_));
        return search_dense(index_, vector, k, query_id);
    }

private:
    const VectorIndex& index_;
    EmbeddingClient& embedder_;
    std::size_t query_token_limit_;
};

}  // namespace chiq
