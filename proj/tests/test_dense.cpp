#include <catch_amalgamated.hpp>

#include <random>

#include "chiq/dense.hpp"
#include "chiq/retriever.hpp"
#include "support/fixtures.hpp"

using namespace chiq;
using Catch::Matchers::WithinAbs;

TEST_CASE("hash embedder", "[dense]") {
    HashEmbedder embedder(16);
    const auto a = embedder.embed("Tesla designed the induction motor");
    CHECK(a.size() == 16);
    CHECK(a == embedder.embed("Tesla designed the induction motor"));
    CHECK(a != embedder.embed("sourdough starter"));
    CHECK_THROWS_AS(HashEmbedder(0), Error);
}

TEST_CASE("dimension checks", "[dense]") {
    EmbeddingClient client(std::make_shared<HashEmbedder>(8));
    client.expect_dimension(16);
    CHECK_THROWS_AS(client.embed("x"), Error);

    VectorIndex index(16, Similarity::dot);
    const std::vector<float> eight(8, 1.0f);
    CHECK_THROWS_AS(index.add("d", eight), Error);
    CHECK_THROWS_AS(search_dense(index, eight, 1), Error);
}

TEST_CASE("embedding cache", "[dense][cache]") {
    chiq::testing::TempDir dir;
    EmbeddingClient first(std::make_shared<HashEmbedder>(8), dir.path());
    const auto miss = first.embed_with_status("cached text");
    CHECK_FALSE(miss.cached);
    EmbeddingClient second(std::make_shared<HashEmbedder>(8), dir.path());
    const auto hit = second.embed_with_status("cached text");
    CHECK(hit.cached);
    CHECK(hit.vector == miss.vector);
}

TEST_CASE("similarity", "[dense]") {
    VectorIndex cosine(2, Similarity::cosine);
    const std::vector<float> x{3.0f, 0.0f}, y{0.0f, 2.0f};
    cosine.add("x", x);
    cosine.add("y", y);
    const auto hits = search_dense(cosine, x, 2).hits;
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].doc_id == "x");
    CHECK_THAT(hits[0].score, WithinAbs(1.0, 1e-12));
    CHECK_THAT(hits[1].score, WithinAbs(0.0, 1e-12));

    const std::vector<float> zero{0.0f, 0.0f};
    CHECK_THROWS_AS(cosine.add("z", zero), Error);
    CHECK_THROWS_AS(search_dense(cosine, zero, 1), Error);

    CHECK(similarity_from_string("dot") == Similarity::dot);
    CHECK_THROWS_AS(similarity_from_string("l2"), Error);
}

TEST_CASE("random fixture matches a brute-force sort", "[dense][property]") {
    std::mt19937 rng(99);
    std::normal_distribution<float> gauss;
    constexpr std::size_t dim = 12;
    for (auto similarity : {Similarity::dot, Similarity::cosine}) {
        VectorIndex index(dim, similarity);
        std::vector<std::vector<float>> vectors;
        for (int d = 0; d < 100; ++d) {
            std::vector<float> v(dim);
            for (auto& x : v) x = gauss(rng);
            index.add("d" + std::to_string(d), v);
            vectors.push_back(std::move(v));
        }
        std::vector<float> query(dim);
        for (auto& x : query) x = gauss(rng);

        std::vector<std::pair<double, std::string>> expected;
        double qn = 0.0;
        for (float x : query) qn += double(x) * double(x);
        for (std::size_t d = 0; d < vectors.size(); ++d) {
            double dot = 0.0, dn = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                dot += double(query[i]) * double(vectors[d][i]);
                dn += double(vectors[d][i]) * double(vectors[d][i]);
            }
            if (similarity == Similarity::cosine) dot /= std::sqrt(qn) * std::sqrt(dn);
            expected.emplace_back(-dot, "d" + std::to_string(d));
        }
        std::sort(expected.begin(), expected.end());
        const auto hits = search_dense(index, query, 10).hits;
        REQUIRE(hits.size() == 10);
        for (std::size_t i = 0; i < hits.size(); ++i) {
            CHECK(hits[i].doc_id == expected[i].second);
            CHECK_THAT(hits[i].score, WithinAbs(-expected[i].first, 1e-9));
        }
    }
}

TEST_CASE("vector index persistence and dense retriever", "[dense]") {
    chiq::testing::TempDir dir;
    const std::vector<Passage> docs{{"d1", "tesla induction motor"}, {"d2", "coral reef bleaching"},
                                    {"d3", "sourdough bread starter"}};
    EmbeddingClient client(std::make_shared<HashEmbedder>(32));
    const auto index = build_vector_index(docs, client, 32, Similarity::cosine);
    index.save(dir / "vectors.bin");
    const auto loaded = VectorIndex::load(dir / "vectors.bin");
    CHECK(loaded.size() == 3);
    CHECK(loaded.similarity() == Similarity::cosine);

    DenseRetriever retriever(loaded, client);
    const auto list = retriever.search("q", "coral reef", 3);
    REQUIRE_FALSE(list.hits.empty());
    CHECK(list.hits[0].doc_id == "d2");
    CHECK(list.query_id == "q");
}
