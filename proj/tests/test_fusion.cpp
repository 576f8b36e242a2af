#include <catch_amalgamated.hpp>

#include <random>

#include "chiq/fusion.hpp"

using namespace chiq;
using namespace chiq::fusion;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<std::string> ids(const RankedList& list) {
    std::vector<std::string> out;
    for (const auto& h : list.hits) out.push_back(h.doc_id);
    return out;
}

RankedList random_list(std::mt19937& rng, const std::string& prefix, int n) {
    RankedList list{"q", {}, static_cast<std::size_t>(n)};
    std::uniform_real_distribution<double> score(-5.0, 20.0);
    for (int i = 0; i < n; ++i) list.hits.push_back({prefix + std::to_string(i), score(rng)});
    sort_and_cut(list.hits, list.hits.size());
    return list;
}

}  // namespace

TEST_CASE("min-max normalization", "[fusion]") {
    RankedList list{"q", {{"a", 10}, {"b", 5}, {"c", 0}}, 3};
    const auto norm = normalize_scores(list);
    CHECK(norm.hits[0].score == 1.0);
    CHECK(norm.hits[1].score == 0.5);
    CHECK(norm.hits[2].score == 0.0);
    CHECK(ids(norm) == ids(list));

    CHECK(normalize_scores({"q", {{"a", 7.3}}, 1}).hits[0].score == 1.0);
    const RankedList unit{"q", {{"a", 1.0}, {"b", 0.0}}, 2};
    CHECK(normalize_scores(unit).hits == unit.hits);
    CHECK(normalize_scores({"q", {}, 0}).hits.empty());
}

TEST_CASE("worked example", "[fusion]") {
    const RankedList a{"q", {{"d1", 10}, {"d2", 5}, {"d3", 0}}, 3};
    const RankedList b{"q", {{"d2", 3}, {"d4", 1}}, 2};
    const auto fused = fuse(a, b, {1.0, 100});
    CHECK(ids(fused) == std::vector<std::string>{"d2", "d1", "d3", "d4"});
    CHECK_THAT(fused.hits[0].score, WithinAbs(1.5, 1e-12));
    CHECK_THAT(fused.hits[1].score, WithinAbs(1.0, 1e-12));
    CHECK(fused.hits[2].score == 0.0);
    CHECK(fused.hits[3].score == 0.0);
    CHECK(fused.query_id == "q");
}

TEST_CASE("fusion properties", "[fusion][property]") {
    std::mt19937 rng(4242);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_list(rng, "a", 1 + trial % 17);
        auto b = random_list(rng, "a", 1 + trial % 11);
        const double alpha = std::uniform_real_distribution<double>(0.0, 3.0)(rng);

        // alpha = 0: list_a's documents keep list_a's order
        const auto zero = fuse(a, b, {0.0, 1000});
        std::vector<std::string> restricted;
        for (const auto& h : zero.hits) {
            if (std::any_of(a.hits.begin(), a.hits.end(), [&](const Hit& x) { return x.doc_id == h.doc_id; })) {
                restricted.push_back(h.doc_id);
            }
        }
        CHECK(restricted == ids(a));

        CHECK(ids(fuse(a, a, {alpha, 1000})) == ids(a));
        CHECK(ids(fuse(a, {"q", {}, 0}, {alpha, 1000})) == ids(a));

        auto scaled = b;
        for (auto& h : scaled.hits) h.score = 3.5 * h.score + 2.0;
        CHECK(ids(fuse(a, scaled, {alpha, 1000})) == ids(fuse(a, b, {alpha, 1000})));

        const auto cut = fuse(a, b, {alpha, 5});
        CHECK(cut.hits.size() <= 5);
        CHECK(is_well_formed(cut));
    }
}

TEST_CASE("fusion errors", "[fusion]") {
    const RankedList a{"q1", {{"d1", 1}}, 1};
    const RankedList b{"q2", {{"d1", 1}}, 1};
    CHECK_THROWS_AS(fuse(a, b), Error);
    CHECK_THROWS_AS(fuse(a, a, {-1.0, 10}), Error);
    CHECK_THROWS_AS(fuse(a, a, {1.0, 0}), Error);
}
