#include <catch_amalgamated.hpp>

#include "chiq/rewrite.hpp"
#include "support/fixtures.hpp"
#include "support/scripted_backend.hpp"

using namespace chiq;
using namespace chiq::rewrite;
using chiq::prompts::PromptKind;
using chiq::testing::scripted_gateway;

namespace {

ConversationSession session() {
    return {"s", "s_3", {{"Who sang Hey Jude?", "The Beatles."}, {"Who wrote it?", "Paul."}}, "When was it released?"};
}

enhance::EnhancedHistory enhanced_for(const ConversationSession& s) {
    enhance::EnhancedHistory e;
    e.session_id = s.session_id;
    e.turn_id = s.turn_id;
    e.question = s.current_question;
    e.turns = s.turns;
    e.turns.back().response = "Paul McCartney wrote Hey Jude.";
    e.expanded_last_response = "Paul McCartney wrote Hey Jude.";
    e.disambiguated_question = "When was Hey Jude released?";
    e.pseudo_response = "It was released in 1968.";
    e.summary = "Hey Jude is a Beatles song written by Paul McCartney.";
    return e;
}

}  // namespace

TEST_CASE("CQR prompt", "[rewrite]") {
    SECTION("empty history") {
        const auto chat = build_cqr_prompt({"", "q", std::nullopt, "original"});
        CHECK(chat.user_content == "New question: q");
        CHECK(chat.system_instruction == prompts::kQueryRewriting);
    }

    SECTION("expected answer line") {
        const auto chat = build_cqr_prompt({"Q: a\nA: b", "q", std::string("pr"), "PR"});
        CHECK(chat.user_content == "Q: a\nA: b\nNew question: q\nExpected answer: pr");
    }

    SECTION("long history is front-truncated to 512 tokens") {
        std::string history;
        for (int i = 0; i < 1000; ++i) history += "w" + std::to_string(i) + " ";
        const auto chat = build_cqr_prompt({history, "final question", std::nullopt, "original"});
        CHECK(text::count_tokens(chat.user_content) == 512);
        CHECK(chat.user_content.ends_with("w998 w999 \nNew question: final question"));
    }

    SECTION("empty question is rejected") {
        CHECK_THROWS_AS(build_cqr_prompt({"", "  ", std::nullopt, ""}), Error);
    }
}

TEST_CASE("query extraction", "[rewrite]") {
    CHECK(extract_query(R"({"query": "hey jude release date"})") == "hey jude release date");
    CHECK(extract_query(R"(Sure! {"query": "cal tjader album title"} hope this helps)") == "cal tjader album title");
    CHECK(extract_query(R"({"note": "x"} then {"query": "second object"})") == "second object");
    CHECK(extract_query(R"({"query": "brace } inside"})") == "brace } inside");
    CHECK(extract_query("Query: \"plain text query\"") == "plain text query");
    CHECK(extract_query("```\nfenced query\n```") == "fenced query");
    CHECK_FALSE(extract_query("").has_value());
    CHECK_FALSE(extract_query(R"({"query": "  "})").has_value());
}

TEST_CASE("configuration labels", "[rewrite]") {
    CHECK(Configuration::parse("default").label() == "QD+RE+PR+TS+HS");
    CHECK(Configuration::parse("original").label() == "original");
    CHECK(Configuration::parse("PR+QD").label() == "QD+PR");
    CHECK_FALSE(Configuration::parse("original").uses_enhancement());
    CHECK_THROWS_AS(Configuration::parse("QD+XX"), Error);
}

TEST_CASE("request assembly", "[rewrite]") {
    const auto s = session();
    const auto e = enhanced_for(s);

    SECTION("summary replaces the pair rendering") {
        const auto r = assemble_request(s, &e, Configuration::parse("HS"));
        const auto chat = build_cqr_prompt(r);
        CHECK_THAT(chat.user_content, Catch::Matchers::ContainsSubstring(*e.summary));
        CHECK_THAT(chat.user_content, !Catch::Matchers::ContainsSubstring("Q: "));
        CHECK_THAT(chat.user_content, !Catch::Matchers::ContainsSubstring("A: "));
    }

    SECTION("original ignores enhancement") {
        const auto r = assemble_request(s, &e, Configuration::original());
        CHECK(r.history_rendering == prompts::render_pairs(s.turns));
        CHECK(r.question == s.current_question);
        CHECK_FALSE(r.pseudo_response.has_value());
    }

    SECTION("RE swaps only the last response") {
        const auto r = assemble_request(s, &e, Configuration::parse("RE"));
        CHECK(r.history_rendering ==
              "Q: Who sang Hey Jude?\nA: The Beatles.\n\nQ: Who wrote it?\nA: Paul McCartney wrote Hey Jude.");
    }

    SECTION("QD appends the disambiguated question") {
        CHECK(assemble_request(s, &e, Configuration::parse("QD")).question ==
              "When was it released? When was Hey Jude released?");
        auto same = e;
        same.disambiguated_question = s.current_question;
        CHECK(assemble_request(s, &same, Configuration::parse("QD")).question == s.current_question);
    }

    SECTION("TS after a switch keeps the last turn and ignores the summary") {
        auto switched = e;
        switched.topic_switched = true;
        const auto r = assemble_request(s, &switched, Configuration::chiq_default());
        CHECK(r.history_rendering == "Q: Who wrote it?\nA: Paul McCartney wrote Hey Jude.");
        CHECK(r.pseudo_response == e.pseudo_response);
    }

    SECTION("enhanced configuration without a record") {
        CHECK_THROWS_AS(assemble_request(s, nullptr, Configuration::parse("PR")), Error);
    }
}

TEST_CASE("rewrite_query", "[rewrite]") {
    const auto s = session();
    const auto e = enhanced_for(s);

    SECTION("model query is used and cut to 32 tokens") {
        std::string long_query;
        for (int i = 0; i < 40; ++i) long_query += "t" + std::to_string(i) + " ";
        auto [backend, gateway] = scripted_gateway({{PromptKind::CQR, R"({"query": ")" + long_query + R"("})"}});
        const auto q = rewrite_query(*gateway, s, &e);
        CHECK(q.source == QuerySource::llm);
        CHECK(text::count_tokens(q.text) == 32);
        CHECK(q.configuration_label == "QD+RE+PR+TS+HS");
    }

    SECTION("unusable output falls back to the disambiguated question") {
        auto [backend, gateway] = scripted_gateway({{PromptKind::CQR, ""}});
        const auto q = rewrite_query(*gateway, s, &e);
        CHECK(q.source == QuerySource::fallback);
        CHECK(q.text == "When was Hey Jude released?");
    }

    SECTION("gateway failure falls back to the raw question for the original configuration") {
        auto [backend, gateway] = scripted_gateway();
        backend->failing.insert(PromptKind::CQR);
        RewriteConfig cfg;
        cfg.configuration = Configuration::original();
        const auto q = rewrite_query(*gateway, s, nullptr, cfg);
        CHECK(q.source == QuerySource::fallback);
        CHECK(q.text == s.current_question);
        cfg.fallback = false;
        CHECK_THROWS_AS(rewrite_query(*gateway, s, nullptr, cfg), Error);
    }

    SECTION("dump round trip") {
        chiq::testing::TempDir dir;
        const std::vector<RewrittenQuery> queries{{"a", "x y", QuerySource::llm, "original"},
                                                  {"b", "z", QuerySource::fallback, "QD"}};
        write_dump(queries, dir / "q.jsonl");
        CHECK(read_dump(dir / "q.jsonl") == queries);
    }
}
