#include <catch_amalgamated.hpp>

#include "chiq/enhance.hpp"
#include "support/fixtures.hpp"
#include "support/scripted_backend.hpp"

using namespace chiq;
using namespace chiq::enhance;
using chiq::prompts::PromptKind;
using chiq::testing::kinds_called;
using chiq::testing::scripted_gateway;

namespace {

ConversationSession three_turns() {
    return {"s", "s_4",
            {{"Who wrote Hamlet?", "Shakespeare."},
             {"When was it written?", "Around 1600."},
             {"Where was it first staged?", "The Globe."}},
            "How many seats did it have?"};
}

}  // namespace

TEST_CASE("question disambiguation", "[enhance][QD]") {
    const std::vector<ConversationTurn> history{{"Who wrote Hamlet?", "Shakespeare."}};

    SECTION("echo leaves the question unchanged") {
        auto [backend, gateway] = scripted_gateway({{PromptKind::QD, "When did he die?"}});
        const auto out = disambiguate_question(*gateway, history, "When did he die?");
        CHECK(out.text == "When did he die?");
        CHECK_FALSE(out.fallback);
    }

    SECTION("only the first line is kept") {
        auto [backend, gateway] = scripted_gateway({{PromptKind::QD, "\nWhen did Shakespeare die?\nExtra chatter"}});
        CHECK(disambiguate_question(*gateway, history, "When did he die?").text == "When did Shakespeare die?");
    }

    SECTION("empty output falls back with provenance") {
        auto [backend, gateway] = scripted_gateway({{PromptKind::QD, ""}, {PromptKind::TS, "old_topic"}});
        ConversationSession s{"s", "s_2", history, "When did he die?"};
        EnhanceConfig cfg;
        cfg.steps = {true, false, false, false, false};
        const auto e = enhance_history(*gateway, s, cfg);
        CHECK(e.disambiguated_question == "When did he die?");
        CHECK(e.provenance.at("disambiguated_question") == "QD:fallback");
    }

    SECTION("prompt layout") {
        auto [backend, gateway] = scripted_gateway({{PromptKind::QD, "x"}});
        disambiguate_question(*gateway, history, "When did he die?");
        const auto log = gateway->call_log();
        REQUIRE(log.size() == 1);
        CHECK(log[0].request.user_content == "Q: Who wrote Hamlet?\nA: Shakespeare.\nNew question: When did he die?");
    }
}

TEST_CASE("response expansion", "[enhance][RE]") {
    SECTION("empty history is unset and makes no call") {
        auto [backend, gateway] = scripted_gateway({{PromptKind::RE, "long answer"}});
        CHECK_FALSE(expand_response(*gateway, {}).has_value());
        CHECK(gateway->call_log().empty());
    }

    SECTION("whitespace output falls back to the original response") {
        auto [backend, gateway] = scripted_gateway({{PromptKind::RE, "  \n "}});
        const auto out = expand_response(*gateway, {{"q", "short"}});
        REQUIRE(out.has_value());
        CHECK(out->text == "short");
        CHECK(out->fallback);
    }

    SECTION("trimmed output replaces the response") {
        auto [backend, gateway] = scripted_gateway({{PromptKind::RE, " The full answer. "}});
        const auto out = expand_response(*gateway, {{"q", "short"}});
        CHECK(out->text == "The full answer.");
        CHECK_FALSE(out->fallback);
    }
}

TEST_CASE("pseudo response", "[enhance][PR]") {
    SECTION("multi-sentence output is kept verbatim") {
        const std::string three = "One sentence. Two sentences. Three sentences.";
        auto [backend, gateway] = scripted_gateway({{PromptKind::PR, three}});
        CHECK(pseudo_response(*gateway, {}, "q?") == three);
    }

    SECTION("gateway error leaves it unset with a warning") {
        auto [backend, gateway] = scripted_gateway();
        backend->failing.insert(PromptKind::PR);
        std::vector<std::string> warnings;
        CHECK_FALSE(pseudo_response(*gateway, {}, "q?", {}, &warnings).has_value());
        REQUIRE(warnings.size() == 1);
        CHECK_THAT(warnings[0], Catch::Matchers::StartsWith("PR:"));
    }

    SECTION("without fallback the error propagates") {
        auto [backend, gateway] = scripted_gateway();
        backend->failing.insert(PromptKind::PR);
        EnhanceConfig cfg;
        cfg.fallback = false;
        CHECK_THROWS_AS(pseudo_response(*gateway, {}, "q?", cfg), Error);
    }
}

TEST_CASE("topic labels", "[enhance][TS]") {
    CHECK(parse_topic_label("new_topic").switched);
    CHECK_FALSE(parse_topic_label("Old_Topic.").switched);
    CHECK_FALSE(parse_topic_label("Old_Topic.").ambiguous);
    const auto both = parse_topic_label("It introduces a new topic: new_topic and old_topic");
    CHECK_FALSE(both.switched);
    CHECK(both.ambiguous);
    CHECK(parse_topic_label("no idea").ambiguous);

    auto [backend, gateway] = scripted_gateway({{PromptKind::TS, "new_topic and old_topic"}});
    std::vector<std::string> warnings;
    const auto decision = detect_topic_switch(*gateway, {{"a", "b"}}, "c", {}, &warnings);
    CHECK_FALSE(decision.switched);
    CHECK(decision.ambiguous);
    CHECK(warnings.size() == 1);
}

TEST_CASE("history summary", "[enhance][HS]") {
    auto [backend, gateway] = scripted_gateway({{PromptKind::HS, ""}, {PromptKind::TS, "old_topic"}});
    EnhanceConfig cfg;
    cfg.steps = {false, false, false, true, true};
    const auto e = enhance_history(*gateway, three_turns(), cfg);
    CHECK_FALSE(e.summary.has_value());
    CHECK(e.provenance.at("summary") == "HS:fallback");
    CHECK_THROWS_AS(summarize_history(*gateway, {}), Error);
}

TEST_CASE("enhancement policy", "[enhance]") {
    const std::map<PromptKind, std::string> base{{PromptKind::QD, "How many seats did the Globe have?"},
                                                 {PromptKind::RE, "It was first staged at the Globe Theatre."},
                                                 {PromptKind::PR, "About three thousand."},
                                                 {PromptKind::HS, "Hamlet by Shakespeare, staged at the Globe."}};

    SECTION("topic switch keeps one turn and skips the summary") {
        auto responses = base;
        responses[PromptKind::TS] = "new_topic";
        auto [backend, gateway] = scripted_gateway(responses);
        const auto e = enhance_history(*gateway, three_turns());
        CHECK(e.topic_switched);
        REQUIRE(e.turns.size() == 1);
        CHECK(e.turns[0].question == "Where was it first staged?");
        CHECK(e.turns[0].response == "It was first staged at the Globe Theatre.");
        CHECK_FALSE(e.summary.has_value());
        CHECK(kinds_called(*gateway) ==
              std::vector<PromptKind>{PromptKind::TS, PromptKind::QD, PromptKind::RE, PromptKind::PR});
    }

    SECTION("same topic keeps all turns and summarizes last") {
        auto responses = base;
        responses[PromptKind::TS] = "old_topic";
        auto [backend, gateway] = scripted_gateway(responses);
        const auto e = enhance_history(*gateway, three_turns());
        CHECK_FALSE(e.topic_switched);
        CHECK(e.turns.size() == 3);
        CHECK(e.summary == "Hamlet by Shakespeare, staged at the Globe.");
        CHECK(e.expanded_last_response == "It was first staged at the Globe Theatre.");
        CHECK(e.pseudo_response == "About three thousand.");
        CHECK(e.disambiguated_question == "How many seats did the Globe have?");
        CHECK(kinds_called(*gateway) == std::vector<PromptKind>{PromptKind::TS, PromptKind::QD, PromptKind::RE,
                                                                PromptKind::PR, PromptKind::HS});
    }

    SECTION("pseudo response sees the expanded last response") {
        auto responses = base;
        responses[PromptKind::TS] = "old_topic";
        auto [backend, gateway] = scripted_gateway(responses);
        enhance_history(*gateway, three_turns());
        for (const auto& call : gateway->call_log()) {
            if (prompts::kind_of_instruction(call.request.system_instruction) == PromptKind::PR) {
                CHECK_THAT(call.request.user_content,
                           Catch::Matchers::ContainsSubstring("A: It was first staged at the Globe Theatre."));
            }
        }
    }

    SECTION("TS disabled means no TS call and a summary") {
        auto [backend, gateway] = scripted_gateway(base);
        EnhanceConfig cfg;
        cfg.steps.ts = false;
        const auto e = enhance_history(*gateway, three_turns(), cfg);
        CHECK(e.summary.has_value());
        CHECK(kinds_called(*gateway) ==
              std::vector<PromptKind>{PromptKind::QD, PromptKind::RE, PromptKind::PR, PromptKind::HS});
    }

    SECTION("first turn runs QD and PR only") {
        auto [backend, gateway] = scripted_gateway(base);
        ConversationSession first{"s", "s_1", {}, "Who wrote Hamlet?"};
        const auto e = enhance_history(*gateway, first);
        CHECK(kinds_called(*gateway) == std::vector<PromptKind>{PromptKind::QD, PromptKind::PR});
        CHECK_FALSE(e.summary.has_value());
        CHECK_FALSE(e.expanded_last_response.has_value());
    }
}

TEST_CASE("enhancement dump round trip", "[enhance]") {
    chiq::testing::TempDir dir;
    auto [backend, gateway] = scripted_gateway({{PromptKind::TS, "old_topic"},
                                                {PromptKind::QD, "u'"},
                                                {PromptKind::RE, "long"},
                                                {PromptKind::PR, "guess"},
                                                {PromptKind::HS, "summary"}});
    const std::vector<EnhancedHistory> records{enhance_history(*gateway, three_turns())};
    write_dump(records, dir / "e.jsonl");
    CHECK(read_dump(dir / "e.jsonl") == records);
}
