#include <catch_amalgamated.hpp>

#include "chiq/prompts.hpp"

using namespace chiq;
using namespace chiq::prompts;

TEST_CASE("instruction texts ship verbatim", "[prompts]") {
    CHECK(instruction(PromptKind::RE) ==
          "You are given a question-and-answer pair, where the answer is not clear. Your goal is to write a long "
          "version of the answer based on its given context. The generated answer should be one sentence only and "
          "less than 20 words.");
    CHECK(instruction(PromptKind::PR) ==
          "Given a series of question-and-answer pairs, along with a new question, your task is to give a "
          "one-sentence response to the new question.");
    CHECK(instruction(PromptKind::CQR).ends_with(R"(as follows: {"query": ""})"));
    CHECK(instruction(PromptKind::TS).find(R"("new_topic" or "old_topic")") != std::string_view::npos);
    CHECK(instruction(PromptKind::SUPERVISION).ends_with("e.g., 1. 2. 3."));
}

TEST_CASE("instruction kinds round trip", "[prompts]") {
    for (auto kind : {PromptKind::QD, PromptKind::RE, PromptKind::PR, PromptKind::TS, PromptKind::HS,
                      PromptKind::CQR, PromptKind::SUPERVISION}) {
        CAPTURE(to_string(kind));
        CHECK(kind_of_instruction(instruction(kind)) == kind);
    }
    CHECK_FALSE(kind_of_instruction("Summarize this.").has_value());
}

TEST_CASE("history rendering", "[prompts]") {
    const std::vector<ConversationTurn> turns{{"q1", "a1"}, {"q2", "a2"}};
    CHECK(render_pairs(turns) == "Q: q1\nA: a1\n\nQ: q2\nA: a2");
    CHECK(render_pairs({}).empty());
    CHECK(with_new_question("", "q") == "New question: q");
    CHECK(with_new_question("Q: a\nA: b", "c") == "Q: a\nA: b\nNew question: c");
}
