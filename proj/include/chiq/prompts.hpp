#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chiq/corpus.hpp"
#include "chiq/error.hpp"

namespace chiq::prompts {

enum class PromptKind { QD, RE, PR, TS, HS, CQR, SUPERVISION };

inline std::string_view to_string(PromptKind kind) {
    switch (kind) {
        case PromptKind::QD: return "QD";
        case PromptKind::RE: return "RE";
        case PromptKind::PR: return "PR";
        case PromptKind::TS: return "TS";
        case PromptKind::HS: return "HS";
        case PromptKind::CQR: return "CQR";
        case PromptKind::SUPERVISION: return "SUPERVISION";
    }
    return "?";
}

// Instruction texts. These are shipped byte-for-byte and must not be edited.
//
// Response expansion and pseudo response are assigned by what they ask the
// model to do: expansion lengthens the previous answer, pseudo response
// answers the new question. Their published labels are the other way round.

inline constexpr std::string_view kQuestionDisambiguation =
    "You are given a set of question-answers pairs and a new question that is ambiguous. Your goal is to "
    "rewrite the question so it becomes clear. Write the new question without any introduction.";

inline constexpr std::string_view kResponseExpansion =
    "You are given a question-and-answer pair, where the answer is not clear. Your goal is to write a long "
    "version of the answer based on its given context. The generated answer should be one sentence only and "
    "less than 20 words.";

inline constexpr std::string_view kPseudoResponse =
    "Given a series of question-and-answer pairs, along with a new question, your task is to give a "
    "one-sentence response to the new question.";

inline constexpr std::string_view kTopicSwitch =
    "Given a series of question-and-answer pairs, along with a new question, your task is to determine "
    "whether the new question continues the discussion on an existing topic or introduces a new topic. "
    "Please respond with either \"new_topic\" or \"old_topic\" as appropriate.";

inline constexpr std::string_view kHistorySummary =
    "You are given a context in the form of question-answer pairs. Your goal is to write a paragraph that "
    "summarizes the information in the context. The summary should be short with one sentence for each "
    "question answer pair.";

inline constexpr std::string_view kQueryRewriting =
    "Given a series of question-and-answer pairs as context, along with a new question, your task is to "
    "convert the new question into a search engine query that can be used to retrieve relevant documents. "
    "The output should be placed in a JSON dictionary as follows: {\"query\": \"\"}";

inline constexpr std::string_view kPseudoSupervision =
    "You are given a relevant passage, a series of question-and-answer pairs as context along with a new "
    "question, your task is to generate a set of search queries based on the relevancy between the new "
    "question and the relevant passage and also rely on the given context. The output format should be in a "
    "list with indexes e.g., 1. 2. 3.";

inline std::string_view instruction(PromptKind kind) {
    switch (kind) {
        case PromptKind::QD: return kQuestionDisambiguation;
        case PromptKind::RE: return kResponseExpansion;
        case PromptKind::PR: return kPseudoResponse;
        case PromptKind::TS: return kTopicSwitch;
        case PromptKind::HS: return kHistorySummary;
        case PromptKind::CQR: return kQueryRewriting;
        case PromptKind::SUPERVISION: return kPseudoSupervision;
    }
    throw Error(ErrorKind::validation, "unknown prompt kind");
}

/// Maps an instruction string back to its kind; used when auditing call logs.
inline std::optional<PromptKind> kind_of_instruction(std::string_view instruction_text) {
    for (auto kind : {PromptKind::QD, PromptKind::RE, PromptKind::PR, PromptKind::TS, PromptKind::HS,
                      PromptKind::CQR, PromptKind::SUPERVISION}) {
        if (instruction(kind) == instruction_text) return kind;
    }
    return std::nullopt;
}

/// "Q: ...\nA: ..." pairs separated by blank lines.
inline std::string render_pairs(const std::vector<ConversationTurn>& turns) {
    std::string out;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (i) out += "\n\n";
        out += "Q: ";
        out += turns[i].question;
        out += "\nA: ";
        out += turns[i].response;
    }
    return out;
}

/// Appends the "New question:" line to a rendered context.
inline std::string with_new_question(std::string_view context, std::string_view question) {
    std::string out;
    if (!context.empty()) {
        out += context;
        out += '\n';
    }
    out += "New question: ";
    out += question;
    return out;
}

}  // namespace chiq::prompts
