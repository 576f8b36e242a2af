#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "chiq/error.hpp"
#include "chiq/porter_stemmer.hpp"
#include "chiq/text.hpp"

namespace chiq {

enum class Stemmer { none, porter };

// The classic 33-word English stop set used by Lucene's analyzers.
inline constexpr std::array<std::string_view, 33> kEnglishStopwords = {
    "a",    "an",   "and",  "are",   "as",    "at",    "be",   "but",  "by",   "for",  "if",
    "in",   "into", "is",   "it",    "no",    "not",   "of",   "on",   "or",   "such", "that",
    "the",  "their", "then", "there", "these", "they", "this", "to",   "was",  "will", "with",
};

struct AnalyzerConfig {
    bool lowercase = true;
    bool strip_punctuation = true;
    Stemmer stemmer = Stemmer::porter;
    std::string stopword_list = "english";  // "english" or "none"

    /// Stable identity of the analysis pipeline; an index refuses queries
    /// analyzed with a different fingerprint.
    std::string fingerprint() const {
        return std::string("v1;lowercase=") + (lowercase ? "1" : "0") + ";punct=" + (strip_punctuation ? "1" : "0") +
               ";stem=" + (stemmer == Stemmer::porter ? "porter" : "none") + ";stop=" + stopword_list;
    }

    friend bool operator==(const AnalyzerConfig&, const AnalyzerConfig&) = default;
};

inline nlohmann::json to_json(const AnalyzerConfig& c) {
    return {{"lowercase", c.lowercase},
            {"strip_punctuation", c.strip_punctuation},
            {"stemmer", c.stemmer == Stemmer::porter ? "porter" : "none"},
            {"stopwords", c.stopword_list}};
}

inline AnalyzerConfig analyzer_from_json(const nlohmann::json& j) {
    AnalyzerConfig c;
    c.lowercase = j.value("lowercase", c.lowercase);
    c.strip_punctuation = j.value("strip_punctuation", c.strip_punctuation);
    const auto stem = j.value("stemmer", std::string("porter"));
    if (stem != "porter" && stem != "none") throw Error(ErrorKind::config, "unknown stemmer " + stem);
    c.stemmer = stem == "porter" ? Stemmer::porter : Stemmer::none;
    c.stopword_list = j.value("stopwords", c.stopword_list);
    if (c.stopword_list != "english" && c.stopword_list != "none") {
        throw Error(ErrorKind::config, "unknown stopword list " + c.stopword_list);
    }
    return c;
}

/// Stateless text analysis: lowercase, punctuation to spaces, whitespace
/// split, stopword removal, stemming.
class Analyzer {
public:
    explicit Analyzer(AnalyzerConfig config = {}) : config_(std::move(config)) {
        if (config_.stopword_list == "english") {
            stopwords_.insert(kEnglishStopwords.begin(), kEnglishStopwords.end());
        } else if (config_.stopword_list != "none") {
            throw Error(ErrorKind::config, "unknown stopword list " + config_.stopword_list);
        }
    }

    const AnalyzerConfig& config() const { return config_; }

    std::vector<std::string> analyze(std::string_view input) const {
        std::string buffer(input);
        for (auto& c : buffer) {
            const auto u = static_cast<unsigned char>(c);
            if (config_.lowercase) c = static_cast<char>(std::tolower(u));
            if (config_.strip_punctuation && u < 0x80 && std::ispunct(u)) c = ' ';
        }
        std::vector<std::string> terms;
        PorterStemmer stemmer;
        for (auto token : text::split_whitespace(buffer)) {
            if (stopwords_.count(token)) continue;
            terms.push_back(config_.stemmer == Stemmer::porter ? stemmer.stem(token) : std::string(token));
        }
        return terms;
    }

private:
    AnalyzerConfig config_;
    std::unordered_set<std::string_view> stopwords_;
};

inline std::vector<std::string> analyze(std::string_view input, const AnalyzerConfig& config = {}) {
    return Analyzer(config).analyze(input);
}

}  // namespace chiq
