#include <catch_amalgamated.hpp>

#include "chiq/analyzer.hpp"

using namespace chiq;

TEST_CASE("default analysis", "[analyzer]") {
    CHECK(analyze("The Cats, running!") == std::vector<std::string>{"cat", "run"});
    CHECK(analyze("").empty());
    CHECK(analyze("   ,;  ").empty());
    CHECK(analyze("Tesla's AC-motor") == std::vector<std::string>{"tesla", "s", "ac", "motor"});
}

TEST_CASE("configurable steps", "[analyzer]") {
    AnalyzerConfig raw;
    raw.lowercase = false;
    raw.stemmer = Stemmer::none;
    CHECK(analyze("ATP", raw) == std::vector<std::string>{"ATP"});

    AnalyzerConfig keep_stop;
    keep_stop.stopword_list = "none";
    keep_stop.stemmer = Stemmer::none;
    CHECK(analyze("the cats", keep_stop) == std::vector<std::string>{"the", "cats"});

    AnalyzerConfig no_punct;
    no_punct.strip_punctuation = false;
    no_punct.stemmer = Stemmer::none;
    CHECK(analyze("end.", no_punct) == std::vector<std::string>{"end."});
}

TEST_CASE("fingerprints and json", "[analyzer]") {
    AnalyzerConfig a;
    AnalyzerConfig b;
    b.stemmer = Stemmer::none;
    CHECK(a.fingerprint() != b.fingerprint());
    CHECK(analyzer_from_json(to_json(b)) == b);
    CHECK_THROWS_AS(analyzer_from_json({{"stemmer", "snowball"}}), Error);
    CHECK_THROWS_AS(analyzer_from_json({{"stopwords", "french"}}), Error);
}
