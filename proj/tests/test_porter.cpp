#include <catch_amalgamated.hpp>

#include "chiq/porter_stemmer.hpp"

using chiq::porter_stem;

TEST_CASE("published Porter vectors", "[porter]") {
    const std::vector<std::pair<std::string, std::string>> vectors{
        {"caresses", "caress"},   {"ponies", "poni"},        {"ties", "ti"},
        {"caress", "caress"},     {"cats", "cat"},           {"feed", "feed"},
        {"agreed", "agre"},       {"plastered", "plaster"},  {"bled", "bled"},
        {"motoring", "motor"},    {"sing", "sing"},          {"conflated", "conflat"},
        {"troubled", "troubl"},   {"sized", "size"},         {"hopping", "hop"},
        {"tanned", "tan"},        {"falling", "fall"},       {"hissing", "hiss"},
        {"fizzed", "fizz"},       {"failing", "fail"},       {"filing", "file"},
        {"happy", "happi"},       {"sky", "sky"},            {"relational", "relat"},
        {"conditional", "condit"}, {"rational", "ration"},   {"valenci", "valenc"},
        {"digitizer", "digit"},   {"operator", "oper"},      {"generalizations", "gener"},
        {"oscillators", "oscil"}, {"hopefulness", "hope"},   {"electrical", "electr"},
        {"adjustable", "adjust"}, {"effective", "effect"},   {"goodness", "good"},
        {"formaliti", "formal"},  {"revival", "reviv"},      {"allowance", "allow"},
        {"inference", "infer"},   {"airliner", "airlin"},    {"adoption", "adopt"},
        {"homologou", "homolog"}, {"communism", "commun"},   {"activate", "activ"},
        {"angulariti", "angular"}, {"homologous", "homolog"}, {"bowdlerize", "bowdler"},
        {"probate", "probat"},    {"rate", "rate"},          {"cease", "ceas"},
        {"controll", "control"},  {"roll", "roll"},          {"running", "run"},
    };
    for (const auto& [word, stem] : vectors) {
        CAPTURE(word);
        CHECK(porter_stem(word) == stem);
    }
}

TEST_CASE("short and non-alphabetic tokens pass through", "[porter]") {
    CHECK(porter_stem("a") == "a");
    CHECK(porter_stem("is") == "is");
    CHECK(porter_stem("1856") == "1856");
    CHECK(porter_stem("") == "");
}
