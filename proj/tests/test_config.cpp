#include <catch_amalgamated.hpp>

#include "chiq/config.hpp"
#include "support/fixtures.hpp"

using namespace chiq;
using namespace chiq::config;

namespace {

EnvLookup fake_env(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const char* name) -> std::optional<std::string> {
        auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

}  // namespace

TEST_CASE("presets", "[config]") {
    CHECK(preset("topiocqa").bm25 == Bm25Params{0.9, 0.4});
    CHECK(preset("qrecc").bm25 == Bm25Params{0.82, 0.68});
    CHECK(preset("cast19").threshold == 1);
    CHECK(preset("cast20").threshold == 2);
    CHECK(preset("cast21").threshold == 2);
    for (auto name : kPresets) {
        const auto c = preset(name);
        CAPTURE(name);
        CHECK(c.truncation.query == 32);
        CHECK(c.truncation.input == 512);
        CHECK(c.truncation.passage == 384);
        CHECK(c.temperature == 0.7);
        CHECK(c.fusion_alpha == 1.0);
        CHECK_NOTHROW(c.validate());
    }
    CHECK_THROWS_AS(preset("msmarco"), Error);
}

TEST_CASE("layer precedence", "[config]") {
    const auto env = env_layer(fake_env({{"CHIQ_LLM_URL", "http://env"}, {"CHIQ_LLM_MODEL", "env-model"}}));

    SECTION("environment over preset") {
        const auto c = resolve({}, {}, env);
        CHECK(c.gateway.url == "http://env");
        CHECK(c.gateway.model == "env-model");
        CHECK(c.preset == "custom");
    }

    SECTION("file over environment, flags over file") {
        const nlohmann::json file = {{"preset", "qrecc"}, {"gateway", {{"url", "http://file"}}}, {"threads", 2}};
        const nlohmann::json flags = {{"bm25", {{"k1", 1.2}}}, {"threads", 8}};
        const auto c = resolve(flags, file, env);
        CHECK(c.preset == "qrecc");
        CHECK(c.gateway.url == "http://file");
        CHECK(c.gateway.model == "env-model");
        CHECK(c.bm25.k1 == 1.2);
        CHECK(c.bm25.b == 0.68);
        CHECK(c.threads == 8);
    }

    SECTION("a flag preset picks different defaults than the file preset") {
        const auto c = resolve({{"preset", "cast20"}}, {{"preset", "qrecc"}}, nlohmann::json::object());
        CHECK(c.preset == "cast20");
        CHECK(c.threshold == 2);
        CHECK(c.bm25 == Bm25Params{0.9, 0.4});
    }
}

TEST_CASE("validation and schema", "[config]") {
    CHECK_THROWS_AS(resolve({{"bm25", {{"kk", 1}}}}, {}, {}), Error);
    CHECK_THROWS_AS(resolve({{"retriever", "hybrid"}}, {}, {}), Error);
    CHECK_THROWS_AS(resolve({{"bm25", {{"b", 2.0}}}}, {}, {}), Error);
    CHECK_THROWS_AS(resolve({{"threads", "many"}}, {}, {}), Error);
    try {
        resolve({{"gateway", {{"token", "x"}}}}, {}, {});
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
        CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("gateway.token"));
    }
}

TEST_CASE("config files", "[config]") {
    chiq::testing::TempDir dir;
    CHECK(read_file(dir.write("c.json", R"({"preset": "cast19"})"))["preset"] == "cast19");
    try {
        read_file(dir.write("c.toml", "preset = \"cast19\"\n"));
        FAIL("toml should be rejected");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
    }
    CHECK_THROWS_AS(read_file(dir.write("bad.json", "{")), Error);
    CHECK_THROWS_AS(read_file(dir / "absent.json"), Error);
}

TEST_CASE("json round trip and redaction", "[config]") {
    auto c = preset("topiocqa");
    c.gateway.api_key = "sk-secret";
    c.seed = 13;
    CHECK(to_json(c)["gateway"]["api_key"] == "***");
    const auto back = from_json(to_json(c, false));
    CHECK(back.gateway.api_key == "sk-secret");
    CHECK(back.seed == 13);
    CHECK(to_json(back, false) == to_json(c, false));
}
