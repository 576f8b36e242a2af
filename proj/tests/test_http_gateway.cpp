#include <catch_amalgamated.hpp>

#include <atomic>
#include <mutex>
#include <thread>

#include "chiq/dense.hpp"
#include "chiq/llm_gateway.hpp"

using namespace chiq;
using namespace chiq::llm;

namespace {

/// Local chat endpoint. The handler decides the status and body per call.
class StubServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&, int call)>;

    explicit StubServer(Handler handler) : handler_(std::move(handler)) {
        auto serve = [this](const httplib::Request& req, httplib::Response& res) {
            const int call = ++calls;
            {
                std::lock_guard lock(mutex);
                last_body = req.body;
                last_authorization = req.get_header_value("Authorization");
            }
            handler_(req, res, call);
        };
        server_.Post("/v1/chat/completions", serve);
        server_.Post("/embed", serve);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    std::string url(const std::string& path = "/v1/chat/completions") const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

    std::atomic<int> calls{0};
    std::mutex mutex;
    std::string last_body;
    std::string last_authorization;

private:
    Handler handler_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

void reply_text(httplib::Response& res, const std::string& text) {
    nlohmann::json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
    res.set_content(body.dump(), "application/json");
}

ChatRequest sample_request() {
    ChatRequest r;
    r.system_instruction = "system text";
    r.user_content = "user text";
    r.config.temperature = 0.7;
    r.config.max_new_tokens = 32;
    r.config.seed = 11;
    return r;
}

GatewayOptions fast_retries(int retries) {
    GatewayOptions options;
    options.retry.max_retries = retries;
    options.retry.base_delay = std::chrono::milliseconds(1);
    return options;
}

}  // namespace

TEST_CASE("chat wire format", "[http]") {
    StubServer server([](const auto&, auto& res, int) { reply_text(res, "old_topic"); });
    auto backend = std::make_shared<HttpChatBackend>(HttpSettings{server.url(), "secret", std::chrono::seconds(5)},
                                                     "tiny-model");
    Gateway gateway(backend);
    const auto response = gateway.complete(sample_request());
    CHECK(response.text == "old_topic");

    std::lock_guard lock(server.mutex);
    const auto body = nlohmann::json::parse(server.last_body);
    CHECK(body["model"] == "tiny-model");
    REQUIRE(body["messages"].size() == 2);
    CHECK(body["messages"][0] == nlohmann::json{{"role", "system"}, {"content", "system text"}});
    CHECK(body["messages"][1] == nlohmann::json{{"role", "user"}, {"content", "user text"}});
    CHECK(body["temperature"].get<double>() == 0.7);
    CHECK(body["max_tokens"] == 32);
    CHECK(body["seed"] == 11);
    CHECK(server.last_authorization == "Bearer secret");
}

TEST_CASE("seed is omitted when unset", "[http]") {
    auto request = sample_request();
    request.config.seed.reset();
    CHECK_FALSE(chat_request_body("m", request).contains("seed"));
}

TEST_CASE("5xx and 429 are retried", "[http][retry]") {
    StubServer server([](const auto&, auto& res, int call) {
        if (call == 1) {
            res.status = 503;
        } else if (call == 2) {
            res.status = 429;
        } else {
            reply_text(res, "fine");
        }
    });
    Gateway gateway(std::make_shared<HttpChatBackend>(HttpSettings{server.url(), "", std::chrono::seconds(5)}, "m"),
                    fast_retries(3));
    CHECK(gateway.complete(sample_request()).text == "fine");
    CHECK(server.calls == 3);
}

TEST_CASE("4xx is a protocol error and is not retried", "[http]") {
    StubServer server([](const auto&, auto& res, int) {
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    Gateway gateway(std::make_shared<HttpChatBackend>(HttpSettings{server.url(), "", std::chrono::seconds(5)}, "m"),
                    fast_retries(3));
    try {
        gateway.complete(sample_request());
        FAIL("expected protocol error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::protocol);
    }
    CHECK(server.calls == 1);
}

TEST_CASE("malformed replies are protocol errors", "[http]") {
    StubServer server([](const auto&, auto& res, int call) {
        res.set_content(call == 1 ? "not json" : R"({"choices": []})", "application/json");
    });
    Gateway gateway(std::make_shared<HttpChatBackend>(HttpSettings{server.url(), "", std::chrono::seconds(5)}, "m"),
                    fast_retries(0));
    CHECK_THROWS_AS(gateway.complete(sample_request()), Error);
    try {
        gateway.complete(sample_request());
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::protocol);
    }
}

TEST_CASE("unreachable endpoint", "[http][retry]") {
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }
    const auto url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    Gateway gateway(std::make_shared<HttpChatBackend>(HttpSettings{url, "", std::chrono::seconds(2)}, "m"),
                    fast_retries(2));
    try {
        gateway.complete(sample_request());
        FAIL("expected transport error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::transport);
        CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("after 3 attempts"));
    }
}

TEST_CASE("URL parsing", "[http]") {
    const auto ep = parse_url("https://host:8443/v1/chat/completions");
    CHECK(ep.scheme_host_port == "https://host:8443");
    CHECK(ep.path == "/v1/chat/completions");
    CHECK(parse_url("http://h").path == "/");
    CHECK_THROWS_AS(parse_url("localhost:8000"), Error);
}

TEST_CASE("embedding endpoint", "[http][dense]") {
    StubServer server([](const httplib::Request& req, auto& res, int) {
        const auto input = nlohmann::json::parse(req.body).at("input").get<std::string>();
        nlohmann::json body = {{"embedding", {static_cast<double>(input.size()), 1.0, 0.0}}};
        res.set_content(body.dump(), "application/json");
    });
    EmbeddingClient client(std::make_shared<HttpEmbedder>(HttpSettings{server.url("/embed"), "", std::chrono::seconds(5)}));
    client.expect_dimension(3);
    CHECK(client.embed("abcd") == std::vector<float>{4.0f, 1.0f, 0.0f});
    client.expect_dimension(8);
    CHECK_THROWS_AS(client.embed("abcd"), Error);
}
