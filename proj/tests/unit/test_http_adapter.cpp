#include "kppo/error.hpp"
#include "kppo/http_adapter.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

using namespace kppo;

namespace {

class LocalServer {
public:
    explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

const char* good_reply =
    R"({"choices":[{"message":{"role":"assistant","content":"Final Answer: B"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}})";

ChatRequest request() {
    ChatRequest r;
    r.messages = {{"system", "sys"}, {"user", "question"}};
    r.seed = 42;
    r.max_output = 16;
    return r;
}

HttpEndpoint endpoint(const std::string& url) { return {url, "/v1/chat/completions", "test-model", "secret", 5.0}; }

} // namespace

TEST(HttpAdapter, WireFormat) {
    HttpChatAdapter adapter(endpoint("http://127.0.0.1:1"));
    auto body = nlohmann::json::parse(adapter.request_body(request()));
    EXPECT_EQ(body.at("model"), "test-model");
    EXPECT_EQ(body.at("messages").size(), 2u);
    EXPECT_EQ(body.at("messages")[1].at("role"), "user");
    EXPECT_EQ(body.at("temperature"), 0.0);
    EXPECT_EQ(body.at("seed"), 42);
    EXPECT_EQ(body.at("max_tokens"), 16);
    auto unseeded = request();
    unseeded.seed.reset();
    EXPECT_FALSE(nlohmann::json::parse(adapter.request_body(unseeded)).contains("seed"));
}

TEST(HttpAdapter, ParsesReply) {
    auto r = HttpChatAdapter::parse_reply(good_reply);
    EXPECT_EQ(r.text, "Final Answer: B");
    EXPECT_EQ(r.usage, (Usage{12, 3}));
    EXPECT_EQ(r.source, ResponseSource::http);
    EXPECT_THROW(HttpChatAdapter::parse_reply("not json"), ProtocolError);
    EXPECT_THROW(HttpChatAdapter::parse_reply(R"({"choices":[]})"), ProtocolError);
}

TEST(HttpAdapter, RetriesRateLimitThenSucceeds) {
    std::atomic<int> hits{0};
    std::string auth;
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        if (++hits <= 2) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
            return;
        }
        res.set_content(good_reply, "application/json");
    });
    LlmGateway gw(RetryPolicy{4, std::chrono::milliseconds(1), std::chrono::milliseconds(2)});
    gw.set_adapter(ModelRole::target, std::make_shared<HttpChatAdapter>(endpoint(server.url())));
    auto resp = gw.complete(request());
    EXPECT_EQ(resp.text, "Final Answer: B");
    EXPECT_EQ(hits.load(), 3);
    EXPECT_EQ(auth, "Bearer secret");
}

TEST(HttpAdapter, DoesNotRetryClientErrors) {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
        res.set_content(R"({"error":"bad"})", "application/json");
    });
    LlmGateway gw(RetryPolicy{4, std::chrono::milliseconds(1), std::chrono::milliseconds(2)});
    gw.set_adapter(ModelRole::target, std::make_shared<HttpChatAdapter>(endpoint(server.url())));
    try {
        gw.complete(request());
        FAIL() << "expected GatewayError";
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.status(), 400);
    }
    EXPECT_EQ(hits.load(), 1);
}

TEST(HttpAdapter, MalformedReplyIsProtocolError) {
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices":[{"text":"legacy shape"}]})", "application/json");
    });
    LlmGateway gw;
    gw.set_adapter(ModelRole::target, std::make_shared<HttpChatAdapter>(endpoint(server.url())));
    EXPECT_THROW(gw.complete(request()), ProtocolError);
}

TEST(HttpAdapter, ExhaustedServerErrors) {
    LocalServer server([&](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    LlmGateway gw(RetryPolicy{2, std::chrono::milliseconds(1), std::chrono::milliseconds(1)});
    gw.set_adapter(ModelRole::target, std::make_shared<HttpChatAdapter>(endpoint(server.url())));
    try {
        gw.complete(request());
        FAIL() << "expected GatewayError";
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.status(), 503);
    }
}

TEST(HttpAdapter, UnreachableEndpointIsTransient) {
    HttpChatAdapter adapter({"http://127.0.0.1:1", "/v1/chat/completions", "m", "", 1.0});
    EXPECT_THROW(adapter.send(request()), TransientError);
}
