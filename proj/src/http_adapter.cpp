#include "kppo/http_adapter.hpp"

#include "kppo/error.hpp"
#include "kppo/util.hpp"

#ifdef KPPO_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

namespace kppo {

using nlohmann::json;

HttpChatAdapter::HttpChatAdapter(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    if (endpoint_.base_url.empty()) throw ConfigError("http adapter needs a base_url");
}

std::string HttpChatAdapter::request_body(const ChatRequest& req) const {
    json msgs = json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    json body = {
        {"model", endpoint_.model},
        {"messages", std::move(msgs)},
        {"temperature", req.temperature},
        {"max_tokens", req.max_output},
    };
    if (req.seed) body["seed"] = *req.seed;
    return body.dump();
}

ChatResponse HttpChatAdapter::parse_reply(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("reply is not JSON: ") + e.what());
    }
    ChatResponse resp;
    resp.source = ResponseSource::http;
    try {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        resp.text = content.is_null() ? std::string() : content.get<std::string>();
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("reply lacks choices[0].message.content: ") + e.what());
    }
    if (auto it = j.find("usage"); it != j.end() && it->is_object()) {
        resp.usage.input = it->value("prompt_tokens", std::size_t{0});
        resp.usage.output = it->value("completion_tokens", std::size_t{0});
    } else {
        resp.usage.output = count_tokens(resp.text);
    }
    return resp;
}

ChatResponse HttpChatAdapter::send(const ChatRequest& req) {
    httplib::Client client(endpoint_.base_url);
    auto secs = static_cast<time_t>(endpoint_.timeout_seconds);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

    auto res = client.Post(endpoint_.path, headers, request_body(req), "application/json");
    if (!res) throw TransientError("transport error: " + httplib::to_string(res.error()), 0);
    if (res->status == 429 || res->status >= 500) {
        throw TransientError("endpoint returned status " + std::to_string(res->status), res->status);
    }
    if (res->status != 200) {
        throw GatewayError("endpoint returned status " + std::to_string(res->status) + ": " + res->body.substr(0, 200),
                           res->status);
    }
    return parse_reply(res->body);
}

} // namespace kppo
