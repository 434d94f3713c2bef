#pragma once

#include "kppo/llm_gateway.hpp"

#include <string>

namespace kppo {

struct HttpEndpoint {
    std::string base_url;  // scheme://host[:port], no trailing path
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;
    double timeout_seconds = 120.0;
};

// OpenAI-compatible chat completions over HTTP(S).
class HttpChatAdapter : public ChatAdapter {
public:
    explicit HttpChatAdapter(HttpEndpoint endpoint);

    ChatResponse send(const ChatRequest& req) override;

    // Exposed for tests of the wire format.
    std::string request_body(const ChatRequest& req) const;
    static ChatResponse parse_reply(const std::string& body);

private:
    HttpEndpoint endpoint_;
};

} // namespace kppo
