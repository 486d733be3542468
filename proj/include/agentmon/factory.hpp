#pragma once
// Builds backend instances from a Config. Mock kinds produce the
// deterministic in-process implementations (seeded from config), so every
// command also works fully offline.

#include <cstdlib>
#include <memory>
#include <string>

#include "agentmon/backends.hpp"
#include "agentmon/config.hpp"
#include "agentmon/http_backends.hpp"

namespace agentmon {

enum class ChatRole { Policy, Critic, Abstractor };

namespace detail {

inline std::string env_or_empty(const std::string& name) {
    if (name.empty()) return "";
    const char* v = std::getenv(name.c_str());
    return v == nullptr ? "" : v;
}

inline HttpEndpoint endpoint_from(const BackendConfig& b) {
    HttpEndpoint ep;
    ep.base_url = b.endpoint;
    ep.api_key = env_or_empty(b.api_key_env);
    ep.timeout_ms = b.timeout_ms;
    ep.retry.attempts = b.retry_attempts;
    ep.retry.base_delay_ms = b.retry_base_delay_ms;
    return ep;
}

// Role defaults so fully mocked runs terminate and stay parseable. Each
// response is a pure function of the request fingerprint.
inline ChatResponse mock_chat_response(ChatRole role, const ChatRequest& req) {
    std::string fp = to_hex(MockChatBackend::fingerprint(req));
    ChatResponse r;
    switch (role) {
        case ChatRole::Policy: {
            std::string reasoning = "Mock policy reply.";
            r.text = reasoning + "\n<answer>mock answer (" + fp.substr(0, 8) + ")</answer>";
            r.token_logprobs = one_hot_logprobs(reasoning, 3);
            break;
        }
        case ChatRole::Critic:
            r.text =
                "```json\n{\"error\": false, \"suggestion\": \"\", \"rationale\": \"mock critic\"}\n```";
            break;
        case ChatRole::Abstractor:
            r.text = "{\"behavior_pattern\": \"mock pattern\", \"evidence\": \"request " +
                     fp.substr(0, 12) + "\", \"insight\": \"mock insight " + fp.substr(0, 12) + "\"}";
            break;
    }
    return r;
}

}  // namespace detail

inline std::unique_ptr<ChatBackend> make_chat_backend(const BackendConfig& b, ChatRole role) {
    if (b.kind == "http") {
        return std::make_unique<HttpChatBackend>(detail::endpoint_from(b), b.model);
    }
    auto mock = std::make_unique<MockChatBackend>();
    mock->add_rule([](const ChatRequest&) { return true; },
                   [role](const ChatRequest& req) { return detail::mock_chat_response(role, req); });
    return mock;
}

inline std::unique_ptr<EmbeddingBackend> make_embedding_backend(const BackendConfig& b,
                                                                std::uint64_t seed) {
    if (b.kind == "http") {
        return std::make_unique<HttpEmbeddingBackend>(detail::endpoint_from(b), b.model);
    }
    return std::make_unique<MockEmbeddingBackend>(static_cast<std::size_t>(b.dim), seed);
}

inline std::unique_ptr<SearchBackend> make_search_backend(const BackendConfig& b,
                                                          const PathsConfig& paths) {
    if (b.kind == "http") {
        HttpEndpoint extract;
        if (!b.extract_endpoint.empty()) {
            extract.base_url = b.extract_endpoint;
            extract.api_key = detail::env_or_empty(b.extract_api_key_env);
            extract.timeout_ms = b.timeout_ms;
            extract.retry.attempts = b.retry_attempts;
            extract.retry.base_delay_ms = b.retry_base_delay_ms;
        }
        return std::make_unique<HttpSearchBackend>(detail::endpoint_from(b), std::move(extract));
    }
    if (b.kind == "fixture") {
        return std::make_unique<FixtureSearchBackend>(paths.fixture_corpus);
    }
    return std::make_unique<MockSearchBackend>();
}

struct BackendSet {
    std::unique_ptr<ChatBackend> policy;
    std::unique_ptr<ChatBackend> critic;
    std::unique_ptr<ChatBackend> abstractor;
    std::unique_ptr<EmbeddingBackend> embedding;
    std::unique_ptr<SearchBackend> search;
};

inline BackendSet make_backends(const Config& c) {
    BackendSet s;
    s.policy = make_chat_backend(c.policy, ChatRole::Policy);
    s.critic = make_chat_backend(c.critic, ChatRole::Critic);
    s.abstractor = make_chat_backend(c.abstractor, ChatRole::Abstractor);
    s.embedding = make_embedding_backend(c.embedding, c.seed);
    s.search = make_search_backend(c.search, c.paths);
    return s;
}

}  // namespace agentmon
