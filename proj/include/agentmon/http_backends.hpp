#pragma once
// HTTP implementations of the backend contracts. The chat and embedding
// clients speak the OpenAI-compatible wire format (chat/completions with
// logprobs, embeddings); the search client posts {"q", "num"} to a JSON web
// search endpoint and optionally fetches page text through an extraction
// endpoint. All clients share the retry policy: exponential backoff, then
// BackendUnavailable.

#include <memory>
#include <string>
#include <vector>

#include "httplib.h"

#include "agentmon/backends.hpp"
#include "agentmon/jsonio.hpp"

namespace agentmon {

struct HttpEndpoint {
    std::string base_url;  // e.g. https://api.example.com
    std::string path;      // e.g. /v1/chat/completions
    std::string api_key;   // empty: no Authorization header
    int timeout_ms = 60000;
    RetryPolicy retry;
};

namespace detail {

// Splits "https://host:port/some/base" into (scheme://host:port, /some/base).
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    size_t scheme = url.find("://");
    size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
    size_t slash = url.find('/', host_start);
    if (slash == std::string::npos) return {url, ""};
    return {url.substr(0, slash), url.substr(slash)};
}

inline json http_post_json(const HttpEndpoint& ep, const json& body, const SleepFn& sleep,
                           const char* what) {
    return with_retries(ep.retry, sleep, what, [&]() -> json {
        auto [origin, base_path] = split_url(ep.base_url);
        httplib::Client client(origin);
        client.set_connection_timeout(ep.timeout_ms / 1000, (ep.timeout_ms % 1000) * 1000);
        client.set_read_timeout(ep.timeout_ms / 1000, (ep.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);
        auto res = client.Post(base_path + ep.path, headers, body.dump(), "application/json");
        if (!res) {
            throw Error(std::string(what) + ": transport error " +
                        httplib::to_string(res.error()));
        }
        if (res->status < 200 || res->status >= 300) {
            throw Error(std::string(what) + ": HTTP " + std::to_string(res->status) + " " +
                        res->body.substr(0, 512));
        }
        json parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) {
            throw Error(std::string(what) + ": response body is not JSON");
        }
        return parsed;
    });
}

}  // namespace detail

class HttpChatBackend : public ChatBackend {
public:
    HttpChatBackend(HttpEndpoint endpoint, std::string model, SleepFn sleep = {})
        : endpoint_(std::move(endpoint)), model_(std::move(model)), sleep_(std::move(sleep)) {
        if (endpoint_.path.empty()) endpoint_.path = "/v1/chat/completions";
    }

    ChatResponse chat(const ChatRequest& request) override {
        if (request.messages.empty()) throw SchemaViolation("chat request has no messages");
        if (request.want_logprobs && request.top_logprobs < 1) {
            throw SchemaViolation("want_logprobs requires top_logprobs >= 1");
        }
        json body;
        body["model"] = model_;
        json messages = json::array();
        for (const auto& m : request.messages) {
            messages.push_back({{"role", m.role}, {"content", m.content}});
        }
        body["messages"] = std::move(messages);
        body["temperature"] = request.temperature;
        body["max_tokens"] = request.max_tokens;
        if (request.want_logprobs) {
            body["logprobs"] = true;
            body["top_logprobs"] = request.top_logprobs;
        }

        json resp = detail::http_post_json(endpoint_, body, sleep_, "chat backend");
        const json& choices = require_field(resp, "choices", "chat response");
        if (!choices.is_array() || choices.empty()) {
            throw BackendUnavailable("chat backend returned no choices");
        }
        const json& choice = choices[0];

        ChatResponse out;
        const json& message = require_field(choice, "message", "chat response");
        out.text = field_or<std::string>(message, "content", "");
        std::string reason = field_or<std::string>(choice, "finish_reason", "stop");
        out.finish_reason = reason == "stop"     ? FinishReason::Stop
                            : reason == "length" ? FinishReason::Length
                                                 : FinishReason::Error;

        if (request.want_logprobs) {
            if (!choice.contains("logprobs") || choice["logprobs"].is_null() ||
                !choice["logprobs"].contains("content")) {
                throw CapabilityMissing("chat endpoint did not return token logprobs");
            }
            for (const auto& position : choice["logprobs"]["content"]) {
                std::vector<TokenCandidate> cands;
                if (position.contains("top_logprobs") && position["top_logprobs"].is_array() &&
                    !position["top_logprobs"].empty()) {
                    for (const auto& alt : position["top_logprobs"]) {
                        cands.push_back({field_or<std::string>(alt, "token", ""),
                                         field_or<double>(alt, "logprob", 0.0)});
                    }
                } else {
                    cands.push_back({field_or<std::string>(position, "token", ""),
                                     field_or<double>(position, "logprob", 0.0)});
                }
                // keep the sampled token first for reasoning-segment alignment
                std::string sampled = field_or<std::string>(position, "token", "");
                for (std::size_t i = 0; i < cands.size(); ++i) {
                    if (cands[i].token == sampled && i != 0) {
                        std::swap(cands[0], cands[i]);
                        break;
                    }
                }
                if (!cands.empty() && cands[0].token != sampled && !sampled.empty()) {
                    cands.insert(cands.begin(),
                                 {sampled, field_or<double>(position, "logprob", 0.0)});
                }
                out.token_logprobs.push_back(std::move(cands));
            }
        }
        return out;
    }

private:
    HttpEndpoint endpoint_;
    std::string model_;
    SleepFn sleep_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    HttpEmbeddingBackend(HttpEndpoint endpoint, std::string model, SleepFn sleep = {})
        : endpoint_(std::move(endpoint)), model_(std::move(model)), sleep_(std::move(sleep)) {
        if (endpoint_.path.empty()) endpoint_.path = "/v1/embeddings";
    }

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw EmptyInput("embed: empty text list");
        for (const auto& t : texts) {
            if (t.empty()) throw EmptyInput("embed: empty text");
        }
        json body;
        body["model"] = model_;
        body["input"] = texts;
        json resp = detail::http_post_json(endpoint_, body, sleep_, "embedding backend");
        const json& data = require_field(resp, "data", "embedding response");
        if (!data.is_array() || data.size() != texts.size()) {
            throw BackendUnavailable("embedding backend returned wrong item count");
        }
        std::vector<EmbeddingVector> out(texts.size());
        for (const auto& item : data) {
            std::size_t index = require_as<std::size_t>(item, "index", "embedding response");
            if (index >= out.size()) throw BackendUnavailable("embedding response index out of range");
            out[index].values = require_as<std::vector<double>>(item, "embedding", "embedding response");
        }
        std::size_t dim = out[0].dim();
        for (const auto& v : out) {
            if (v.dim() != dim) throw DimMismatch("embedding backend returned inconsistent dims");
        }
        if (dim_seen_ == 0) dim_seen_ = dim;
        else if (dim != dim_seen_) throw DimMismatch("embedding dim drifted between calls");
        return out;
    }

private:
    HttpEndpoint endpoint_;
    std::string model_;
    SleepFn sleep_;
    std::size_t dim_seen_ = 0;
};

// Web search + page extraction. The search endpoint receives {"q": query,
// "num": top_k} and must answer {"organic": [{title, link, snippet}, ...]}.
// When an extraction endpoint is configured, each result link is fetched
// through GET <extract_endpoint>/<url> and the returned text becomes the
// document content; otherwise the snippet is used.
class HttpSearchBackend : public SearchBackend {
public:
    HttpSearchBackend(HttpEndpoint search_endpoint, HttpEndpoint extract_endpoint = {},
                      SleepFn sleep = {})
        : search_(std::move(search_endpoint)),
          extract_(std::move(extract_endpoint)),
          sleep_(std::move(sleep)) {}

    SearchResultSet search(const std::string& query_string, int top_k) override {
        if (query_string.empty()) throw EmptyInput("search: empty query");
        if (top_k < 1) throw SchemaViolation("search: top_k must be >= 1");
        json body;
        body["q"] = query_string;
        body["num"] = top_k;
        json resp = detail::http_post_json(search_, body, sleep_, "search backend");

        SearchResultSet out;
        out.query_string = query_string;
        const json& organic = field_or<json>(resp, "organic", json::array());
        for (const auto& item : organic) {
            if (static_cast<int>(out.documents.size()) >= top_k) break;
            RetrievedDocument d;
            d.title = field_or<std::string>(item, "title", "");
            std::string link = field_or<std::string>(item, "link", "");
            d.doc_id = link.empty() ? ("result-" + std::to_string(out.documents.size() + 1)) : link;
            d.content = field_or<std::string>(item, "snippet", "");
            if (!extract_.base_url.empty() && !link.empty()) {
                try {
                    d.content = fetch_extracted(link);
                } catch (const std::exception&) {
                    // dead link: keep the snippet, the agent can retry
                }
            }
            if (d.content.empty()) continue;
            d.rank = static_cast<int>(out.documents.size()) + 1;
            out.documents.push_back(std::move(d));
        }
        return out;
    }

private:
    std::string fetch_extracted(const std::string& url) {
        return with_retries(extract_.retry, sleep_, "extraction backend", [&]() -> std::string {
            auto [origin, base_path] = detail::split_url(extract_.base_url);
            httplib::Client client(origin);
            client.set_connection_timeout(extract_.timeout_ms / 1000,
                                          (extract_.timeout_ms % 1000) * 1000);
            client.set_read_timeout(extract_.timeout_ms / 1000, (extract_.timeout_ms % 1000) * 1000);
            httplib::Headers headers;
            if (!extract_.api_key.empty()) {
                headers.emplace("Authorization", "Bearer " + extract_.api_key);
            }
            auto res = client.Get(base_path + "/" + url, headers);
            if (!res) {
                throw Error("extraction: transport error " + httplib::to_string(res.error()));
            }
            if (res->status < 200 || res->status >= 300) {
                throw Error("extraction: HTTP " + std::to_string(res->status));
            }
            return res->body;
        });
    }

    HttpEndpoint search_;
    HttpEndpoint extract_;
    SleepFn sleep_;
};

}  // namespace agentmon
