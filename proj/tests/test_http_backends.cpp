// HTTP client tests against an in-process server.

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "httplib.h"

#include "agentmon/http_backends.hpp"

using namespace agentmon;

namespace {

class LocalServer {
public:
    LocalServer() = default;

    int start() {
        port_ = server.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
        return port_;
    }

    ~LocalServer() {
        server.stop();
        if (thread_.joinable()) thread_.join();
    }

    httplib::Server server;
    int port_ = 0;
    std::thread thread_;

    HttpEndpoint endpoint(const std::string& path, int attempts = 1, int delay_ms = 0) {
        HttpEndpoint ep;
        ep.base_url = "http://127.0.0.1:" + std::to_string(port_);
        ep.path = path;
        ep.api_key = "test-key";
        ep.timeout_ms = 2000;
        ep.retry = {attempts, delay_ms};
        return ep;
    }
};

json chat_completion_body(bool with_logprobs) {
    json position1 = {{"token", "Hello"},
                      {"logprob", -0.1},
                      {"top_logprobs", json::array({{{"token", "Hi"}, {"logprob", -2.5}},
                                                    {{"token", "Hello"}, {"logprob", -0.1}}})}};
    json position2 = {{"token", " there"}, {"logprob", -0.2}};
    json choice = {{"message", {{"role", "assistant"}, {"content", "Hello there"}}},
                   {"finish_reason", "stop"}};
    if (with_logprobs) {
        choice["logprobs"] = {{"content", json::array({position1, position2})}};
    }
    return json{{"choices", json::array({choice})}};
}

}  // namespace

TEST(HttpChat, ParsesContentAndLogprobs) {
    LocalServer local;
    std::string seen_auth, seen_body;
    local.server.Post("/v1/chat/completions",
                      [&](const httplib::Request& req, httplib::Response& res) {
                          seen_auth = req.get_header_value("Authorization");
                          seen_body = req.body;
                          res.set_content(chat_completion_body(true).dump(), "application/json");
                      });
    local.start();

    HttpChatBackend backend(local.endpoint("/v1/chat/completions"), "test-model");
    ChatRequest req;
    req.messages = {{"system", "be brief"}, {"user", "say hello"}};
    req.want_logprobs = true;
    req.top_logprobs = 5;
    ChatResponse resp = backend.chat(req);

    EXPECT_EQ(resp.text, "Hello there");
    EXPECT_EQ(resp.finish_reason, FinishReason::Stop);
    ASSERT_EQ(resp.token_logprobs.size(), 2u);
    // the sampled token is kept first even when the endpoint lists it second
    EXPECT_EQ(resp.token_logprobs[0][0].token, "Hello");
    EXPECT_DOUBLE_EQ(resp.token_logprobs[0][0].logprob, -0.1);
    EXPECT_EQ(resp.token_logprobs[0][1].token, "Hi");
    EXPECT_EQ(resp.token_logprobs[1][0].token, " there");

    EXPECT_EQ(seen_auth, "Bearer test-key");
    json body = json::parse(seen_body);
    EXPECT_EQ(body["model"], "test-model");
    EXPECT_EQ(body["logprobs"], true);
    EXPECT_EQ(body["top_logprobs"], 5);
    ASSERT_EQ(body["messages"].size(), 2u);
    EXPECT_EQ(body["messages"][1]["content"], "say hello");
}

TEST(HttpChat, MissingLogprobsIsCapabilityMissing) {
    LocalServer local;
    local.server.Post("/v1/chat/completions",
                      [&](const httplib::Request&, httplib::Response& res) {
                          res.set_content(chat_completion_body(false).dump(), "application/json");
                      });
    local.start();

    HttpChatBackend backend(local.endpoint("/v1/chat/completions"), "m");
    ChatRequest req;
    req.messages = {{"user", "hi"}};
    req.want_logprobs = true;
    EXPECT_THROW(backend.chat(req), CapabilityMissing);

    req.want_logprobs = false;
    EXPECT_EQ(backend.chat(req).text, "Hello there");
}

TEST(HttpChat, ServerErrorsExhaustRetriesThenBackendUnavailable) {
    LocalServer local;
    std::atomic<int> hits{0};
    local.server.Post("/v1/chat/completions",
                      [&](const httplib::Request&, httplib::Response& res) {
                          hits.fetch_add(1);
                          res.status = 503;
                          res.set_content("overloaded", "text/plain");
                      });
    local.start();

    HttpChatBackend backend(local.endpoint("/v1/chat/completions", 3, 1), "m");
    ChatRequest req;
    req.messages = {{"user", "hi"}};
    EXPECT_THROW(backend.chat(req), BackendUnavailable);
    EXPECT_EQ(hits.load(), 3);
}

TEST(HttpChat, RecoversAfterTransientFailure) {
    LocalServer local;
    std::atomic<int> hits{0};
    local.server.Post("/v1/chat/completions",
                      [&](const httplib::Request&, httplib::Response& res) {
                          if (hits.fetch_add(1) == 0) {
                              res.status = 500;
                              return;
                          }
                          res.set_content(chat_completion_body(false).dump(), "application/json");
                      });
    local.start();

    HttpChatBackend backend(local.endpoint("/v1/chat/completions", 3, 1), "m");
    ChatRequest req;
    req.messages = {{"user", "hi"}};
    EXPECT_EQ(backend.chat(req).text, "Hello there");
    EXPECT_EQ(hits.load(), 2);
}

TEST(HttpEmbedding, ParsesAndReordersByIndex) {
    LocalServer local;
    local.server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body);
        EXPECT_EQ(body["input"].size(), 2u);
        // respond out of order; the client must restore input order
        json resp = {{"data", json::array({{{"index", 1}, {"embedding", {0.0, 1.0}}},
                                           {{"index", 0}, {"embedding", {1.0, 0.0}}}})}};
        res.set_content(resp.dump(), "application/json");
    });
    local.start();

    HttpEmbeddingBackend backend(local.endpoint("/v1/embeddings"), "embed-model");
    auto vecs = backend.embed({"first", "second"});
    ASSERT_EQ(vecs.size(), 2u);
    EXPECT_EQ(vecs[0].values, (std::vector<double>{1.0, 0.0}));
    EXPECT_EQ(vecs[1].values, (std::vector<double>{0.0, 1.0}));
}

TEST(HttpEmbedding, DimDriftBetweenCallsRejected) {
    LocalServer local;
    std::atomic<int> calls{0};
    local.server.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        json vec = calls.fetch_add(0) == 0 ? json::array({1.0, 0.0}) : json::array({1.0, 0.0, 0.0});
        calls.fetch_add(1);
        json resp = {{"data", json::array({{{"index", 0}, {"embedding", vec}}})}};
        res.set_content(resp.dump(), "application/json");
    });
    local.start();

    HttpEmbeddingBackend backend(local.endpoint("/v1/embeddings"), "m");
    EXPECT_EQ(backend.embed({"a"})[0].dim(), 2u);
    EXPECT_THROW(backend.embed({"b"}), DimMismatch);
}

TEST(HttpSearch, SearchWithSnippetsAndOptionalExtraction) {
    LocalServer local;
    local.server.Post("/search", [&](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body);
        EXPECT_EQ(body["q"], "bridge year");
        EXPECT_EQ(body["num"], 3);
        json resp = {{"organic",
                      json::array({{{"title", "A"}, {"link", "http://a"}, {"snippet", "snippet a"}},
                                   {{"title", "B"}, {"link", "http://b"}, {"snippet", "snippet b"}},
                                   {{"title", "C"}, {"link", "http://c"}, {"snippet", "snippet c"}},
                                   {{"title", "D"}, {"link", "http://d"}, {"snippet", "ignored"}}})}};
        res.set_content(resp.dump(), "application/json");
    });
    local.start();

    HttpSearchBackend backend(local.endpoint("/search"));
    SearchResultSet got = backend.search("bridge year", 3);
    ASSERT_EQ(got.documents.size(), 3u);
    EXPECT_EQ(got.documents[0].content, "snippet a");
    EXPECT_EQ(got.documents[0].rank, 1);
    EXPECT_EQ(got.documents[2].doc_id, "http://c");
}

TEST(HttpSearch, ExtractionEndpointReplacesSnippets) {
    LocalServer local;
    local.server.Post("/search", [&](const httplib::Request&, httplib::Response& res) {
        json resp = {{"organic", json::array({{{"title", "A"},
                                               {"link", "http://target/page"},
                                               {"snippet", "short snippet"}}})}};
        res.set_content(resp.dump(), "application/json");
    });
    local.server.Get("/extract/(.*)", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content("full extracted page text", "text/plain");
    });
    local.start();

    HttpEndpoint extract = local.endpoint("");
    extract.base_url += "/extract";
    HttpSearchBackend backend(local.endpoint("/search"), extract);
    SearchResultSet got = backend.search("anything", 5);
    ASSERT_EQ(got.documents.size(), 1u);
    EXPECT_EQ(got.documents[0].content, "full extracted page text");
}
