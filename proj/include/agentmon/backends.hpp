#pragma once
// Backend contracts for the three external capabilities (chat completion
// with token logprobs, text embedding, document search) and deterministic
// in-process implementations used by tests, fixtures and offline tooling.
// HTTP implementations live in http_backends.hpp.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "agentmon/jsonio.hpp"
#include "agentmon/trajectory.hpp"
#include "agentmon/util.hpp"

namespace agentmon {

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    bool want_logprobs = false;
    int top_logprobs = 20;  // candidates per position when want_logprobs
    double temperature = 0.0;
    int max_tokens = 4096;
};

enum class FinishReason { Stop, Length, Error };

struct ChatResponse {
    std::string text;
    TokenLogprobs token_logprobs;  // present iff logprobs were requested and supported
    FinishReason finish_reason = FinishReason::Stop;
};

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }

    bool operator==(const EmbeddingVector&) const = default;
};

struct SearchResultSet {
    std::string query_string;
    std::vector<RetrievedDocument> documents;  // ranked, |documents| <= requested top_k
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse chat(const ChatRequest& request) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    // One vector per input text, order preserving, stable dimension.
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;

    EmbeddingVector embed_one(const std::string& text) {
        return embed(std::vector<std::string>{text}).front();
    }
};

class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual SearchResultSet search(const std::string& query_string, int top_k) = 0;
};

struct RetryPolicy {
    int attempts = 3;
    int base_delay_ms = 1000;  // doubles after every failed attempt
};

using SleepFn = std::function<void(int /*ms*/)>;

inline void default_sleep(int ms) {
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

// Runs `op` up to policy.attempts times, sleeping base*2^i after the i-th
// failure, then surfaces BackendUnavailable carrying the last error.
template <typename Op>
auto with_retries(const RetryPolicy& policy, const SleepFn& sleep, const char* what, Op&& op)
    -> decltype(op()) {
    std::string last_error = "no attempts made";
    int delay = policy.base_delay_ms;
    for (int attempt = 0; attempt < std::max(1, policy.attempts); ++attempt) {
        try {
            return op();
        } catch (const CapabilityMissing&) {
            throw;  // not a transport problem, retrying cannot help
        } catch (const std::exception& e) {
            last_error = e.what();
            (sleep ? sleep : default_sleep)(delay);
            delay *= 2;
        }
    }
    throw BackendUnavailable(std::string(what) + ": giving up after " +
                             std::to_string(std::max(1, policy.attempts)) +
                             " attempts (last error: " + last_error + ")");
}

// ---------------------------------------------------------------------------
// similarity helpers

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
    return s;
}

inline double l2_norm(const EmbeddingVector& v) { return std::sqrt(dot(v, v)); }

// Zero-norm convention: two zero vectors are identical (1), a zero vector
// against anything else is unrelated (0).
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw DimMismatch("cosine_similarity: dims " + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()));
    }
    double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return (na == 0.0 && nb == 0.0) ? 1.0 : 0.0;
    return dot(a, b) / (na * nb);
}

inline double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    return 1.0 - cosine_similarity(a, b);
}

// ---------------------------------------------------------------------------
// deterministic mock backends

// Scripted chat backend: an ordered rule list; the first rule whose predicate
// accepts the request produces the response. No matching rule is a hard
// failure so scenario fixtures cannot silently drift.
class MockChatBackend : public ChatBackend {
public:
    using Predicate = std::function<bool(const ChatRequest&)>;
    using Responder = std::function<ChatResponse(const ChatRequest&)>;

    MockChatBackend& add_rule(Predicate pred, ChatResponse response) {
        rules_.push_back({std::move(pred),
                          [response = std::move(response)](const ChatRequest&) { return response; }});
        return *this;
    }

    // For responses that depend on the request (still pure functions of it).
    MockChatBackend& add_rule(Predicate pred, Responder responder) {
        rules_.push_back({std::move(pred), std::move(responder)});
        return *this;
    }

    // Exact-fingerprint scripting, for request -> response tables.
    MockChatBackend& add_exact(std::uint64_t request_fingerprint, ChatResponse response) {
        return add_rule(
            [request_fingerprint](const ChatRequest& r) {
                return fingerprint(r) == request_fingerprint;
            },
            std::move(response));
    }

    MockChatBackend& set_supports_logprobs(bool v) {
        supports_logprobs_ = v;
        return *this;
    }

    static std::uint64_t fingerprint(const ChatRequest& r) {
        std::uint64_t h = 0;
        for (const auto& m : r.messages) {
            h = fnv1a64(m.role, h);
            h = fnv1a64(m.content, h);
        }
        h = fnv1a64(r.want_logprobs ? "L" : "-", h);
        return h;
    }

    ChatResponse chat(const ChatRequest& request) override {
        if (request.want_logprobs && request.top_logprobs < 1) {
            throw SchemaViolation("want_logprobs requires top_logprobs >= 1");
        }
        if (request.want_logprobs && !supports_logprobs_) {
            throw CapabilityMissing("mock chat backend was configured without logprob support");
        }
        if (request.messages.empty()) throw SchemaViolation("chat request has no messages");
        for (const auto& rule : rules_) {
            if (rule.pred(request)) {
                ChatResponse r = rule.respond(request);
                if (!request.want_logprobs) r.token_logprobs.clear();
                return r;
            }
        }
        throw BackendUnavailable("mock chat backend: no scripted response for request fingerprint " +
                                 to_hex(fingerprint(request)));
    }

private:
    struct Rule {
        Predicate pred;
        Responder respond;
    };
    std::vector<Rule> rules_;
    bool supports_logprobs_ = true;
};

// One-hot logprobs tiling `text` into roughly `positions` chunks, so scripted
// responses can carry a consistent token stream (entropy 0).
inline TokenLogprobs one_hot_logprobs(const std::string& text, std::size_t positions = 4) {
    TokenLogprobs out;
    if (text.empty() || positions == 0) return out;
    std::size_t chunk = std::max<std::size_t>(1, text.size() / positions);
    for (std::size_t off = 0; off < text.size(); off += chunk) {
        out.push_back({TokenCandidate{text.substr(off, chunk), 0.0}});
    }
    return out;
}

// Hashed character n-gram embedding: deterministic, similarity-meaningful,
// no model dependency. n = 3, fixed dimension, L2-normalized output.
class MockEmbeddingBackend : public EmbeddingBackend {
public:
    explicit MockEmbeddingBackend(std::size_t dim = 256, std::uint64_t seed = 0)
        : dim_(dim), seed_(0x9e3779b97f4a7c15ull ^ seed) {
        if (dim_ == 0) throw SchemaViolation("embedding dim must be positive");
    }

    std::size_t dim() const { return dim_; }

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw EmptyInput("embed: empty text list");
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) {
            if (t.empty()) throw EmptyInput("embed: empty text");
            out.push_back(embed_text(t));
        }
        return out;
    }

private:
    EmbeddingVector embed_text(const std::string& text) const {
        EmbeddingVector v;
        v.values.assign(dim_, 0.0);
        const std::size_t n = 3;
        auto add_gram = [&](std::string_view gram) {
            std::uint64_t h = fnv1a64(gram, seed_);
            double sign = (h >> 63) ? -1.0 : 1.0;
            v.values[h % dim_] += sign;
        };
        if (text.size() < n) {
            add_gram(text);
        } else {
            for (std::size_t i = 0; i + n <= text.size(); ++i) {
                add_gram(std::string_view(text).substr(i, n));
            }
        }
        double norm = l2_norm(v);
        if (norm == 0.0) {
            v.values[0] = 1.0;  // opposite-sign collisions cancelled everything
        } else {
            for (double& x : v.values) x /= norm;
        }
        return v;
    }

    std::size_t dim_;
    std::uint64_t seed_;
};

// In-memory search table keyed by exact query string. Unknown queries return
// an empty result set (closed world).
class MockSearchBackend : public SearchBackend {
public:
    MockSearchBackend& add(const std::string& query, std::vector<RetrievedDocument> docs) {
        table_[query] = std::move(docs);
        return *this;
    }

    SearchResultSet search(const std::string& query_string, int top_k) override {
        if (query_string.empty()) throw EmptyInput("search: empty query");
        if (top_k < 1) throw SchemaViolation("search: top_k must be >= 1");
        SearchResultSet out;
        out.query_string = query_string;
        auto it = table_.find(query_string);
        if (it == table_.end()) return out;
        for (const auto& d : it->second) {
            if (static_cast<int>(out.documents.size()) >= top_k) break;
            out.documents.push_back(d);
            out.documents.back().rank = static_cast<int>(out.documents.size());
        }
        return out;
    }

private:
    std::map<std::string, std::vector<RetrievedDocument>> table_;
};

// ---------------------------------------------------------------------------
// fixture search backend: a local corpus directory with one subdirectory per
// query fingerprint, each holding ranked document files plus manifest.json
// {"query": ..., "documents": [{doc_id, title, file, rank}, ...]}

inline std::string query_fingerprint(const std::string& query_string) {
    return to_hex(fnv1a64(query_string));
}

class FixtureSearchBackend : public SearchBackend {
public:
    explicit FixtureSearchBackend(std::string corpus_dir) : corpus_dir_(std::move(corpus_dir)) {}

    SearchResultSet search(const std::string& query_string, int top_k) override {
        if (query_string.empty()) throw EmptyInput("search: empty query");
        if (top_k < 1) throw SchemaViolation("search: top_k must be >= 1");
        SearchResultSet out;
        out.query_string = query_string;
        namespace fs = std::filesystem;
        fs::path dir = fs::path(corpus_dir_) / query_fingerprint(query_string);
        fs::path manifest_path = dir / "manifest.json";
        if (!fs::exists(manifest_path)) return out;

        json manifest;
        try {
            manifest = json::parse(read_file(manifest_path.string()));
        } catch (const json::parse_error& e) {
            throw ParseError("fixture manifest " + manifest_path.string() + ": " + e.what());
        }
        const json& docs = require_field(manifest, "documents", "fixture manifest");
        std::vector<RetrievedDocument> loaded;
        for (const auto& d : docs) {
            RetrievedDocument doc;
            doc.doc_id = require_as<std::string>(d, "doc_id", "fixture manifest");
            doc.title = field_or<std::string>(d, "title", "");
            doc.rank = require_as<int>(d, "rank", "fixture manifest");
            std::string file = require_as<std::string>(d, "file", "fixture manifest");
            doc.content = read_file((dir / file).string());
            loaded.push_back(std::move(doc));
        }
        std::sort(loaded.begin(), loaded.end(),
                  [](const RetrievedDocument& a, const RetrievedDocument& b) { return a.rank < b.rank; });
        for (auto& d : loaded) {
            if (static_cast<int>(out.documents.size()) >= top_k) break;
            d.rank = static_cast<int>(out.documents.size()) + 1;
            out.documents.push_back(std::move(d));
        }
        return out;
    }

    // Writes one fixture directory for `query`. Used by tests and by corpus
    // preparation scripts.
    static void write_fixture(const std::string& corpus_dir, const std::string& query,
                              const std::vector<RetrievedDocument>& docs) {
        namespace fs = std::filesystem;
        fs::path dir = fs::path(corpus_dir) / query_fingerprint(query);
        fs::create_directories(dir);
        json manifest;
        manifest["query"] = query;
        json list = json::array();
        for (std::size_t i = 0; i < docs.size(); ++i) {
            std::string file = "doc_" + std::to_string(i + 1) + ".txt";
            write_file((dir / file).string(), docs[i].content);
            list.push_back({{"doc_id", docs[i].doc_id},
                            {"title", docs[i].title},
                            {"file", file},
                            {"rank", docs[i].rank}});
        }
        manifest["documents"] = std::move(list);
        write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
    }

private:
    std::string corpus_dir_;
};

}  // namespace agentmon
