#pragma once
// Dual-pool experience memory: success exemplars and failure patterns, each
// entry carrying a session snapshot, a history summary, a label-conditioned
// abstraction and a precomputed embedding (f_enc(snapshot) + f_enc(history),
// elementwise). Retrieval is an exact cosine scan per pool; insertion
// deduplicates against the entry's own pool at tau_dup.
//
// Store file: line-delimited JSON. Line 1 header {schema_version, embed_dim,
// tau_dup, embedding_model_id}, then one entry record per line.

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agentmon/abstraction.hpp"
#include "agentmon/backends.hpp"
#include "agentmon/jsonio.hpp"
#include "agentmon/trajectory.hpp"

namespace agentmon {

enum class MemoryOrigin { Offline, Online };

inline std::string to_string(MemoryOrigin o) {
    return o == MemoryOrigin::Offline ? "offline" : "online";
}
inline MemoryOrigin memory_origin_from_string(const std::string& s) {
    if (s == "offline") return MemoryOrigin::Offline;
    if (s == "online") return MemoryOrigin::Online;
    throw SchemaViolation("unknown memory origin '" + s + "'");
}

struct Provenance {
    std::string trajectory_id;
    int session_index = 0;
    std::string created_at;  // ISO-8601 UTC, informational only
    MemoryOrigin origin = MemoryOrigin::Offline;
    std::string template_id;  // which abstraction template produced z

    bool operator==(const Provenance&) const = default;
};

struct MemoryEntry {
    std::string entry_id;
    json session_snapshot;        // {query, reasoning, action, observation}
    std::string history_summary;  // h
    std::string abstraction;      // z, non-empty
    Label label = Label::Success; // y, decides pool membership
    EmbeddingVector embedding;
    Provenance provenance;

    bool operator==(const MemoryEntry&) const = default;
};

struct MemoryStore {
    std::vector<MemoryEntry> success_pool;
    std::vector<MemoryEntry> failure_pool;
    double tau_dup = 0.95;
    std::size_t embed_dim = 0;  // 0 until the first insert or load fixes it
    std::string embedding_model_id;

    std::vector<MemoryEntry>& pool(Label l) {
        return l == Label::Success ? success_pool : failure_pool;
    }
    const std::vector<MemoryEntry>& pool(Label l) const {
        return l == Label::Success ? success_pool : failure_pool;
    }
    std::size_t size() const { return success_pool.size() + failure_pool.size(); }

    bool operator==(const MemoryStore&) const = default;
};

struct RetrievalResult {
    std::vector<std::pair<MemoryEntry, double>> success_hits;  // R+, similarity desc
    std::vector<std::pair<MemoryEntry, double>> failure_hits;  // R-
};

enum class InsertResult { Inserted, DiscardedDuplicate };

// ---------------------------------------------------------------------------
// session snapshots

// Fixed deterministic template so embeddings are reproducible from logs.
// Observations are condensed to their first 1,000 characters.
inline json make_session_snapshot(const std::string& query_text, const Session& session) {
    json j;
    j["query"] = query_text;
    j["reasoning"] = session.reasoning_text;
    j["action"] = describe_action(session.action);
    j["observation"] = truncate_utf8_safe(session.tool_observation, 1000);
    return j;
}

inline std::string snapshot_text(const json& snapshot) {
    return "Query: " + field_or<std::string>(snapshot, "query", "") +
           "\nReasoning: " + field_or<std::string>(snapshot, "reasoning", "") +
           "\nAction: " + field_or<std::string>(snapshot, "action", "") +
           "\nObservation: " + field_or<std::string>(snapshot, "observation", "");
}

// ---------------------------------------------------------------------------
// operations

struct EntryContext {
    std::string query_text;
    std::string trajectory_id;
    MemoryOrigin origin = MemoryOrigin::Offline;
    std::string created_at;  // caller-supplied clock value
};

// Builds one memory entry from a session plus its in-trajectory history.
// embedding = f_enc(snapshot text) + f_enc(history summary), elementwise.
inline MemoryEntry build_entry(const Session& session, std::span<const Session> history, Label label,
                               Abstractor& abstractor, EmbeddingBackend& embedder,
                               const EntryContext& ctx) {
    MemoryEntry e;
    e.entry_id = ctx.trajectory_id + "#" + std::to_string(session.index);
    e.session_snapshot = make_session_snapshot(ctx.query_text, session);
    e.history_summary = abstractor.summarize_history(history);
    std::string snap_text = snapshot_text(e.session_snapshot);
    e.abstraction = abstractor.abstract_session(snap_text, e.history_summary, label);
    if (e.abstraction.empty()) throw AbstractionFailed("abstractor produced empty abstraction");
    e.label = label;

    std::vector<EmbeddingVector> vecs = embedder.embed({snap_text, e.history_summary});
    if (vecs[0].dim() != vecs[1].dim()) {
        throw DimMismatch("embedding backend returned inconsistent dims");
    }
    e.embedding = vecs[0];
    for (std::size_t i = 0; i < e.embedding.values.size(); ++i) {
        e.embedding.values[i] += vecs[1].values[i];
    }

    e.provenance.trajectory_id = ctx.trajectory_id;
    e.provenance.session_index = session.index;
    e.provenance.created_at = ctx.created_at;
    e.provenance.origin = ctx.origin;
    e.provenance.template_id = Abstractor::template_id(label);
    return e;
}

// Deduplicating insertion. Similarity is checked only against the entry's
// own pool; max over an empty pool counts as -1 so empty pools always accept.
inline InsertResult insert(MemoryStore& store, MemoryEntry entry) {
    if (entry.abstraction.empty()) throw SchemaViolation("memory entry with empty abstraction");
    if (store.embed_dim == 0) {
        store.embed_dim = entry.embedding.dim();
        if (store.embed_dim == 0) throw DimMismatch("memory entry with empty embedding");
    } else if (entry.embedding.dim() != store.embed_dim) {
        throw DimMismatch("memory insert: entry dim " + std::to_string(entry.embedding.dim()) +
                          " vs store dim " + std::to_string(store.embed_dim));
    }
    for (const auto& existing : store.success_pool) {
        if (existing.entry_id == entry.entry_id) return InsertResult::DiscardedDuplicate;
    }
    for (const auto& existing : store.failure_pool) {
        if (existing.entry_id == entry.entry_id) return InsertResult::DiscardedDuplicate;
    }
    double max_sim = -1.0;
    for (const auto& existing : store.pool(entry.label)) {
        max_sim = std::max(max_sim, cosine_similarity(existing.embedding, entry.embedding));
    }
    if (max_sim >= store.tau_dup) return InsertResult::DiscardedDuplicate;
    store.pool(entry.label).push_back(std::move(entry));
    return InsertResult::Inserted;
}

namespace detail {

inline void top_k_scan(const std::vector<MemoryEntry>& pool, const EmbeddingVector& query,
                       std::size_t k, std::vector<std::pair<MemoryEntry, double>>& out) {
    std::vector<std::pair<double, const MemoryEntry*>> scored;
    scored.reserve(pool.size());
    for (const auto& e : pool) scored.emplace_back(cosine_similarity(e.embedding, query), &e);
    std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second->entry_id < y.second->entry_id;
    });
    for (std::size_t i = 0; i < scored.size() && i < k; ++i) {
        out.emplace_back(*scored[i].second, scored[i].first);
    }
}

}  // namespace detail

// Exact top-k cosine scan per pool, ties broken by entry_id ascending. The
// query embedding is f_enc of the snapshot text alone (no history term).
inline RetrievalResult retrieve(const MemoryStore& store, const std::string& query_snapshot_text,
                                EmbeddingBackend& embedder, int k_per_pool) {
    if (k_per_pool < 1) throw SchemaViolation("retrieve: k_per_pool must be >= 1");
    RetrievalResult out;
    if (store.size() == 0) return out;
    EmbeddingVector query = embedder.embed_one(query_snapshot_text);
    if (store.embed_dim != 0 && query.dim() != store.embed_dim) {
        throw DimMismatch("retrieve: query dim " + std::to_string(query.dim()) + " vs store dim " +
                          std::to_string(store.embed_dim));
    }
    detail::top_k_scan(store.success_pool, query, static_cast<std::size_t>(k_per_pool),
                       out.success_hits);
    detail::top_k_scan(store.failure_pool, query, static_cast<std::size_t>(k_per_pool),
                       out.failure_hits);
    return out;
}

inline RetrievalResult retrieve(const MemoryStore& store, const std::string& query_text,
                                const Session& session, EmbeddingBackend& embedder,
                                int k_per_pool) {
    return retrieve(store, snapshot_text(make_session_snapshot(query_text, session)), embedder,
                    k_per_pool);
}

// Online supervision signal for a completed session: a failure only when the
// slow monitor actually ran and confirmed an error. Unflagged sessions and
// flagged-but-cleared sessions count as successes.
inline Label label_online(const Session& session, bool fast_flagged,
                          const std::optional<Critique>& critique) {
    (void)session;
    (void)fast_flagged;  // a flag alone is a suspicion, not a confirmed error
    if (critique && critique->err == 1) return Label::Failure;
    return Label::Success;
}

// ---------------------------------------------------------------------------
// persistence

namespace detail {

inline json entry_to_json(const MemoryEntry& e) {
    json j;
    j["entry_id"] = e.entry_id;
    j["session_snapshot"] = e.session_snapshot;
    j["history_summary"] = e.history_summary;
    j["abstraction"] = e.abstraction;
    j["label"] = to_string(e.label);
    j["embedding"] = e.embedding.values;
    j["provenance"] = {{"trajectory_id", e.provenance.trajectory_id},
                       {"session_index", e.provenance.session_index},
                       {"created_at", e.provenance.created_at},
                       {"origin", to_string(e.provenance.origin)},
                       {"template_id", e.provenance.template_id}};
    return j;
}

inline MemoryEntry entry_from_json(const json& j, const char* ctx) {
    MemoryEntry e;
    e.entry_id = require_as<std::string>(j, "entry_id", ctx);
    e.session_snapshot = require_field(j, "session_snapshot", ctx);
    e.history_summary = require_as<std::string>(j, "history_summary", ctx);
    e.abstraction = require_as<std::string>(j, "abstraction", ctx);
    e.label = label_from_string(require_as<std::string>(j, "label", ctx));
    e.embedding.values = require_as<std::vector<double>>(j, "embedding", ctx);
    const json& p = require_field(j, "provenance", ctx);
    e.provenance.trajectory_id = require_as<std::string>(p, "trajectory_id", ctx);
    e.provenance.session_index = require_as<int>(p, "session_index", ctx);
    e.provenance.created_at = field_or<std::string>(p, "created_at", "");
    e.provenance.origin = memory_origin_from_string(require_as<std::string>(p, "origin", ctx));
    e.provenance.template_id = field_or<std::string>(p, "template_id", "");
    return e;
}

}  // namespace detail

inline std::string store_to_string(const MemoryStore& store) {
    json header;
    header["schema_version"] = "1";
    header["embed_dim"] = store.embed_dim;
    header["tau_dup"] = store.tau_dup;
    header["embedding_model_id"] = store.embedding_model_id;
    std::string out = header.dump();
    out.push_back('\n');
    for (const auto& e : store.success_pool) {
        out += detail::entry_to_json(e).dump();
        out.push_back('\n');
    }
    for (const auto& e : store.failure_pool) {
        out += detail::entry_to_json(e).dump();
        out.push_back('\n');
    }
    return out;
}

inline MemoryStore store_from_string(const std::string& text) {
    std::vector<std::string> lines;
    size_t start = 0;
    while (start < text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw ParseError("empty memory store file", 1);

    json header = parse_json_line(lines[0], 1);
    std::string version = require_as<std::string>(header, "schema_version", "store header");
    if (version != "1") throw UnsupportedVersion("unsupported memory store schema version '" + version + "'");

    MemoryStore store;
    store.embed_dim = require_as<std::size_t>(header, "embed_dim", "store header");
    store.tau_dup = require_as<double>(header, "tau_dup", "store header");
    store.embedding_model_id = field_or<std::string>(header, "embedding_model_id", "");
    if (!(store.tau_dup > 0.0) || store.tau_dup > 1.0) {
        throw SchemaViolation("store tau_dup must be in (0, 1]");
    }

    for (size_t i = 1; i < lines.size(); ++i) {
        json rec = parse_json_line(lines[i], static_cast<int>(i + 1));
        std::string ctx = "memory entry at line " + std::to_string(i + 1);
        MemoryEntry e = detail::entry_from_json(rec, ctx.c_str());
        if (e.abstraction.empty()) throw SchemaViolation(ctx + ": empty abstraction");
        if (store.embed_dim != 0 && e.embedding.dim() != store.embed_dim) {
            throw SchemaViolation(ctx + ": embedding dim mismatch with header");
        }
        store.pool(e.label).push_back(std::move(e));
    }

    // pool invariants: ids disjoint across pools, dedup holds within pools
    std::vector<std::string> ids;
    ids.reserve(store.size());
    for (const auto& e : store.success_pool) ids.push_back(e.entry_id);
    for (const auto& e : store.failure_pool) ids.push_back(e.entry_id);
    std::sort(ids.begin(), ids.end());
    auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end()) {
        throw SchemaViolation("memory store has duplicate entry_id '" + *dup + "'");
    }
    auto check_dedup = [&](const std::vector<MemoryEntry>& pool, const char* name) {
        if (pool.size() > 2000) return;  // insert path guarantees this; skip the O(n^2) recheck
        for (std::size_t i = 0; i < pool.size(); ++i) {
            for (std::size_t j = i + 1; j < pool.size(); ++j) {
                if (cosine_similarity(pool[i].embedding, pool[j].embedding) >= store.tau_dup) {
                    throw SchemaViolation(std::string("memory store ") + name +
                                          " pool violates the dedup invariant (" + pool[i].entry_id +
                                          " vs " + pool[j].entry_id + ")");
                }
            }
        }
    };
    check_dedup(store.success_pool, "success");
    check_dedup(store.failure_pool, "failure");
    return store;
}

inline void save_store(const MemoryStore& store, const std::string& path) {
    write_file(path, store_to_string(store));
}

inline MemoryStore load_store(const std::string& path) {
    return store_from_string(read_file(path));
}

}  // namespace agentmon
