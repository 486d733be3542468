#pragma once
// Canonical data model for queries, sessions and trajectories, plus the
// line-delimited log format every other module consumes.
//
// Log layout: UTF-8, one JSON record per line. Line 1 is the header
// {schema_version:"1", query_id, query_text, metadata, outcome, termination,
// config}; every following line is one session record. Field names are
// normative; unknown fields are ignored on read. `config` carries the
// effective run settings of the producing run and round-trips verbatim.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agentmon/jsonio.hpp"
#include "agentmon/util.hpp"

namespace agentmon {

struct Query {
    std::string id;
    std::string text;
    std::map<std::string, std::string> metadata;

    bool operator==(const Query&) const = default;
};

enum class ActionKind { ToolCall, Terminate };

struct Action {
    ActionKind kind = ActionKind::Terminate;
    std::string tool_name;    // ToolCall only
    json arguments;           // ToolCall only, JSON object
    std::string final_answer; // Terminate only

    static Action tool_call(std::string name, json args) {
        Action a;
        a.kind = ActionKind::ToolCall;
        a.tool_name = std::move(name);
        a.arguments = std::move(args);
        return a;
    }
    static Action terminate(std::string answer) {
        Action a;
        a.kind = ActionKind::Terminate;
        a.final_answer = std::move(answer);
        return a;
    }

    bool operator==(const Action&) const = default;
};

struct RetrievedDocument {
    std::string doc_id;
    std::string title;
    std::string content;
    int rank = 1;  // 1-based retrieval rank

    bool operator==(const RetrievedDocument&) const = default;
};

struct TokenCandidate {
    std::string token;
    double logprob = 0.0;

    bool operator==(const TokenCandidate&) const = default;
};

// One inner list per generated reasoning position, holding that position's
// top-K (token, logprob) alternatives as reported by the model endpoint.
using TokenLogprobs = std::vector<std::vector<TokenCandidate>>;

struct UncertaintySignals {
    double se = 0.0;       // searching entropy, nats
    double re = 0.0;       // reasoning entropy, nats
    double re_hat = 0.0;   // calibration prediction for re
    double epsilon = 0.0;  // re - re_hat
    bool anomaly = false;  // |epsilon| > k*sigma of the calibration used

    bool operator==(const UncertaintySignals&) const = default;
};

// Critic verdict. err == 0 implies delta is empty; err == 1 implies delta is
// non-empty. criticize() enforces this regardless of what the backend said.
struct Critique {
    int err = 0;
    std::string delta;
    std::string rationale;
    std::string raw;  // verbatim final backend output, kept for audit

    bool operator==(const Critique&) const = default;
};

struct Session {
    int index = 1;  // 1-based step number
    std::string reasoning_text;
    TokenLogprobs reasoning_token_logprobs;
    Action action;
    std::vector<RetrievedDocument> documents;
    std::string tool_observation;
    std::optional<UncertaintySignals> signals;
    std::optional<Critique> critique;

    bool operator==(const Session&) const = default;
};

enum class Outcome { Success, Failure, Unknown };
enum class Termination { Answered, MaxStepsExceeded, BackendError, Aborted };

struct Trajectory {
    Query query;
    std::vector<Session> sessions;
    Outcome outcome = Outcome::Unknown;
    Termination termination = Termination::Answered;
    json run_config = json::object();  // extra header payload, round-tripped

    bool operator==(const Trajectory&) const = default;
};

// Trajectory-level outcome label used by memory construction and calibration
// harvesting. Distinct from Outcome: live trajectories may be Unknown, labels
// may not.
enum class Label : int { Failure = 0, Success = 1 };

// ---------------------------------------------------------------------------
// enum <-> string

inline std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::Success: return "success";
        case Outcome::Failure: return "failure";
        case Outcome::Unknown: return "unknown";
    }
    return "unknown";
}

inline Outcome outcome_from_string(const std::string& s) {
    if (s == "success") return Outcome::Success;
    if (s == "failure") return Outcome::Failure;
    if (s == "unknown") return Outcome::Unknown;
    throw SchemaViolation("unknown outcome value '" + s + "'");
}

inline std::string to_string(Termination t) {
    switch (t) {
        case Termination::Answered: return "answered";
        case Termination::MaxStepsExceeded: return "max_steps_exceeded";
        case Termination::BackendError: return "backend_error";
        case Termination::Aborted: return "aborted";
    }
    return "aborted";
}

inline Termination termination_from_string(const std::string& s) {
    if (s == "answered") return Termination::Answered;
    if (s == "max_steps_exceeded") return Termination::MaxStepsExceeded;
    if (s == "backend_error") return Termination::BackendError;
    if (s == "aborted") return Termination::Aborted;
    throw SchemaViolation("unknown termination value '" + s + "'");
}

inline std::string to_string(Label l) {
    return l == Label::Success ? "success" : "failure";
}

inline Label label_from_string(const std::string& s) {
    if (s == "success") return Label::Success;
    if (s == "failure") return Label::Failure;
    throw SchemaViolation("unknown label value '" + s + "'");
}

// One-line action descriptor used in snapshots, digests and prompts.
inline std::string describe_action(const Action& a) {
    if (a.kind == ActionKind::ToolCall) {
        return "tool_call " + a.tool_name + " " + a.arguments.dump();
    }
    return "terminate: " + a.final_answer;
}

// ---------------------------------------------------------------------------
// invariant validation

inline void validate_critique(const Critique& c, const std::string& ctx) {
    if (c.err != 0 && c.err != 1) {
        throw SchemaViolation(ctx + ": critique err must be 0 or 1");
    }
    if (c.err == 0 && !c.delta.empty()) {
        throw SchemaViolation(ctx + ": critique with err=0 must have empty delta");
    }
    if (c.err == 1 && c.delta.empty()) {
        throw SchemaViolation(ctx + ": critique with err=1 must have non-empty delta");
    }
}

inline void validate_session(const Session& s) {
    const std::string ctx = "session " + std::to_string(s.index);
    if (s.index < 1) throw SchemaViolation(ctx + ": index must be >= 1");
    if (s.action.kind == ActionKind::ToolCall) {
        if (s.action.tool_name.empty()) throw SchemaViolation(ctx + ": tool call without tool_name");
    } else {
        if (!s.action.tool_name.empty() || !s.action.arguments.is_null()) {
            throw SchemaViolation(ctx + ": terminate action carries tool-call fields");
        }
    }
    if (!s.documents.empty() && s.action.kind != ActionKind::ToolCall) {
        throw SchemaViolation(ctx + ": documents present on a non-tool-call step");
    }
    std::vector<bool> seen(s.documents.size(), false);
    for (const auto& d : s.documents) {
        if (d.content.empty()) throw SchemaViolation(ctx + ": document with empty content");
        if (d.rank < 1 || static_cast<size_t>(d.rank) > s.documents.size() || seen[d.rank - 1]) {
            throw SchemaViolation(ctx + ": document ranks must be distinct and contiguous from 1");
        }
        seen[d.rank - 1] = true;
    }
    if (s.signals && s.documents.empty()) {
        throw SchemaViolation(ctx + ": signals present without documents");
    }
    if (s.signals) {
        const auto& g = *s.signals;
        if (!std::isfinite(g.se) || !std::isfinite(g.re) || !std::isfinite(g.re_hat) ||
            !std::isfinite(g.epsilon)) {
            throw SchemaViolation(ctx + ": non-finite signal value");
        }
        if (g.se < 0.0 || g.re < 0.0) throw SchemaViolation(ctx + ": negative entropy");
    }
    for (const auto& position : s.reasoning_token_logprobs) {
        for (const auto& cand : position) {
            if (!std::isfinite(cand.logprob)) {
                throw SchemaViolation(ctx + ": non-finite token logprob");
            }
        }
    }
    if (s.critique) validate_critique(*s.critique, ctx);
}

inline void validate_trajectory(const Trajectory& t) {
    if (t.query.text.empty()) throw SchemaViolation("query text must be non-empty");
    int expected = 1;
    for (size_t i = 0; i < t.sessions.size(); ++i) {
        const Session& s = t.sessions[i];
        if (s.index != expected) {
            throw SchemaViolation("session indices must increase by 1 from 1 (got " +
                                  std::to_string(s.index) + " at position " +
                                  std::to_string(i + 1) + ")");
        }
        ++expected;
        validate_session(s);
        if (s.action.kind == ActionKind::Terminate && i + 1 != t.sessions.size()) {
            throw SchemaViolation("terminate action must be the last session");
        }
    }
}

// ---------------------------------------------------------------------------
// operations

// Propagates the trajectory-level outcome onto every session. Sessions in a
// successful trajectory all count as success exemplars and symmetrically for
// failures; finer per-step credit is out of scope.
inline std::vector<std::pair<Session, Label>> propagate_label(const Trajectory& t, Label outcome) {
    if (t.sessions.empty()) {
        throw EmptyTrajectory("cannot propagate a label over a trajectory with no sessions");
    }
    std::vector<std::pair<Session, Label>> out;
    out.reserve(t.sessions.size());
    for (const auto& s : t.sessions) out.emplace_back(s, outcome);
    return out;
}

// ---------------------------------------------------------------------------
// serialization

namespace detail {

inline json token_logprobs_to_json(const TokenLogprobs& positions) {
    json arr = json::array();
    for (const auto& position : positions) {
        json pos = json::array();
        for (const auto& cand : position) pos.push_back(json::array({cand.token, cand.logprob}));
        arr.push_back(std::move(pos));
    }
    return arr;
}

inline TokenLogprobs token_logprobs_from_json(const json& arr, const char* ctx) {
    if (!arr.is_array()) throw SchemaViolation(std::string(ctx) + ": logprobs must be an array");
    TokenLogprobs out;
    out.reserve(arr.size());
    for (const auto& pos : arr) {
        if (!pos.is_array()) throw SchemaViolation(std::string(ctx) + ": logprob position must be an array");
        std::vector<TokenCandidate> cands;
        cands.reserve(pos.size());
        for (const auto& pair : pos) {
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_number()) {
                throw SchemaViolation(std::string(ctx) + ": logprob entry must be [token, number]");
            }
            cands.push_back({pair[0].get<std::string>(), pair[1].get<double>()});
        }
        out.push_back(std::move(cands));
    }
    return out;
}

inline json action_to_json(const Action& a) {
    json j;
    if (a.kind == ActionKind::ToolCall) {
        j["kind"] = "tool_call";
        j["tool_name"] = a.tool_name;
        j["arguments"] = a.arguments.is_null() ? json::object() : a.arguments;
    } else {
        j["kind"] = "terminate";
        j["final_answer"] = a.final_answer;
    }
    return j;
}

inline Action action_from_json(const json& j, const char* ctx) {
    std::string kind = require_as<std::string>(j, "kind", ctx);
    if (kind == "tool_call") {
        return Action::tool_call(require_as<std::string>(j, "tool_name", ctx),
                                 require_field(j, "arguments", ctx));
    }
    if (kind == "terminate") {
        return Action::terminate(require_as<std::string>(j, "final_answer", ctx));
    }
    throw SchemaViolation(std::string(ctx) + ": unknown action kind '" + kind + "'");
}

inline json session_to_json(const Session& s) {
    json j;
    j["index"] = s.index;
    j["reasoning_text"] = s.reasoning_text;
    j["reasoning_token_logprobs"] = token_logprobs_to_json(s.reasoning_token_logprobs);
    j["action"] = action_to_json(s.action);
    json docs = json::array();
    for (const auto& d : s.documents) {
        docs.push_back({{"doc_id", d.doc_id}, {"title", d.title}, {"content", d.content}, {"rank", d.rank}});
    }
    j["documents"] = std::move(docs);
    j["tool_observation"] = s.tool_observation;
    if (s.signals) {
        const auto& g = *s.signals;
        j["signals"] = {{"se", g.se}, {"re", g.re}, {"re_hat", g.re_hat},
                        {"epsilon", g.epsilon}, {"anomaly", g.anomaly}};
    }
    if (s.critique) {
        json c;
        c["err"] = s.critique->err;
        if (!s.critique->delta.empty()) c["delta"] = s.critique->delta;
        if (!s.critique->rationale.empty()) c["rationale"] = s.critique->rationale;
        if (!s.critique->raw.empty()) c["raw"] = s.critique->raw;
        j["critique"] = std::move(c);
    }
    return j;
}

inline Session session_from_json(const json& j, const char* ctx) {
    Session s;
    s.index = require_as<int>(j, "index", ctx);
    s.reasoning_text = require_as<std::string>(j, "reasoning_text", ctx);
    s.reasoning_token_logprobs =
        token_logprobs_from_json(require_field(j, "reasoning_token_logprobs", ctx), ctx);
    s.action = action_from_json(require_field(j, "action", ctx), ctx);
    const json& docs = require_field(j, "documents", ctx);
    if (!docs.is_array()) throw SchemaViolation(std::string(ctx) + ": documents must be an array");
    for (const auto& d : docs) {
        s.documents.push_back({require_as<std::string>(d, "doc_id", ctx),
                               require_as<std::string>(d, "title", ctx),
                               require_as<std::string>(d, "content", ctx),
                               require_as<int>(d, "rank", ctx)});
    }
    s.tool_observation = require_as<std::string>(j, "tool_observation", ctx);
    if (j.contains("signals") && !j["signals"].is_null()) {
        const json& g = j["signals"];
        s.signals = UncertaintySignals{require_as<double>(g, "se", ctx),
                                       require_as<double>(g, "re", ctx),
                                       require_as<double>(g, "re_hat", ctx),
                                       require_as<double>(g, "epsilon", ctx),
                                       require_as<bool>(g, "anomaly", ctx)};
    }
    if (j.contains("critique") && !j["critique"].is_null()) {
        const json& c = j["critique"];
        Critique q;
        q.err = require_as<int>(c, "err", ctx);
        q.delta = field_or<std::string>(c, "delta", "");
        q.rationale = field_or<std::string>(c, "rationale", "");
        q.raw = field_or<std::string>(c, "raw", "");
        s.critique = std::move(q);
    }
    return s;
}

}  // namespace detail

inline std::string serialize_trajectory(const Trajectory& t) {
    validate_trajectory(t);
    json header;
    header["schema_version"] = "1";
    header["query_id"] = t.query.id;
    header["query_text"] = t.query.text;
    json meta = json::object();
    for (const auto& [k, v] : t.query.metadata) meta[k] = v;
    header["metadata"] = std::move(meta);
    header["outcome"] = to_string(t.outcome);
    header["termination"] = to_string(t.termination);
    header["config"] = t.run_config.is_null() ? json::object() : t.run_config;

    std::string out = header.dump();
    out.push_back('\n');
    for (const auto& s : t.sessions) {
        out += detail::session_to_json(s).dump();
        out.push_back('\n');
    }
    return out;
}

inline Trajectory deserialize_trajectory(const std::string& text) {
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
    if (lines.empty()) throw ParseError("empty trajectory log", 1);

    Trajectory t;
    json header = parse_json_line(lines[0], 1);
    std::string version = require_as<std::string>(header, "schema_version", "header");
    if (version != "1") throw UnsupportedVersion("unsupported trajectory schema version '" + version + "'");
    t.query.id = require_as<std::string>(header, "query_id", "header");
    t.query.text = require_as<std::string>(header, "query_text", "header");
    if (header.contains("metadata") && header["metadata"].is_object()) {
        for (auto it = header["metadata"].begin(); it != header["metadata"].end(); ++it) {
            t.query.metadata.emplace(it.key(), it.value().get<std::string>());
        }
    }
    t.outcome = outcome_from_string(require_as<std::string>(header, "outcome", "header"));
    t.termination = termination_from_string(require_as<std::string>(header, "termination", "header"));
    t.run_config = field_or<json>(header, "config", json::object());

    for (size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) {
            throw ParseError("blank line inside trajectory log", static_cast<int>(i + 1));
        }
        json rec = parse_json_line(lines[i], static_cast<int>(i + 1));
        std::string ctx = "session record at line " + std::to_string(i + 1);
        t.sessions.push_back(detail::session_from_json(rec, ctx.c_str()));
    }
    validate_trajectory(t);
    return t;
}

inline Trajectory load_trajectory_file(const std::string& path) {
    return deserialize_trajectory(read_file(path));
}

inline void save_trajectory_file(const Trajectory& t, const std::string& path) {
    write_file(path, serialize_trajectory(t));
}

}  // namespace agentmon
