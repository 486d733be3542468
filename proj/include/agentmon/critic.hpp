#pragma once
// The critic: given a flagged session plus retrieved success/failure
// experiences, ask a chat backend for a verdict and parse it into (err,
// delta). Parsing is defensive; a backend that cannot produce a usable
// verdict after one retry degrades to "no intervention" rather than stalling
// the trajectory.

#include <functional>
#include <string>

#include "agentmon/abstraction.hpp"
#include "agentmon/backends.hpp"
#include "agentmon/memory.hpp"
#include "agentmon/trajectory.hpp"
#include "agentmon/util.hpp"

namespace agentmon {

using EventSink = std::function<void(const std::string& event, const std::string& detail)>;

inline constexpr const char* kSynthesizedDelta =
    "A cognitive error was detected at this step; re-examine the latest evidence before "
    "proceeding.";

namespace detail {

// Accepts a fenced ```json block, a bare fenced block, or the first balanced
// JSON object in the text. Leading/trailing prose is tolerated.
inline json extract_structured_block(const std::string& text) {
    auto try_parse = [](const std::string& s) -> json {
        json j = json::parse(s, nullptr, false);
        return j.is_object() ? j : json();
    };
    for (const char* fence : {"```json", "```"}) {
        size_t open = text.find(fence);
        if (open == std::string::npos) continue;
        size_t body_start = open + std::string(fence).size();
        size_t close = text.find("```", body_start);
        if (close == std::string::npos) continue;
        json j = try_parse(trim(text.substr(body_start, close - body_start)));
        if (!j.is_null()) return j;
    }
    size_t open = text.find('{');
    while (open != std::string::npos) {
        int depth = 0;
        bool in_string = false;
        for (size_t i = open; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (c == '\\') ++i;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}') {
                if (--depth == 0) {
                    json j = try_parse(text.substr(open, i - open + 1));
                    if (!j.is_null()) return j;
                    break;
                }
            }
        }
        open = text.find('{', open + 1);
    }
    return json();
}

inline bool coerce_bool(const json& v, bool& out) {
    if (v.is_boolean()) {
        out = v.get<bool>();
        return true;
    }
    if (v.is_number_integer()) {
        long n = v.get<long>();
        if (n == 0 || n == 1) {
            out = n == 1;
            return true;
        }
        return false;
    }
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (s == "true" || s == "yes" || s == "1") { out = true; return true; }
        if (s == "false" || s == "no" || s == "0") { out = false; return true; }
    }
    return false;
}

// Returns false when no usable verdict could be extracted.
inline bool parse_critic_output(const std::string& text, Critique& out) {
    json j = extract_structured_block(text);
    if (!j.is_object() || !j.contains("error")) return false;
    bool err = false;
    if (!coerce_bool(j["error"], err)) return false;
    out.err = err ? 1 : 0;
    out.delta = trim(field_or<std::string>(j, "suggestion", ""));
    out.rationale = trim(field_or<std::string>(j, "rationale", ""));
    return true;
}

inline std::string format_experiences(const std::vector<std::pair<MemoryEntry, double>>& hits,
                                      bool failure_pool) {
    if (hits.empty()) return "(none)\n";
    std::string out;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const MemoryEntry& e = hits[i].first;
        char sim[32];
        std::snprintf(sim, sizeof(sim), "%.3f", hits[i].second);
        if (failure_pool) {
            out += std::to_string(i + 1) + ". (similarity " + sim +
                   ") Insight: " + abstraction_insight(e.abstraction) + "\n   Pattern: " +
                   e.abstraction + "\n";
        } else {
            out += std::to_string(i + 1) + ". (similarity " + sim + ") " + e.abstraction + "\n";
        }
    }
    return out;
}

}  // namespace detail

// Runs the critic over a flagged session. The prompt template must expose the
// slots {session}, {history_digest}, {success_experiences},
// {failure_experiences}. Invariants on the returned Critique always hold:
// err=0 strips any suggestion, err=1 without one gets a synthesized delta.
inline Critique criticize(const json& session_snapshot, const RetrievalResult& hits,
                          const std::string& history_digest, ChatBackend& backend,
                          const std::string& prompt_template, const EventSink& events = {}) {
    std::string prompt = render_template(
        prompt_template,
        {{"session", snapshot_text(session_snapshot)},
         {"history_digest", history_digest.empty() ? "(none)" : history_digest},
         {"success_experiences", detail::format_experiences(hits.success_hits, false)},
         {"failure_experiences", detail::format_experiences(hits.failure_hits, true)}});

    ChatRequest req;
    req.messages = {{"user", prompt}};
    req.want_logprobs = false;

    Critique out;
    std::string last_raw;
    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatResponse resp = backend.chat(req);
        last_raw = resp.text;
        Critique parsed;
        if (detail::parse_critic_output(resp.text, parsed)) {
            out = parsed;
            out.raw = last_raw;
            if (out.err == 0) {
                out.delta.clear();  // err=0 forces delta = empty
            } else if (out.delta.empty()) {
                out.delta = kSynthesizedDelta;
            }
            return out;
        }
        if (attempt == 0) {
            req.messages.push_back({"assistant", resp.text});
            req.messages.push_back(
                {"user",
                 "Your previous reply could not be parsed. Respond with only a fenced ```json "
                 "block containing exactly {\"error\": true|false, \"suggestion\": \"...\", "
                 "\"rationale\": \"...\"}."});
        }
    }
    if (events) events("CriticParseFailure", last_raw);
    out.err = 0;
    out.delta.clear();
    out.rationale.clear();
    out.raw = last_raw;
    return out;
}

}  // namespace agentmon
