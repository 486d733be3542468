#pragma once
// History summarization and label-conditioned abstraction of sessions into
// reusable experience text, backed by any ChatBackend. Prompt templates come
// from config; both abstraction templates share the output structure
// {behavior_pattern, evidence, insight} but differ in emphasis (what worked
// vs. what went wrong).

#include <span>
#include <string>
#include <vector>

#include "agentmon/backends.hpp"
#include "agentmon/trajectory.hpp"
#include "agentmon/util.hpp"

namespace agentmon {

inline constexpr const char* kEmptyHistorySentinel = "no prior steps";

struct AbstractionTemplates {
    std::string history_summary;      // slot: {history}
    std::string success_abstraction;  // slots: {session}, {history}
    std::string failure_abstraction;  // slots: {session}, {history}
};

// One line per prior session; bounded input for summarization and critic
// digests.
inline std::string history_outline(std::span<const Session> history,
                                   std::size_t observation_chars = 200) {
    std::string out;
    for (const auto& s : history) {
        out += "Step " + std::to_string(s.index) + ": " + describe_action(s.action);
        if (!s.tool_observation.empty()) {
            out += " -> " + truncate_utf8_safe(s.tool_observation, observation_chars);
        }
        out += "\n";
    }
    return out;
}

class Abstractor {
public:
    Abstractor(ChatBackend& backend, AbstractionTemplates templates, int max_tokens = 512)
        : backend_(backend), templates_(std::move(templates)), max_tokens_(max_tokens) {}

    // h_t. Empty history maps to a fixed sentinel instead of a model call so
    // first steps stay cheap and deterministic.
    std::string summarize_history(std::span<const Session> history) {
        if (history.empty()) return kEmptyHistorySentinel;
        std::string prompt =
            render_template(templates_.history_summary, {{"history", history_outline(history)}});
        return invoke(prompt, "history summarization");
    }

    // z_t, conditioned on the trajectory-level label.
    std::string abstract_session(const std::string& snapshot_text, const std::string& history_summary,
                                 Label label) {
        const std::string& tpl = label == Label::Success ? templates_.success_abstraction
                                                         : templates_.failure_abstraction;
        std::string prompt =
            render_template(tpl, {{"session", snapshot_text}, {"history", history_summary}});
        return invoke(prompt, "session abstraction");
    }

    static const char* template_id(Label label) {
        return label == Label::Success ? "success_abstraction" : "failure_abstraction";
    }

private:
    std::string invoke(const std::string& prompt, const char* what) {
        ChatRequest req;
        req.messages = {{"user", prompt}};
        req.want_logprobs = false;  // uncertainty is only measured on the policy
        req.max_tokens = max_tokens_;
        std::string last_error;
        for (int attempt = 0; attempt < 2; ++attempt) {
            try {
                ChatResponse resp = backend_.chat(req);
                std::string text = trim(resp.text);
                if (!text.empty()) return text;
                last_error = "backend returned empty text";
            } catch (const std::exception& e) {
                last_error = e.what();
            }
        }
        throw AbstractionFailed(std::string(what) + " failed after retry: " + last_error);
    }

    ChatBackend& backend_;
    AbstractionTemplates templates_;
    int max_tokens_;
};

// Pulls the "insight" field out of an abstraction when it is structured JSON;
// otherwise the whole abstraction is the insight.
inline std::string abstraction_insight(const std::string& abstraction) {
    auto open = abstraction.find('{');
    auto close = abstraction.rfind('}');
    if (open != std::string::npos && close != std::string::npos && close > open) {
        json j = json::parse(abstraction.substr(open, close - open + 1), nullptr, false);
        if (j.is_object() && j.contains("insight") && j["insight"].is_string()) {
            std::string insight = j["insight"].get<std::string>();
            if (!insight.empty()) return insight;
        }
    }
    return abstraction;
}

}  // namespace agentmon
