#pragma once
// The monitored ReAct loop: generate reasoning+action with logprobs, execute
// tools, compute uncertainty signals after retrieval steps, trigger the
// experience-driven critic on anomalies, inject its corrective suggestion
// into the next step's context, and optionally grow the memory online.

#include <atomic>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "agentmon/abstraction.hpp"
#include "agentmon/backends.hpp"
#include "agentmon/calibration.hpp"
#include "agentmon/config.hpp"
#include "agentmon/critic.hpp"
#include "agentmon/entropy.hpp"
#include "agentmon/memory.hpp"
#include "agentmon/trajectory.hpp"

namespace agentmon {

struct RunConfig {
    int max_steps = 16;
    int k_per_pool = 2;
    bool fast_monitor_enabled = true;
    bool slow_monitor_enabled = true;
    bool online_memory_enabled = false;
    double anomaly_k = 2.0;  // informational; the threshold lives in the calibration model
    int doc_top_k = 5;
    std::string injection_template = "[Metacognitive guidance] {delta}";
    int top_logprobs = 20;
    double temperature = 0.0;
    int max_tokens = 4096;
    ClusterParams cluster;
    double tau_dup = 0.95;
    bool extra_step_on_terminal_anomaly = false;
    std::string policy_system;
    std::string critic_template;
    std::uint64_t seed = 0;

    static RunConfig from(const Config& c) {
        RunConfig r;
        r.max_steps = c.monitor.max_steps;
        r.k_per_pool = c.monitor.k_per_pool;
        r.fast_monitor_enabled = c.monitor.fast_monitor_enabled;
        r.slow_monitor_enabled = c.monitor.slow_monitor_enabled;
        r.online_memory_enabled = c.monitor.online_memory_enabled;
        r.anomaly_k = c.monitor.anomaly_k;
        r.doc_top_k = c.monitor.doc_top_k;
        r.injection_template = c.templates.injection;
        r.top_logprobs = c.monitor.top_logprobs;
        r.cluster.d_merge = c.monitor.d_merge;
        r.cluster.rank_weighted_mass = c.monitor.rank_weighted_mass;
        r.tau_dup = c.monitor.tau_dup;
        r.extra_step_on_terminal_anomaly = c.monitor.extra_step_on_terminal_anomaly;
        r.policy_system = c.templates.policy_system;
        r.critic_template = c.templates.critic;
        r.seed = c.seed;
        return r;
    }

    // Written into the trajectory log header so a log records the settings
    // that produced it.
    json to_header_json() const {
        json j;
        j["max_steps"] = max_steps;
        j["k_per_pool"] = k_per_pool;
        j["fast_monitor_enabled"] = fast_monitor_enabled;
        j["slow_monitor_enabled"] = slow_monitor_enabled;
        j["online_memory_enabled"] = online_memory_enabled;
        j["anomaly_k"] = anomaly_k;
        j["doc_top_k"] = doc_top_k;
        j["top_logprobs"] = top_logprobs;
        j["d_merge"] = cluster.d_merge;
        j["rank_weighted_mass"] = cluster.rank_weighted_mass;
        j["tau_dup"] = tau_dup;
        j["seed"] = seed;
        return j;
    }
};

// Memory shared across concurrent trajectories: many readers, one writer.
struct SharedMemory {
    MemoryStore store;
    mutable std::shared_mutex mu;

    RetrievalResult retrieve_locked(const std::string& query_snapshot_text,
                                    EmbeddingBackend& embedder, int k_per_pool) const {
        std::shared_lock lock(mu);
        return retrieve(store, query_snapshot_text, embedder, k_per_pool);
    }

    InsertResult insert_locked(MemoryEntry entry) {
        std::unique_lock lock(mu);
        return insert(store, std::move(entry));
    }
};

struct RunDeps {
    ChatBackend* policy = nullptr;
    EmbeddingBackend* embedder = nullptr;
    SearchBackend* search = nullptr;
    const CalibrationModel* calibration = nullptr;  // required when fast monitor enabled
    SharedMemory* memory = nullptr;                 // required when slow monitor / online memory enabled
    ChatBackend* critic = nullptr;                  // required when slow monitor enabled
    Abstractor* abstractor = nullptr;               // required when online memory enabled
    std::string log_dir;                            // empty: do not write logs
    EventSink events;                               // optional
    std::function<std::string()> clock;             // created_at source, defaults to wall clock
};

struct StepOutcome {
    Session session;
    std::optional<std::string> injected_delta;  // guidance consumed by this step's prompt
    bool terminal = false;
};

// ---------------------------------------------------------------------------
// policy output parsing

struct ParsedPolicyOutput {
    std::string reasoning_text;
    Action action;
    size_t marker_offset = std::string::npos;  // char offset where action syntax starts
};

// Reasoning is everything strictly before the first action marker. A reply
// with no marker counts as a termination carrying the whole text.
inline ParsedPolicyOutput parse_policy_output(const std::string& text) {
    ParsedPolicyOutput out;
    size_t tool_pos = text.find("<tool_call>");
    size_t answer_pos = text.find("<answer>");
    if (tool_pos != std::string::npos && (answer_pos == std::string::npos || tool_pos < answer_pos)) {
        out.marker_offset = tool_pos;
        out.reasoning_text = trim(text.substr(0, tool_pos));
        size_t body_start = tool_pos + std::string("<tool_call>").size();
        size_t close = text.find("</tool_call>", body_start);
        std::string body = close == std::string::npos ? text.substr(body_start)
                                                      : text.substr(body_start, close - body_start);
        json call = json::parse(trim(body), nullptr, false);
        if (call.is_object() && call.contains("name") && call["name"].is_string()) {
            json args = call.contains("arguments") ? call["arguments"] : json::object();
            if (!args.is_object()) args = json::object();
            std::string name = call["name"].get<std::string>();
            out.action = Action::tool_call(name.empty() ? "malformed" : name, std::move(args));
        } else {
            out.action = Action::tool_call("malformed", json{{"raw", trim(body)}});
        }
        return out;
    }
    if (answer_pos != std::string::npos) {
        out.marker_offset = answer_pos;
        out.reasoning_text = trim(text.substr(0, answer_pos));
        size_t body_start = answer_pos + std::string("<answer>").size();
        size_t close = text.find("</answer>", body_start);
        std::string answer = close == std::string::npos ? text.substr(body_start)
                                                        : text.substr(body_start, close - body_start);
        out.action = Action::terminate(trim(answer));
        return out;
    }
    out.reasoning_text = trim(text);
    out.action = Action::terminate(trim(text));
    return out;
}

// Keeps only the token positions that fall inside the reasoning segment,
// aligning by the cumulative length of each position's sampled (first)
// candidate against the action-marker offset. A position that straddles the
// marker belongs to the action syntax and is dropped.
inline TokenLogprobs slice_reasoning_logprobs(const TokenLogprobs& all, size_t marker_offset) {
    if (marker_offset == std::string::npos) return all;
    TokenLogprobs out;
    size_t consumed = 0;
    for (const auto& position : all) {
        size_t len = position.empty() ? 0 : position.front().token.size();
        if (consumed + len > marker_offset) break;
        out.push_back(position);
        consumed += len;
    }
    return out;
}

// ---------------------------------------------------------------------------
// prompt assembly

inline std::string format_tool_observation_block(const std::string& observation) {
    return "<tool_response>\n" + observation + "\n</tool_response>";
}

// Canonical reconstruction of the assistant turn for a past session.
inline std::string reconstruct_assistant_text(const Session& s) {
    if (s.action.kind == ActionKind::ToolCall) {
        json call = {{"name", s.action.tool_name},
                     {"arguments", s.action.arguments.is_null() ? json::object() : s.action.arguments}};
        return s.reasoning_text + "\n<tool_call>\n" + call.dump() + "\n</tool_call>";
    }
    return s.reasoning_text + "\n<answer>" + s.action.final_answer + "</answer>";
}

inline std::vector<ChatMessage> build_policy_messages(const Query& query,
                                                      const std::vector<Session>& history,
                                                      const std::optional<std::string>& pending_delta,
                                                      const RunConfig& cfg) {
    std::vector<ChatMessage> messages;
    if (!cfg.policy_system.empty()) messages.push_back({"system", cfg.policy_system});
    messages.push_back({"user", query.text});
    for (const auto& s : history) {
        messages.push_back({"assistant", reconstruct_assistant_text(s)});
        if (s.action.kind == ActionKind::ToolCall) {
            messages.push_back({"user", format_tool_observation_block(s.tool_observation)});
        }
    }
    if (pending_delta) {
        messages.push_back(
            {"user", render_template(cfg.injection_template, {{"delta", *pending_delta}})});
    }
    return messages;
}

inline std::string render_documents_observation(const std::vector<RetrievedDocument>& docs) {
    if (docs.empty()) return "No results found.";
    std::string out;
    for (const auto& d : docs) {
        out += "[" + std::to_string(d.rank) + "] " + d.title + " (" + d.doc_id + ")\n" + d.content +
               "\n";
    }
    return out;
}

inline std::string history_digest(const Query& query, const std::vector<Session>& history,
                                  std::size_t max_sessions = 8) {
    (void)query;
    std::size_t start = history.size() > max_sessions ? history.size() - max_sessions : 0;
    return history_outline(std::span<const Session>(history).subspan(start));
}

// ---------------------------------------------------------------------------
// the loop

// Executes one ReAct step on top of `context` (the trajectory so far).
// Monitoring order per step: reason -> act -> observe -> fast monitor ->
// (on anomaly) slow monitor. A critique produced here conditions the *next*
// step through StepOutcome/pending_delta, never this one.
inline StepOutcome run_step(const Trajectory& context, const std::optional<std::string>& pending_delta,
                            const RunDeps& deps, const RunConfig& cfg) {
    if (deps.policy == nullptr || deps.search == nullptr) {
        throw ConfigError("run_step requires policy and search backends");
    }
    if (cfg.fast_monitor_enabled &&
        (deps.calibration == nullptr || deps.embedder == nullptr)) {
        throw ConfigError("fast monitor enabled but calibration/embedder missing");
    }
    if (static_cast<int>(context.sessions.size()) >= cfg.max_steps + 1) {
        throw SchemaViolation("run_step called past the step budget");
    }

    ChatRequest req;
    req.messages = build_policy_messages(context.query, context.sessions, pending_delta, cfg);
    req.want_logprobs = cfg.fast_monitor_enabled;
    req.top_logprobs = cfg.top_logprobs;
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;

    ChatResponse resp = deps.policy->chat(req);
    ParsedPolicyOutput parsed = parse_policy_output(resp.text);

    Session session;
    session.index = static_cast<int>(context.sessions.size()) + 1;
    session.reasoning_text = parsed.reasoning_text;
    session.reasoning_token_logprobs =
        slice_reasoning_logprobs(resp.token_logprobs, parsed.marker_offset);
    session.action = parsed.action;

    if (session.action.kind == ActionKind::ToolCall) {
        if (session.action.tool_name == "search") {
            std::string q = field_or<std::string>(session.action.arguments, "query", "");
            if (q.empty()) {
                session.tool_observation = "TOOL_ERROR: search call without a 'query' argument";
            } else {
                try {
                    SearchResultSet results = deps.search->search(q, cfg.doc_top_k);
                    session.documents = results.documents;
                    session.tool_observation = render_documents_observation(session.documents);
                } catch (const std::exception& e) {
                    session.tool_observation = std::string("TOOL_ERROR: ") + e.what();
                    session.documents.clear();
                }
            }
        } else {
            session.tool_observation =
                "TOOL_ERROR: unknown tool '" + session.action.tool_name + "'";
        }
    }

    if (cfg.fast_monitor_enabled && !session.documents.empty() &&
        !session.reasoning_token_logprobs.empty()) {
        session.signals =
            compute_signals(session, *deps.embedder, *deps.calibration, cfg.cluster);
    }

    if (session.signals && session.signals->anomaly && cfg.slow_monitor_enabled &&
        deps.critic != nullptr) {
        // the monitor is assistive; a dead critic or retriever must not kill
        // the run, it only costs this step its intervention
        json snapshot = make_session_snapshot(context.query.text, session);
        try {
            RetrievalResult hits;
            if (deps.memory != nullptr && deps.embedder != nullptr) {
                hits = deps.memory->retrieve_locked(snapshot_text(snapshot), *deps.embedder,
                                                    cfg.k_per_pool);
            }
            session.critique = criticize(snapshot, hits,
                                         history_digest(context.query, context.sessions),
                                         *deps.critic, cfg.critic_template, deps.events);
        } catch (const std::exception& e) {
            if (deps.events) deps.events("CriticBackendFailure", e.what());
            session.critique = Critique{0, "", "", std::string("backend failure: ") + e.what()};
        }
    }

    if (cfg.online_memory_enabled && deps.memory != nullptr && deps.abstractor != nullptr &&
        deps.embedder != nullptr) {
        bool flagged = session.signals && session.signals->anomaly;
        Label label = label_online(session, flagged, session.critique);
        EntryContext ctx;
        ctx.query_text = context.query.text;
        ctx.trajectory_id = context.query.id;
        ctx.origin = MemoryOrigin::Online;
        ctx.created_at = deps.clock ? deps.clock() : now_iso8601_utc();
        try {
            MemoryEntry entry = build_entry(session, context.sessions, label, *deps.abstractor,
                                            *deps.embedder, ctx);
            deps.memory->insert_locked(std::move(entry));
        } catch (const Error& e) {
            if (deps.events) deps.events("OnlineMemorySkipped", e.what());
        }
    }

    StepOutcome out;
    out.terminal = session.action.kind == ActionKind::Terminate ||
                   session.index >= cfg.max_steps;  // step budget exhausted
    out.session = std::move(session);
    out.injected_delta = pending_delta;
    return out;
}

// Runs a full trajectory. Never throws past this boundary: backend failures
// terminate the trajectory with Termination::BackendError and whatever
// sessions completed.
inline Trajectory run_trajectory(const Query& query, const RunDeps& deps, const RunConfig& cfg) {
    Trajectory t;
    t.query = query;
    t.outcome = Outcome::Unknown;  // live runs are judged elsewhere
    t.termination = Termination::MaxStepsExceeded;
    t.run_config = cfg.to_header_json();

    std::optional<std::string> pending_delta;
    int budget = cfg.max_steps;
    bool extended = false;

    try {
        for (int step = 0; step < budget; ++step) {
            StepOutcome outcome = run_step(t, pending_delta, deps, cfg);
            pending_delta.reset();
            const Session& s = outcome.session;
            bool answered = s.action.kind == ActionKind::Terminate;
            bool critic_error = s.critique && s.critique->err == 1;
            bool is_last_budgeted = step + 1 >= budget;

            if (critic_error && !answered) {
                if (!is_last_budgeted) {
                    pending_delta = s.critique->delta;
                } else if (cfg.extra_step_on_terminal_anomaly && !extended) {
                    pending_delta = s.critique->delta;
                    ++budget;  // one extra step to apply the guidance
                    extended = true;
                }
                // otherwise the critique stays recorded but is never injected
            }
            t.sessions.push_back(outcome.session);
            if (answered) {
                t.termination = Termination::Answered;
                break;
            }
        }
    } catch (const BackendUnavailable& e) {
        if (deps.events) deps.events("PolicyBackendFailure", e.what());
        t.termination = Termination::BackendError;
    } catch (const CapabilityMissing& e) {
        if (deps.events) deps.events("PolicyBackendFailure", e.what());
        t.termination = Termination::BackendError;
    } catch (const std::exception& e) {
        if (deps.events) deps.events("TrajectoryAborted", e.what());
        t.termination = Termination::Aborted;
    }

    if (!deps.log_dir.empty()) {
        std::filesystem::create_directories(deps.log_dir);
        save_trajectory_file(t, (std::filesystem::path(deps.log_dir) / (query.id + ".jsonl")).string());
    }
    return t;
}

struct BatchSummary {
    std::size_t n = 0;
    std::size_t answered = 0;
    std::size_t total_sessions = 0;
    std::size_t monitored_sessions = 0;  // sessions carrying signals
    std::size_t anomalies = 0;
    std::size_t critic_calls = 0;
    double mean_steps = 0.0;
    double anomaly_rate = 0.0;        // anomalies / total sessions
    double critic_trigger_rate = 0.0; // critic calls / total sessions
    double wall_time_s = 0.0;
    std::vector<std::string> failures;  // per-query isolation notes

    json to_json() const {
        json j;
        j["n"] = n;
        j["answered"] = answered;
        j["total_sessions"] = total_sessions;
        j["monitored_sessions"] = monitored_sessions;
        j["anomalies"] = anomalies;
        j["critic_calls"] = critic_calls;
        j["mean_steps"] = mean_steps;
        j["anomaly_rate"] = anomaly_rate;
        j["critic_trigger_rate"] = critic_trigger_rate;
        j["wall_time_s"] = wall_time_s;
        j["failures"] = failures;
        return j;
    }
};

struct BatchResult {
    std::vector<Trajectory> trajectories;  // in input order
    BatchSummary summary;
};

// Runs queries with at most `parallelism` concurrent trajectories. Memory
// writes are serialized inside SharedMemory; everything else is per-query.
inline BatchResult run_batch(const std::vector<Query>& queries, const RunDeps& deps,
                             const RunConfig& cfg, int parallelism) {
    if (parallelism < 1) throw SchemaViolation("run_batch: parallelism must be >= 1");
    auto started = std::chrono::steady_clock::now();

    BatchResult result;
    result.trajectories.resize(queries.size());
    std::vector<std::string> failures(queries.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= queries.size()) return;
            try {
                result.trajectories[i] = run_trajectory(queries[i], deps, cfg);
            } catch (const std::exception& e) {
                failures[i] = queries[i].id + ": " + e.what();
                result.trajectories[i].query = queries[i];
                result.trajectories[i].outcome = Outcome::Unknown;
                result.trajectories[i].termination = Termination::Aborted;
                result.trajectories[i].run_config = cfg.to_header_json();
            }
        }
    };

    int threads = std::min<int>(parallelism, static_cast<int>(std::max<std::size_t>(queries.size(), 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    BatchSummary& s = result.summary;
    s.n = queries.size();
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const Trajectory& t = result.trajectories[i];
        if (!failures[i].empty()) s.failures.push_back(failures[i]);
        if (t.termination == Termination::Answered) ++s.answered;
        s.total_sessions += t.sessions.size();
        for (const auto& sess : t.sessions) {
            if (sess.signals) {
                ++s.monitored_sessions;
                if (sess.signals->anomaly) ++s.anomalies;
            }
            if (sess.critique) ++s.critic_calls;
        }
    }
    if (s.n > 0) s.mean_steps = static_cast<double>(s.total_sessions) / static_cast<double>(s.n);
    if (s.total_sessions > 0) {
        s.anomaly_rate = static_cast<double>(s.anomalies) / static_cast<double>(s.total_sessions);
        s.critic_trigger_rate =
            static_cast<double>(s.critic_calls) / static_cast<double>(s.total_sessions);
    }
    s.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (!deps.log_dir.empty()) {
        std::filesystem::create_directories(deps.log_dir);
        write_file((std::filesystem::path(deps.log_dir) / "batch_summary.json").string(),
                   s.to_json().dump(2) + "\n");
    }
    return result;
}

}  // namespace agentmon
