#pragma once
// Single configuration document binding backends, monitor parameters, paths
// and prompt templates. JSON on disk, with ${ENV_NAME} interpolation inside
// string values so secrets stay out of config files. Every invalid field
// yields a named diagnostic; load either returns a fully validated Config or
// throws ConfigError listing all problems.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "agentmon/jsonio.hpp"
#include "agentmon/util.hpp"

namespace agentmon {

struct BackendConfig {
    std::string kind = "mock";  // chat/embedding: mock|http; search: mock|fixture|http
    std::string endpoint;
    std::string model;
    std::string api_key_env;     // name of the env var holding the key
    int timeout_ms = 60000;
    int retry_attempts = 3;
    int retry_base_delay_ms = 1000;
    // search only
    std::string extract_endpoint;
    std::string extract_api_key_env;
    // embedding only
    int dim = 256;
};

struct MonitorConfig {
    double anomaly_k = 2.0;
    double d_merge = 0.35;
    int top_logprobs = 20;
    int doc_top_k = 5;
    int k_per_pool = 2;
    double tau_dup = 0.95;
    bool fast_monitor_enabled = true;
    bool slow_monitor_enabled = true;
    bool online_memory_enabled = false;
    bool rank_weighted_mass = false;
    int max_steps = 16;
    bool extra_step_on_terminal_anomaly = false;
};

struct PathsConfig {
    std::string calibration_file;
    std::string memory_store;
    std::string log_dir = "logs";
    std::string fixture_corpus;
};

struct TemplatesConfig {
    std::string injection;            // slot: {delta}
    std::string critic;               // slots: {session}, {history_digest},
                                      //        {success_experiences}, {failure_experiences}
    std::string success_abstraction;  // slots: {session}, {history}
    std::string failure_abstraction;  // slots: {session}, {history}
    std::string history_summary;      // slot: {history}
    std::string policy_system;        // no slots
};

struct Config {
    std::uint64_t seed = 0;
    BackendConfig policy;
    BackendConfig critic;
    BackendConfig abstractor;
    BackendConfig embedding;
    BackendConfig search;
    MonitorConfig monitor;
    PathsConfig paths;
    TemplatesConfig templates;

    static Config defaults();
};

inline TemplatesConfig default_templates() {
    TemplatesConfig t;
    t.injection = "[Metacognitive guidance] {delta}";
    t.policy_system =
        "You are a deep-search agent. Work step by step: think, then either call a tool or give "
        "the final answer.\n"
        "To search, emit exactly one block:\n"
        "<tool_call>\n{\"name\": \"search\", \"arguments\": {\"query\": \"...\"}}\n</tool_call>\n"
        "To finish, emit: <answer>your final answer</answer>\n"
        "Tool results arrive inside <tool_response> blocks. If a monitor message appears, take "
        "its guidance into account in your next step.";
    t.critic =
        "You are a monitor reviewing one step of a search agent for cognitive errors (misusing "
        "evidence, concluding too early, skipping verification, searching in circles).\n\n"
        "Current step:\n{session}\n\n"
        "Earlier steps:\n{history_digest}\n\n"
        "Similar steps that worked well:\n{success_experiences}\n"
        "Similar steps that went wrong, with their corrective insights:\n{failure_experiences}\n"
        "Weigh the step against these experiences. Reply with a fenced ```json block containing "
        "exactly {\"error\": true|false, \"suggestion\": \"what the agent should do differently "
        "next, empty if no error\", \"rationale\": \"one sentence\"}.";
    t.success_abstraction =
        "Review this agent step from a task that ultimately succeeded.\n\n"
        "Step:\n{session}\n\nEarlier steps:\n{history}\n\n"
        "Distill what made the step work: the reasoning strategy, how tools were chosen and "
        "used, and how the retrieved evidence was integrated. Reply with a JSON object "
        "{\"behavior_pattern\": \"...\", \"evidence\": \"...\", \"insight\": \"...\"}.";
    t.failure_abstraction =
        "Review this agent step from a task that ultimately failed.\n\n"
        "Step:\n{session}\n\nEarlier steps:\n{history}\n\n"
        "Diagnose the cognitive deficiency: e.g. not gathering enough outside information, "
        "settling on an answer too early, or never verifying a claim. State how to avoid it. "
        "Reply with a JSON object {\"behavior_pattern\": \"...\", \"evidence\": \"...\", "
        "\"insight\": \"...\"}.";
    t.history_summary =
        "Summarize the agent's progress so far in at most three sentences, one clause per step, "
        "keeping concrete entities and outcomes:\n\n{history}";
    return t;
}

inline Config Config::defaults() {
    Config c;
    c.templates = default_templates();
    c.policy.api_key_env = "CHAT_API_KEY";
    c.critic.api_key_env = "CHAT_API_KEY";
    c.abstractor.api_key_env = "CHAT_API_KEY";
    c.search.api_key_env = "SEARCH_API_KEY";
    c.search.extract_api_key_env = "EXTRACT_API_KEY";
    return c;
}

// ---------------------------------------------------------------------------
// load / validate

namespace detail {

inline void interpolate_env(json& node, std::vector<std::string>& problems) {
    if (node.is_string()) {
        std::string s = node.get<std::string>();
        size_t pos = 0;
        while ((pos = s.find("${", pos)) != std::string::npos) {
            size_t end = s.find('}', pos + 2);
            if (end == std::string::npos) break;
            std::string name = s.substr(pos + 2, end - pos - 2);
            const char* value = std::getenv(name.c_str());
            if (value == nullptr) {
                problems.push_back("environment variable '" + name + "' referenced but not set");
                pos = end + 1;
                continue;
            }
            s.replace(pos, end - pos + 1, value);
            pos += std::string(value).size();
        }
        node = s;
    } else if (node.is_object() || node.is_array()) {
        for (auto& child : node) interpolate_env(child, problems);
    }
}

inline void read_backend(const json& j, const char* name, BackendConfig& out,
                         std::vector<std::string>& problems) {
    if (!j.contains(name)) return;
    const json& b = j[name];
    if (!b.is_object()) {
        problems.push_back(std::string("backends.") + name + " must be an object");
        return;
    }
    out.kind = field_or<std::string>(b, "kind", out.kind);
    out.endpoint = field_or<std::string>(b, "endpoint", out.endpoint);
    out.model = field_or<std::string>(b, "model", out.model);
    out.api_key_env = field_or<std::string>(b, "api_key_env", out.api_key_env);
    out.timeout_ms = field_or<int>(b, "timeout_ms", out.timeout_ms);
    out.retry_attempts = field_or<int>(b, "retry_attempts", out.retry_attempts);
    out.retry_base_delay_ms = field_or<int>(b, "retry_base_delay_ms", out.retry_base_delay_ms);
    out.extract_endpoint = field_or<std::string>(b, "extract_endpoint", out.extract_endpoint);
    out.extract_api_key_env = field_or<std::string>(b, "extract_api_key_env", out.extract_api_key_env);
    out.dim = field_or<int>(b, "dim", out.dim);
}

}  // namespace detail

inline void validate_config(const Config& c, std::vector<std::string>& problems) {
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) problems.push_back(msg);
    };
    check(c.monitor.anomaly_k > 0.0, "monitor.anomaly_k must be > 0");
    check(c.monitor.tau_dup > 0.0 && c.monitor.tau_dup <= 1.0, "monitor.tau_dup must be in (0, 1]");
    check(c.monitor.d_merge > 0.0 && c.monitor.d_merge < 2.0, "monitor.d_merge must be in (0, 2)");
    check(c.monitor.top_logprobs >= 1, "monitor.top_logprobs must be >= 1");
    check(c.monitor.doc_top_k >= 1, "monitor.doc_top_k must be >= 1");
    check(c.monitor.k_per_pool >= 1, "monitor.k_per_pool must be >= 1");
    check(c.monitor.max_steps >= 1, "monitor.max_steps must be >= 1");

    struct BackendSpec {
        const char* name;
        const BackendConfig* cfg;
        std::vector<std::string> kinds;
    };
    const BackendSpec backend_list[] = {{"policy", &c.policy, {"mock", "http"}},
                                        {"critic", &c.critic, {"mock", "http"}},
                                        {"abstractor", &c.abstractor, {"mock", "http"}},
                                        {"embedding", &c.embedding, {"mock", "http"}},
                                        {"search", &c.search, {"mock", "fixture", "http"}}};
    for (const auto& [name, cfg, kinds] : backend_list) {
        std::string k = cfg->kind;
        bool ok = std::find(kinds.begin(), kinds.end(), k) != kinds.end();
        std::string kinds_text;
        for (const auto& kk : kinds) kinds_text += (kinds_text.empty() ? "" : "|") + kk;
        check(ok, std::string("backends.") + name + ".kind '" + k + "' not one of " + kinds_text);
        if (k == "http") {
            check(!cfg->endpoint.empty(), std::string("backends.") + name + ".endpoint required for kind http");
        }
        check(cfg->timeout_ms > 0, std::string("backends.") + name + ".timeout_ms must be > 0");
        check(cfg->retry_attempts >= 1, std::string("backends.") + name + ".retry_attempts must be >= 1");
        check(cfg->retry_base_delay_ms >= 0,
              std::string("backends.") + name + ".retry_base_delay_ms must be >= 0");
    }
    check(c.embedding.dim >= 1, "backends.embedding.dim must be >= 1");
    if (c.search.kind == "fixture") {
        check(!c.paths.fixture_corpus.empty(),
              "paths.fixture_corpus required when backends.search.kind is fixture");
    }

    auto need_slot = [&](const std::string& tpl, const char* tpl_name, const char* slot) {
        check(template_has_slot(tpl, slot),
              std::string("templates.") + tpl_name + " must contain the {" + slot + "} slot");
    };
    need_slot(c.templates.injection, "injection", "delta");
    need_slot(c.templates.critic, "critic", "session");
    need_slot(c.templates.critic, "critic", "history_digest");
    need_slot(c.templates.critic, "critic", "success_experiences");
    need_slot(c.templates.critic, "critic", "failure_experiences");
    need_slot(c.templates.success_abstraction, "success_abstraction", "session");
    need_slot(c.templates.failure_abstraction, "failure_abstraction", "session");
    need_slot(c.templates.history_summary, "history_summary", "history");
}

inline Config config_from_json(json j) {
    std::vector<std::string> problems;
    detail::interpolate_env(j, problems);

    Config c = Config::defaults();
    c.seed = field_or<std::uint64_t>(j, "seed", 0);
    if (j.contains("backends")) {
        const json& b = j["backends"];
        detail::read_backend(b, "policy", c.policy, problems);
        detail::read_backend(b, "critic", c.critic, problems);
        detail::read_backend(b, "abstractor", c.abstractor, problems);
        detail::read_backend(b, "embedding", c.embedding, problems);
        detail::read_backend(b, "search", c.search, problems);
    }
    if (j.contains("monitor")) {
        const json& m = j["monitor"];
        auto& mc = c.monitor;
        mc.anomaly_k = field_or<double>(m, "anomaly_k", mc.anomaly_k);
        mc.d_merge = field_or<double>(m, "d_merge", mc.d_merge);
        mc.top_logprobs = field_or<int>(m, "top_logprobs", mc.top_logprobs);
        mc.doc_top_k = field_or<int>(m, "doc_top_k", mc.doc_top_k);
        mc.k_per_pool = field_or<int>(m, "k_per_pool", mc.k_per_pool);
        mc.tau_dup = field_or<double>(m, "tau_dup", mc.tau_dup);
        mc.fast_monitor_enabled = field_or<bool>(m, "fast_monitor_enabled", mc.fast_monitor_enabled);
        mc.slow_monitor_enabled = field_or<bool>(m, "slow_monitor_enabled", mc.slow_monitor_enabled);
        mc.online_memory_enabled = field_or<bool>(m, "online_memory_enabled", mc.online_memory_enabled);
        mc.rank_weighted_mass = field_or<bool>(m, "rank_weighted_mass", mc.rank_weighted_mass);
        mc.max_steps = field_or<int>(m, "max_steps", mc.max_steps);
        mc.extra_step_on_terminal_anomaly =
            field_or<bool>(m, "extra_step_on_terminal_anomaly", mc.extra_step_on_terminal_anomaly);
    }
    if (j.contains("paths")) {
        const json& p = j["paths"];
        c.paths.calibration_file = field_or<std::string>(p, "calibration_file", "");
        c.paths.memory_store = field_or<std::string>(p, "memory_store", "");
        c.paths.log_dir = field_or<std::string>(p, "log_dir", c.paths.log_dir);
        c.paths.fixture_corpus = field_or<std::string>(p, "fixture_corpus", "");
    }
    if (j.contains("templates")) {
        const json& t = j["templates"];
        auto& tc = c.templates;
        tc.injection = field_or<std::string>(t, "injection", tc.injection);
        tc.critic = field_or<std::string>(t, "critic", tc.critic);
        tc.success_abstraction = field_or<std::string>(t, "success_abstraction", tc.success_abstraction);
        tc.failure_abstraction = field_or<std::string>(t, "failure_abstraction", tc.failure_abstraction);
        tc.history_summary = field_or<std::string>(t, "history_summary", tc.history_summary);
        tc.policy_system = field_or<std::string>(t, "policy_system", tc.policy_system);
    }

    validate_config(c, problems);
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
    return c;
}

inline Config load_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(std::move(j));
}

}  // namespace agentmon
