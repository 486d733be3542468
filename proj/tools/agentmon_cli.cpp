// agentmon command-line entry point.
//
// Commands: run, build-memory, fit-calibration, inspect-memory, replay.
// Exit codes: 0 success, 1 verification mismatch, 2 configuration or input
// error, 3 systemic backend failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "agentmon/abstraction.hpp"
#include "agentmon/calibration.hpp"
#include "agentmon/config.hpp"
#include "agentmon/critic.hpp"
#include "agentmon/factory.hpp"
#include "agentmon/memory.hpp"
#include "agentmon/orchestrator.hpp"
#include "agentmon/replay.hpp"
#include "agentmon/trajectory.hpp"

namespace fs = std::filesystem;
using namespace agentmon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMismatch = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;

Config load_config_or_default(const std::string& path) {
    if (path.empty()) return Config::defaults();
    return load_config(path);
}

std::vector<std::string> collect_log_files(const std::string& dir) {
    std::vector<std::string> files;
    if (!fs::is_directory(dir)) {
        throw ConfigError("log directory does not exist: " + dir);
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl" &&
            entry.path().filename() != "batch_summary.json") {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

void print_events(const std::string& event, const std::string& detail) {
    std::cerr << "[event] " << event << ": " << detail.substr(0, 200) << "\n";
}

// ---------------------------------------------------------------------------

struct RunArgs {
    std::string query;
    std::string queries_file;
    std::string config_path;
    std::string log_dir_override;
    int parallelism = 1;
    int max_steps_override = 0;
    bool no_fast = false;
    bool no_slow = false;
    bool online_memory = false;
};

int cmd_run(const RunArgs& args) {
    Config config = load_config_or_default(args.config_path);
    if (args.no_fast) config.monitor.fast_monitor_enabled = false;
    if (args.no_slow) config.monitor.slow_monitor_enabled = false;
    if (args.online_memory) config.monitor.online_memory_enabled = true;
    if (args.max_steps_override > 0) config.monitor.max_steps = args.max_steps_override;
    if (!args.log_dir_override.empty()) config.paths.log_dir = args.log_dir_override;

    std::vector<Query> queries;
    if (!args.query.empty()) {
        queries.push_back({"q-" + query_fingerprint(args.query).substr(0, 12), args.query, {}});
    } else if (!args.queries_file.empty()) {
        std::ifstream in(args.queries_file);
        if (!in) throw ConfigError("cannot open queries file: " + args.queries_file);
        std::string line;
        int n = 0;
        while (std::getline(in, line)) {
            std::string text = trim(line);
            if (text.empty()) continue;
            ++n;
            std::string id = "q" + std::to_string(n);
            size_t tab = text.find('\t');
            if (tab != std::string::npos && tab > 0) {
                id = text.substr(0, tab);
                text = trim(text.substr(tab + 1));
            }
            if (!text.empty()) queries.push_back({id, text, {}});
        }
    } else {
        throw ConfigError("one of --query or --queries is required");
    }
    if (queries.empty()) {
        std::cout << "no queries to run\n";
        return kExitOk;
    }

    CalibrationModel calibration;
    if (config.monitor.fast_monitor_enabled) {
        if (config.paths.calibration_file.empty() || !fs::exists(config.paths.calibration_file)) {
            throw ConfigError(
                "fast monitor is enabled but the calibration file is missing: '" +
                config.paths.calibration_file +
                "' (run fit-calibration first or set paths.calibration_file)");
        }
        calibration = load_calibration_file(config.paths.calibration_file);
        calibration.k = config.monitor.anomaly_k;
    }

    SharedMemory memory;
    memory.store.tau_dup = config.monitor.tau_dup;
    if (!config.paths.memory_store.empty() && fs::exists(config.paths.memory_store)) {
        memory.store = load_store(config.paths.memory_store);
    }

    BackendSet backends = make_backends(config);
    AbstractionTemplates abstraction_templates{config.templates.history_summary,
                                               config.templates.success_abstraction,
                                               config.templates.failure_abstraction};
    Abstractor abstractor(*backends.abstractor, abstraction_templates);

    RunConfig run_cfg = RunConfig::from(config);
    RunDeps deps;
    deps.policy = backends.policy.get();
    deps.embedder = backends.embedding.get();
    deps.search = backends.search.get();
    deps.calibration = config.monitor.fast_monitor_enabled ? &calibration : nullptr;
    deps.memory = &memory;
    deps.critic = backends.critic.get();
    deps.abstractor = &abstractor;
    deps.log_dir = config.paths.log_dir;
    deps.events = print_events;

    if (queries.size() == 1 && args.parallelism <= 1) {
        Trajectory t = run_trajectory(queries[0], deps, run_cfg);
        std::string answer = t.sessions.empty() ? ""
                             : t.sessions.back().action.kind == ActionKind::Terminate
                                 ? t.sessions.back().action.final_answer
                                 : "";
        std::cout << "query: " << t.query.text << "\n";
        std::cout << "termination: " << to_string(t.termination) << "\n";
        std::cout << "steps: " << t.sessions.size() << "\n";
        std::cout << "answer: " << (answer.empty() ? "(none)" : answer) << "\n";
        std::cout << "log: " << (fs::path(config.paths.log_dir) / (t.query.id + ".jsonl")).string()
                  << "\n";
        if (config.monitor.online_memory_enabled && !config.paths.memory_store.empty()) {
            save_store(memory.store, config.paths.memory_store);
        }
        return t.termination == Termination::BackendError ? kExitBackend : kExitOk;
    }

    BatchResult batch = run_batch(queries, deps, run_cfg, std::max(1, args.parallelism));
    for (const auto& t : batch.trajectories) {
        std::string answer = !t.sessions.empty() &&
                                     t.sessions.back().action.kind == ActionKind::Terminate
                                 ? t.sessions.back().action.final_answer
                                 : "(none)";
        std::cout << t.query.id << ": " << answer << " [" << to_string(t.termination) << ", "
                  << t.sessions.size() << " steps]\n";
    }
    const BatchSummary& s = batch.summary;
    std::cout << "queries: " << s.n << "\n";
    std::cout << "answered: " << s.answered << "\n";
    std::cout << "mean steps: " << s.mean_steps << "\n";
    std::cout << "anomaly rate: " << s.anomaly_rate << "\n";
    std::cout << "critic trigger rate: " << s.critic_trigger_rate << "\n";
    std::cout << "wall time: " << s.wall_time_s << " s\n";
    for (const auto& f : s.failures) std::cout << "failed: " << f << "\n";
    if (config.monitor.online_memory_enabled && !config.paths.memory_store.empty()) {
        save_store(memory.store, config.paths.memory_store);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_build_memory(const std::string& logs_dir, const std::string& out_path,
                     const std::string& config_path) {
    Config config = load_config_or_default(config_path);
    BackendSet backends = make_backends(config);
    AbstractionTemplates abstraction_templates{config.templates.history_summary,
                                               config.templates.success_abstraction,
                                               config.templates.failure_abstraction};
    Abstractor abstractor(*backends.abstractor, abstraction_templates);

    MemoryStore store;
    store.tau_dup = config.monitor.tau_dup;
    store.embedding_model_id = config.embedding.kind == "http" ? config.embedding.model : "mock";
    if (fs::exists(out_path)) store = load_store(out_path);

    std::size_t labeled = 0, skipped_unknown = 0, built = 0, duplicates = 0, failures = 0;
    for (const auto& file : collect_log_files(logs_dir)) {
        Trajectory t = load_trajectory_file(file);
        if (t.outcome == Outcome::Unknown) {
            ++skipped_unknown;
            continue;
        }
        ++labeled;
        Label label = t.outcome == Outcome::Success ? Label::Success : Label::Failure;
        auto pairs = propagate_label(t, label);
        std::string created_at = now_iso8601_utc();
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            EntryContext ctx;
            ctx.query_text = t.query.text;
            ctx.trajectory_id = t.query.id;
            ctx.origin = MemoryOrigin::Offline;
            ctx.created_at = created_at;
            std::span<const Session> history(t.sessions.data(), i);
            try {
                MemoryEntry entry = build_entry(pairs[i].first, history, pairs[i].second,
                                                abstractor, *backends.embedding, ctx);
                ++built;
                if (insert(store, std::move(entry)) == InsertResult::DiscardedDuplicate) {
                    ++duplicates;
                }
            } catch (const AbstractionFailed& e) {
                ++failures;
                std::cerr << "abstraction failed for " << t.query.id << "#"
                          << pairs[i].first.index << ": " << e.what() << "\n";
            }
        }
    }
    if (labeled == 0) {
        std::cerr << "no Success/Failure-labeled trajectories found in " << logs_dir << "\n";
        return kExitConfig;
    }
    save_store(store, out_path);
    std::cout << "labeled trajectories: " << labeled << "\n";
    std::cout << "skipped (unknown outcome): " << skipped_unknown << "\n";
    std::cout << "entries built: " << built << "\n";
    std::cout << "discarded duplicates: " << duplicates << "\n";
    std::cout << "abstraction failures: " << failures << "\n";
    std::cout << "success pool: " << store.success_pool.size() << "\n";
    std::cout << "failure pool: " << store.failure_pool.size() << "\n";
    std::cout << "store: " << out_path << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_fit_calibration(const std::string& logs_dir, const std::string& out_path, double k,
                        double sigma_holdout) {
    std::vector<CalibrationPoint> points;
    std::vector<std::string> sources;
    for (const auto& file : collect_log_files(logs_dir)) {
        Trajectory t = load_trajectory_file(file);
        if (t.outcome != Outcome::Success) continue;  // calibration uses successful steps only
        sources.push_back(file);
        for (const auto& s : t.sessions) {
            if (s.signals) {
                points.push_back({s.signals->se, s.signals->re, t.query.id, s.index});
            }
        }
    }
    if (points.size() < 2) {
        std::cerr << "insufficient calibration points: found " << points.size()
                  << " (need >= 2 monitored steps from Success-labeled trajectories)\n";
        return kExitConfig;
    }
    CalibrationModel model = fit(points, k, sigma_holdout);
    save_calibration_file(model, out_path, sources, now_iso8601_utc());
    std::cout << "points: " << points.size() << "\n";
    std::cout << "a: " << model.a << "\n";
    std::cout << "b: " << model.b << "\n";
    std::cout << "sigma: " << model.sigma << "\n";
    std::cout << "k: " << model.k << " (tau = " << model.tau() << ")\n";
    if (model.degenerate) std::cout << "warning: degenerate design (all se identical)\n";
    std::cout << "calibration: " << out_path << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_inspect_memory(const std::string& store_path, const std::string& query_text, int k,
                       const std::string& config_path) {
    Config config = load_config_or_default(config_path);
    MemoryStore store = load_store(store_path);
    auto embedder = make_embedding_backend(config.embedding, config.seed);
    RetrievalResult hits = retrieve(store, query_text, *embedder, k);

    auto print_pool = [](const char* name, const std::vector<std::pair<MemoryEntry, double>>& list) {
        std::cout << name << " (" << list.size() << "):\n";
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto& [entry, sim] = list[i];
            std::cout << "  " << (i + 1) << ". [" << entry.entry_id << "] similarity=" << sim
                      << "\n     " << truncate_utf8_safe(entry.abstraction, 300) << "\n";
        }
    };
    std::cout << "store: " << store_path << " (success=" << store.success_pool.size()
              << ", failure=" << store.failure_pool.size() << ")\n";
    print_pool("success hits", hits.success_hits);
    print_pool("failure hits", hits.failure_hits);
    return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_replay(const std::string& log_path, const std::string& config_path,
               const std::string& calibration_path) {
    Config config = load_config_or_default(config_path);
    Trajectory t = load_trajectory_file(log_path);
    auto embedder = make_embedding_backend(config.embedding, config.seed);

    CalibrationModel calibration;
    const CalibrationModel* calibration_ptr = nullptr;
    std::string cal_path =
        !calibration_path.empty() ? calibration_path : config.paths.calibration_file;
    if (!cal_path.empty() && fs::exists(cal_path)) {
        calibration = load_calibration_file(cal_path);
        calibration.k = field_or<double>(t.run_config, "anomaly_k", calibration.k);
        calibration_ptr = &calibration;
    }

    ClusterParams fallback;
    fallback.d_merge = config.monitor.d_merge;
    fallback.rank_weighted_mass = config.monitor.rank_weighted_mass;
    ReplayReport report = replay_trajectory(t, *embedder, calibration_ptr, fallback);

    std::cout << "sessions with signals: " << report.sessions_with_signals << "\n";
    std::cout << "verified: " << report.verified << "\n";
    for (const auto& [index, field] : report.unverifiable) {
        std::cout << "unverifiable: session " << index << " (missing " << field << ")\n";
    }
    for (const auto& m : report.mismatches) {
        std::cout << "MISMATCH session " << m.session_index << " " << m.field
                  << ": stored=" << m.stored << " recomputed=" << m.recomputed << "\n";
    }
    if (!report.clean()) {
        std::cout << "result: " << report.mismatches.size() << " mismatch(es)\n";
        return kExitMismatch;
    }
    std::cout << "result: ok\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep-search agent runtime with hierarchical metacognitive monitoring"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run one query or a query file through the monitored loop");
    run->add_option("--query", run_args.query, "Query text");
    run->add_option("--queries", run_args.queries_file, "File with one query per line (optional 'id<TAB>text')");
    run->add_option("--config", run_args.config_path, "Config file (JSON)");
    run->add_option("--parallelism", run_args.parallelism, "Concurrent trajectories")->default_val(1);
    run->add_option("--max-steps", run_args.max_steps_override, "Override monitor.max_steps");
    run->add_option("--log-dir", run_args.log_dir_override, "Override paths.log_dir");
    run->add_flag("--no-fast-monitor", run_args.no_fast, "Disable the fast consistency monitor");
    run->add_flag("--no-slow-monitor", run_args.no_slow, "Disable the experience-driven monitor");
    run->add_flag("--online-memory", run_args.online_memory, "Enable online memory updates");

    std::string bm_logs, bm_out, bm_config;
    auto* build_memory = app.add_subcommand("build-memory", "Build the experience memory from labeled trajectory logs");
    build_memory->add_option("--logs", bm_logs, "Directory of trajectory logs")->required();
    build_memory->add_option("--out", bm_out, "Output store file")->required();
    build_memory->add_option("--config", bm_config, "Config file (JSON)");

    std::string fc_logs, fc_out;
    double fc_k = 2.0, fc_holdout = 0.0;
    auto* fit_cal = app.add_subcommand("fit-calibration", "Fit the se->re calibration from Success-labeled logs");
    fit_cal->add_option("--logs", fc_logs, "Directory of trajectory logs")->required();
    fit_cal->add_option("--out", fc_out, "Output calibration file")->required();
    fit_cal->add_option("--k", fc_k, "Anomaly threshold multiplier")->default_val(2.0);
    fit_cal->add_option("--sigma-holdout", fc_holdout, "Fraction of points held out for sigma")->default_val(0.0);

    std::string im_store, im_query, im_config;
    int im_k = 2;
    auto* inspect = app.add_subcommand("inspect-memory", "Query a memory store and print ranked hits");
    inspect->add_option("--store", im_store, "Memory store file")->required();
    inspect->add_option("--query", im_query, "Query text")->required();
    inspect->add_option("--k", im_k, "Hits per pool")->default_val(2);
    inspect->add_option("--config", im_config, "Config file (JSON)");

    std::string rp_log, rp_config, rp_calibration;
    auto* replay = app.add_subcommand("replay", "Recompute signals from a log and diff against stored values");
    replay->add_option("--log", rp_log, "Trajectory log file")->required();
    replay->add_option("--config", rp_config, "Config file (JSON)");
    replay->add_option("--calibration", rp_calibration, "Calibration file override");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (build_memory->parsed()) return cmd_build_memory(bm_logs, bm_out, bm_config);
        if (fit_cal->parsed()) return cmd_fit_calibration(fc_logs, fc_out, fc_k, fc_holdout);
        if (inspect->parsed()) return cmd_inspect_memory(im_store, im_query, im_k, im_config);
        if (replay->parsed()) return cmd_replay(rp_log, rp_config, rp_calibration);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const BackendUnavailable& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
