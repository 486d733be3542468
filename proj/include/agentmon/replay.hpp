#pragma once
// Regression tool: recompute uncertainty signals from the raw data stored in
// a trajectory log and diff them against the recorded values. A log produced
// by this runtime with monitors enabled must replay with zero mismatches.

#include <cmath>
#include <string>
#include <vector>

#include "agentmon/calibration.hpp"
#include "agentmon/entropy.hpp"
#include "agentmon/trajectory.hpp"

namespace agentmon {

struct ReplayMismatch {
    int session_index = 0;
    std::string field;
    double stored = 0.0;
    double recomputed = 0.0;
};

struct ReplayReport {
    std::size_t sessions_with_signals = 0;
    std::size_t verified = 0;
    std::vector<ReplayMismatch> mismatches;
    std::vector<std::pair<int, std::string>> unverifiable;  // (session index, missing raw field)

    bool clean() const { return mismatches.empty(); }
};

// Cluster parameters are taken from the log's own header config when present
// so the replay uses the settings of the producing run. The calibration model
// is optional; without it only se/re and the epsilon identity are checked.
inline ReplayReport replay_trajectory(const Trajectory& t, EmbeddingBackend& embedder,
                                      const CalibrationModel* calibration,
                                      ClusterParams fallback_params = {}, double tol = 1e-9) {
    ClusterParams params = fallback_params;
    if (t.run_config.is_object()) {
        params.d_merge = field_or<double>(t.run_config, "d_merge", params.d_merge);
        params.rank_weighted_mass =
            field_or<bool>(t.run_config, "rank_weighted_mass", params.rank_weighted_mass);
    }

    ReplayReport report;
    for (const auto& s : t.sessions) {
        if (!s.signals) continue;
        ++report.sessions_with_signals;
        if (s.documents.empty()) {
            report.unverifiable.emplace_back(s.index, "documents");
            continue;
        }
        if (s.reasoning_token_logprobs.empty()) {
            report.unverifiable.emplace_back(s.index, "reasoning_token_logprobs");
            continue;
        }

        std::vector<std::string> texts;
        texts.reserve(s.documents.size());
        for (const auto& d : s.documents) texts.push_back(document_embed_text(d));
        double se = searching_entropy(cluster_documents(embedder.embed(texts), params));
        double re = reasoning_entropy(s.reasoning_token_logprobs);

        auto diff = [&](const char* field, double stored, double recomputed) {
            if (std::abs(stored - recomputed) > tol) {
                report.mismatches.push_back({s.index, field, stored, recomputed});
            }
        };
        diff("se", s.signals->se, se);
        diff("re", s.signals->re, re);
        diff("epsilon", s.signals->epsilon, s.signals->re - s.signals->re_hat);
        if (calibration != nullptr) {
            diff("re_hat", s.signals->re_hat, predict(*calibration, se));
            double eps = residual(*calibration, se, re);
            bool anomaly = is_anomaly(*calibration, eps);
            if (anomaly != s.signals->anomaly) {
                report.mismatches.push_back(
                    {s.index, "anomaly", s.signals->anomaly ? 1.0 : 0.0, anomaly ? 1.0 : 0.0});
            }
        }
        ++report.verified;
    }
    return report;
}

}  // namespace agentmon
