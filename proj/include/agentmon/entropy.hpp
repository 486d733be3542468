#pragma once
// Uncertainty signals for retrieval steps: searching entropy over semantic
// clusters of the retrieved documents, reasoning entropy over the policy
// model's per-position top-K token distributions, and their composition into
// per-step UncertaintySignals through the calibration gate.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "agentmon/backends.hpp"
#include "agentmon/calibration.hpp"
#include "agentmon/trajectory.hpp"

namespace agentmon {

struct ClusterParams {
    // Documents whose pairwise cosine distance is <= d_merge end up in one
    // cluster (single linkage, equivalently connected components of the
    // thresholded distance graph). Deterministic and total: would-be noise
    // points become singleton clusters.
    double d_merge = 0.35;
    // Off: cluster mass is the document count fraction. On: documents are
    // weighted 1/rank (input order is retrieval rank order) before
    // normalizing.
    bool rank_weighted_mass = false;
};

struct ClusterAssignment {
    std::vector<int> labels;     // per document, dense 0-based, first-occurrence order
    int cluster_count = 0;       // M >= 1
    std::vector<double> masses;  // p_s per cluster, sums to 1

    bool operator==(const ClusterAssignment&) const = default;
};

inline ClusterAssignment cluster_documents(std::span<const EmbeddingVector> embeddings,
                                           const ClusterParams& params = {}) {
    if (embeddings.empty()) throw EmptyInput("cluster_documents: no embeddings");
    const std::size_t n = embeddings.size();
    const std::size_t dim = embeddings[0].dim();
    for (const auto& e : embeddings) {
        if (e.dim() != dim) {
            throw DimMismatch("cluster_documents: dims " + std::to_string(dim) + " vs " +
                              std::to_string(e.dim()));
        }
        for (double x : e.values) {
            if (!std::isfinite(x)) throw SchemaViolation("cluster_documents: non-finite embedding entry");
        }
    }

    // union-find over the "distance <= d_merge" graph
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (cosine_distance(embeddings[i], embeddings[j]) <= params.d_merge) {
                parent[find(i)] = find(j);
            }
        }
    }

    ClusterAssignment out;
    out.labels.assign(n, -1);
    std::vector<int> root_label(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = find(i);
        if (root_label[r] < 0) root_label[r] = out.cluster_count++;
        out.labels[i] = root_label[r];
    }

    out.masses.assign(static_cast<std::size_t>(out.cluster_count), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double w = params.rank_weighted_mass ? 1.0 / static_cast<double>(i + 1) : 1.0;
        out.masses[static_cast<std::size_t>(out.labels[i])] += w;
        total += w;
    }
    for (double& m : out.masses) m /= total;
    return out;
}

// Shannon entropy of the cluster-mass distribution, in nats.
inline double searching_entropy(const ClusterAssignment& assignment) {
    if (assignment.masses.empty()) throw EmptyInput("searching_entropy: no clusters");
    double h = 0.0;
    for (double m : assignment.masses) {
        if (m < 0.0 || !std::isfinite(m)) {
            throw SchemaViolation("searching_entropy: invalid cluster mass");
        }
        if (m > 0.0) h -= m * std::log(m);
    }
    return h < 0.0 ? 0.0 : h;  // clamp -0.0 from rounding
}

// Mean per-position Shannon entropy of the renormalized top-K distributions,
// in nats. Renormalization is over the listed candidates only, via
// log-sum-exp so large negative logprobs stay stable.
inline double reasoning_entropy(const TokenLogprobs& positions) {
    if (positions.empty()) throw EmptyReasoning("reasoning_entropy: no positions");
    double sum = 0.0;
    for (std::size_t p = 0; p < positions.size(); ++p) {
        const auto& cands = positions[p];
        double max_lp = -std::numeric_limits<double>::infinity();
        for (const auto& c : cands) {
            // tolerate tiny positive rounding from endpoints, reject junk
            if (std::isnan(c.logprob) || c.logprob > 1e-6) {
                throw SchemaViolation("reasoning_entropy: invalid logprob at position " +
                                      std::to_string(p + 1));
            }
            max_lp = std::max(max_lp, c.logprob);
        }
        if (cands.empty() || !(max_lp > -std::numeric_limits<double>::infinity())) {
            throw DegenerateDistribution("reasoning_entropy: no finite candidate at position " +
                                         std::to_string(p + 1));
        }
        double z = 0.0;
        for (const auto& c : cands) z += std::exp(c.logprob - max_lp);
        double log_z = std::log(z) + max_lp;
        double h = 0.0;
        for (const auto& c : cands) {
            double lp = c.logprob - log_z;  // renormalized log-probability
            double prob = std::exp(lp);
            if (prob > 0.0) h -= prob * lp;
        }
        sum += h < 0.0 ? 0.0 : h;
    }
    return sum / static_cast<double>(positions.size());
}

// Document text handed to the embedding backend. Deterministic so replaying
// a log recomputes identical vectors.
inline std::string document_embed_text(const RetrievedDocument& d) {
    return d.title.empty() ? d.content : d.title + "\n" + d.content;
}

// Full fast-monitor computation for one retrieval step. Pure: nothing is
// attached to the session.
inline UncertaintySignals compute_signals(const Session& session, EmbeddingBackend& embedder,
                                          const CalibrationModel& calibration,
                                          const ClusterParams& params = {}) {
    if (session.documents.empty()) {
        throw EmptyInput("compute_signals: session " + std::to_string(session.index) +
                         " has no retrieved documents");
    }
    if (session.reasoning_token_logprobs.empty()) {
        throw EmptyReasoning("compute_signals: session " + std::to_string(session.index) +
                             " has no reasoning token logprobs");
    }
    std::vector<std::string> texts;
    texts.reserve(session.documents.size());
    for (const auto& d : session.documents) texts.push_back(document_embed_text(d));
    std::vector<EmbeddingVector> embeddings = embedder.embed(texts);

    UncertaintySignals out;
    out.se = searching_entropy(cluster_documents(embeddings, params));
    out.re = reasoning_entropy(session.reasoning_token_logprobs);
    out.re_hat = predict(calibration, out.se);
    out.epsilon = out.re - out.re_hat;
    out.anomaly = is_anomaly(calibration, out.epsilon);
    return out;
}

}  // namespace agentmon
