// Minimal walkthrough of the fast monitor on synthetic data: embed two
// batches of documents, compute searching/reasoning entropy, fit a
// calibration and gate the residual.

#include <iostream>
#include <vector>

#include "agentmon/backends.hpp"
#include "agentmon/calibration.hpp"
#include "agentmon/entropy.hpp"

using namespace agentmon;

int main() {
    MockEmbeddingBackend embedder;

    // coherent evidence: five near-identical documents
    std::vector<std::string> coherent(5, "The bridge opened in 1932 after four years of construction.");
    auto coherent_clusters = cluster_documents(embedder.embed(coherent));
    double se_low = searching_entropy(coherent_clusters);

    // fragmented evidence: two disagreeing groups
    std::vector<std::string> fragmented = {
        "The bridge opened in 1932 after four years of construction.",
        "The bridge opened in 1932 after four years of construction.",
        "The bridge opened in 1932 after four years of construction.",
        "Records show the crossing was inaugurated in 1921 by the governor.",
        "Records show the crossing was inaugurated in 1921 by the governor.",
    };
    auto fragmented_clusters = cluster_documents(embedder.embed(fragmented));
    double se_high = searching_entropy(fragmented_clusters);

    // confident reasoning (one-hot) vs. torn reasoning (uniform over 2)
    TokenLogprobs confident = {{{"The", 0.0}}, {{" answer", 0.0}}, {{" is", 0.0}}};
    TokenLogprobs torn = {{{"1932", -0.6931471805599453}, {"1921", -0.6931471805599453}},
                          {{" maybe", -0.6931471805599453}, {" surely", -0.6931471805599453}}};

    std::cout << "SE coherent evidence:   " << se_low << " (" << coherent_clusters.cluster_count
              << " cluster)\n";
    std::cout << "SE fragmented evidence: " << se_high << " (" << fragmented_clusters.cluster_count
              << " clusters)\n";
    std::cout << "RE confident reasoning: " << reasoning_entropy(confident) << "\n";
    std::cout << "RE torn reasoning:      " << reasoning_entropy(torn) << "\n";

    // calibrate on well-behaved steps, then gate a suspicious one
    std::vector<CalibrationPoint> history = {
        {0.0, 0.05, "t1", 1}, {0.2, 0.24, "t1", 2}, {0.5, 0.55, "t2", 1},
        {0.7, 0.71, "t2", 2}, {1.0, 1.02, "t3", 1},
    };
    CalibrationModel model = fit(history, 2.0);
    std::cout << "calibration: re_hat = " << model.a << " * se + " << model.b
              << ", tau = " << model.tau() << "\n";

    double eps_ok = residual(model, se_high, reasoning_entropy(torn));
    double eps_bad = residual(model, se_low, 2.5);
    std::cout << "fragmented evidence + torn reasoning: epsilon = " << eps_ok << " -> "
              << (is_anomaly(model, eps_ok) ? "ANOMALY" : "ok") << "\n";
    std::cout << "coherent evidence + high uncertainty: epsilon = " << eps_bad << " -> "
              << (is_anomaly(model, eps_bad) ? "ANOMALY" : "ok") << "\n";
    return 0;
}
