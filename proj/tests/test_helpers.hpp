#pragma once
// Shared fixtures and builders for the unit suites.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "agentmon/backends.hpp"
#include "agentmon/trajectory.hpp"

namespace testutil {

using namespace agentmon;

inline std::filesystem::path unique_temp_dir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("agentmon_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(dir);
    return dir;
}

inline RetrievedDocument doc(const std::string& id, const std::string& content, int rank,
                             const std::string& title = "") {
    return RetrievedDocument{id, title, content, rank};
}

inline Session search_session(int index, const std::string& query,
                              std::vector<RetrievedDocument> docs,
                              TokenLogprobs logprobs = {{{"ok", 0.0}}}) {
    Session s;
    s.index = index;
    s.reasoning_text = "looking up " + query;
    s.reasoning_token_logprobs = std::move(logprobs);
    s.action = Action::tool_call("search", {{"query", query}});
    s.documents = std::move(docs);
    s.tool_observation = "observation for " + query;
    return s;
}

inline Session answer_session(int index, const std::string& answer) {
    Session s;
    s.index = index;
    s.reasoning_text = "concluding";
    s.reasoning_token_logprobs = {{{"done", 0.0}}};
    s.action = Action::terminate(answer);
    return s;
}

inline Trajectory small_trajectory(const std::string& id = "traj-1",
                                   Outcome outcome = Outcome::Unknown) {
    Trajectory t;
    t.query = {id, "what year did the bridge open?", {{"benchmark", "unit"}}};
    t.sessions.push_back(search_session(
        1, "bridge opening year",
        {doc("d1", "The bridge opened in 1932.", 1, "History"),
         doc("d2", "Construction finished in 1932.", 2)}));
    t.sessions.push_back(answer_session(2, "1932"));
    t.outcome = outcome;
    t.termination = Termination::Answered;
    return t;
}

// Random unit vector, any dimension.
inline EmbeddingVector random_unit_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    EmbeddingVector v;
    v.values.resize(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v.values) {
            x = normal(rng);
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v.values) x /= norm;
    return v;
}

inline std::string random_text(std::mt19937_64& rng, std::size_t min_len = 3,
                               std::size_t max_len = 40) {
    static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz 0123456789";
    std::uniform_int_distribution<std::size_t> len_dist(min_len, max_len);
    std::uniform_int_distribution<std::size_t> char_dist(0, sizeof(alphabet) - 2);
    std::string s(len_dist(rng), ' ');
    for (auto& c : s) c = alphabet[char_dist(rng)];
    return s;
}

}  // namespace testutil
