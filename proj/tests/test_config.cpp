#include <gtest/gtest.h>

#include <cstdlib>

#include "agentmon/config.hpp"
#include "test_helpers.hpp"

using namespace agentmon;

TEST(Config, DefaultsAreValidAndMatchDocumentedValues) {
    Config c = Config::defaults();
    std::vector<std::string> problems;
    validate_config(c, problems);
    EXPECT_TRUE(problems.empty());

    EXPECT_EQ(c.monitor.doc_top_k, 5);
    EXPECT_EQ(c.monitor.k_per_pool, 2);
    EXPECT_DOUBLE_EQ(c.monitor.anomaly_k, 2.0);
    EXPECT_DOUBLE_EQ(c.monitor.tau_dup, 0.95);
    EXPECT_DOUBLE_EQ(c.monitor.d_merge, 0.35);
    EXPECT_EQ(c.monitor.top_logprobs, 20);
    EXPECT_FALSE(c.monitor.online_memory_enabled);
    EXPECT_EQ(c.seed, 0u);
}

TEST(Config, LoadAppliesOverrides) {
    auto dir = testutil::unique_temp_dir("config");
    json doc = {
        {"seed", 7},
        {"backends", {{"policy", {{"kind", "mock"}}}, {"embedding", {{"dim", 64}}}}},
        {"monitor", {{"anomaly_k", 1.5}, {"doc_top_k", 3}, {"online_memory_enabled", true}}},
        {"paths", {{"log_dir", "mylogs"}}},
    };
    std::string path = (dir / "config.json").string();
    write_file(path, doc.dump(2));

    Config c = load_config(path);
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.embedding.dim, 64);
    EXPECT_DOUBLE_EQ(c.monitor.anomaly_k, 1.5);
    EXPECT_EQ(c.monitor.doc_top_k, 3);
    EXPECT_TRUE(c.monitor.online_memory_enabled);
    EXPECT_EQ(c.paths.log_dir, "mylogs");
    // untouched fields keep defaults
    EXPECT_EQ(c.monitor.k_per_pool, 2);
}

TEST(Config, AllInvalidFieldsAreNamed) {
    json doc = {
        {"monitor", {{"anomaly_k", -1.0}, {"tau_dup", 1.5}, {"d_merge", 2.5}, {"doc_top_k", 0}}},
        {"templates", {{"injection", "no slot here"}}},
    };
    try {
        config_from_json(doc);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("monitor.anomaly_k"), std::string::npos);
        EXPECT_NE(msg.find("monitor.tau_dup"), std::string::npos);
        EXPECT_NE(msg.find("monitor.d_merge"), std::string::npos);
        EXPECT_NE(msg.find("monitor.doc_top_k"), std::string::npos);
        EXPECT_NE(msg.find("templates.injection"), std::string::npos);
        EXPECT_NE(msg.find("{delta}"), std::string::npos);
    }
}

TEST(Config, HttpKindRequiresEndpoint) {
    json doc = {{"backends", {{"policy", {{"kind", "http"}}}}}};
    EXPECT_THROW(config_from_json(doc), ConfigError);

    json ok = {{"backends", {{"policy", {{"kind", "http"}, {"endpoint", "http://localhost:9"}}}}}};
    Config c = config_from_json(ok);
    EXPECT_EQ(c.policy.kind, "http");
}

TEST(Config, UnknownBackendKindRejected) {
    json doc = {{"backends", {{"search", {{"kind", "telepathy"}}}}}};
    EXPECT_THROW(config_from_json(doc), ConfigError);
}

TEST(Config, FixtureSearchNeedsCorpusPath) {
    json doc = {{"backends", {{"search", {{"kind", "fixture"}}}}}};
    EXPECT_THROW(config_from_json(doc), ConfigError);
    json ok = {{"backends", {{"search", {{"kind", "fixture"}}}}},
               {"paths", {{"fixture_corpus", "/tmp/corpus"}}}};
    EXPECT_EQ(config_from_json(ok).search.kind, "fixture");
}

TEST(Config, EnvInterpolation) {
    ::setenv("AGENTMON_TEST_SECRET", "sk-12345", 1);
    json doc = {{"backends",
                 {{"policy",
                   {{"kind", "http"},
                    {"endpoint", "http://h"},
                    {"api_key_env", "CHAT_API_KEY"},
                    {"model", "${AGENTMON_TEST_SECRET}-model"}}}}}};
    Config c = config_from_json(doc);
    EXPECT_EQ(c.policy.model, "sk-12345-model");
    ::unsetenv("AGENTMON_TEST_SECRET");
}

TEST(Config, MissingEnvVariableIsDiagnosed) {
    ::unsetenv("AGENTMON_NOT_SET");
    json doc = {{"backends", {{"policy", {{"model", "${AGENTMON_NOT_SET}"}}}}}};
    try {
        config_from_json(doc);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("AGENTMON_NOT_SET"), std::string::npos);
    }
}

TEST(Config, TemplateSlotValidation) {
    json doc = {{"templates", {{"critic", "missing every slot"}}}};
    try {
        config_from_json(doc);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("{session}"), std::string::npos);
        EXPECT_NE(msg.find("{history_digest}"), std::string::npos);
        EXPECT_NE(msg.find("{success_experiences}"), std::string::npos);
        EXPECT_NE(msg.find("{failure_experiences}"), std::string::npos);
    }
}

TEST(Config, InvalidJsonFileIsConfigError) {
    auto dir = testutil::unique_temp_dir("config_bad");
    std::string path = (dir / "broken.json").string();
    write_file(path, "{ nope");
    EXPECT_THROW(load_config(path), ConfigError);
}
