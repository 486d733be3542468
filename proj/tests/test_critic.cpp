#include <gtest/gtest.h>

#include <random>

#include "agentmon/config.hpp"
#include "agentmon/critic.hpp"
#include "test_helpers.hpp"

using namespace agentmon;

namespace {

json snapshot() {
    return {{"query", "year of the bridge"},
            {"reasoning", "the sources disagree"},
            {"action", "tool_call search {\"query\":\"bridge year\"}"},
            {"observation", "[1] 1932 ... [4] 1921 ..."}};
}

RetrievalResult hits_with_experiences() {
    RetrievalResult hits;
    MemoryEntry good;
    good.entry_id = "s1";
    good.abstraction = "{\"behavior_pattern\": \"cross-check\", \"insight\": \"verify both sources\"}";
    good.label = Label::Success;
    hits.success_hits.emplace_back(good, 0.91);
    MemoryEntry bad;
    bad.entry_id = "f1";
    bad.abstraction =
        "{\"behavior_pattern\": \"rushed\", \"insight\": \"do not answer before checking dates\"}";
    bad.label = Label::Failure;
    hits.failure_hits.emplace_back(bad, 0.87);
    return hits;
}

MockChatBackend respond_once(const std::string& text) {
    MockChatBackend mock;
    mock.add_rule([](const ChatRequest&) { return true; },
                  ChatResponse{text, {}, FinishReason::Stop});
    return mock;
}

const std::string kTemplate = default_templates().critic;

}  // namespace

TEST(Critic, ErrorVerdictKeepsSuggestion) {
    MockChatBackend mock = respond_once(
        "Let me check.\n```json\n{\"error\": true, \"suggestion\": \"re-verify the publication "
        "year before concluding\", \"rationale\": \"dates conflict\"}\n```\nend");
    Critique c = criticize(snapshot(), hits_with_experiences(), "step 1: searched", mock, kTemplate);
    EXPECT_EQ(c.err, 1);
    EXPECT_EQ(c.delta, "re-verify the publication year before concluding");
    EXPECT_EQ(c.rationale, "dates conflict");
    EXPECT_NE(c.raw.find("Let me check."), std::string::npos);
}

TEST(Critic, CleanVerdictStripsSuggestion) {
    MockChatBackend mock =
        respond_once("```json\n{\"error\": false, \"suggestion\": \"ignore me\"}\n```");
    Critique c = criticize(snapshot(), hits_with_experiences(), "", mock, kTemplate);
    EXPECT_EQ(c.err, 0);
    EXPECT_TRUE(c.delta.empty());  // err=0 forces delta = empty
}

TEST(Critic, MalformedTwiceFailsOpenAndLogsEvent) {
    MockChatBackend mock = respond_once("no structure here at all");
    std::vector<std::string> events;
    EventSink sink = [&](const std::string& event, const std::string&) { events.push_back(event); };
    Critique c = criticize(snapshot(), {}, "", mock, kTemplate, sink);
    EXPECT_EQ(c.err, 0);
    EXPECT_TRUE(c.delta.empty());
    EXPECT_EQ(c.raw, "no structure here at all");
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0], "CriticParseFailure");
}

TEST(Critic, RetryWithReminderSucceeds) {
    MockChatBackend mock;
    // first call: 1 user message -> garbage; retry carries 3 messages
    mock.add_rule([](const ChatRequest& r) { return r.messages.size() == 1; },
                  ChatResponse{"garbled |||", {}, FinishReason::Stop});
    mock.add_rule(
        [](const ChatRequest& r) {
            return r.messages.size() == 3 &&
                   r.messages.back().content.find("could not be parsed") != std::string::npos;
        },
        ChatResponse{"{\"error\": true, \"suggestion\": \"slow down\"}", {}, FinishReason::Stop});

    std::vector<std::string> events;
    EventSink sink = [&](const std::string& event, const std::string&) { events.push_back(event); };
    Critique c = criticize(snapshot(), {}, "", mock, kTemplate, sink);
    EXPECT_EQ(c.err, 1);
    EXPECT_EQ(c.delta, "slow down");
    EXPECT_TRUE(events.empty());  // parse eventually succeeded
}

TEST(Critic, ErrorWithoutSuggestionGetsSynthesizedDelta) {
    MockChatBackend mock = respond_once("{\"error\": 1, \"suggestion\": \"\"}");
    Critique c = criticize(snapshot(), {}, "", mock, kTemplate);
    EXPECT_EQ(c.err, 1);
    EXPECT_EQ(c.delta, kSynthesizedDelta);
}

TEST(Critic, BareJsonWithProseParses) {
    MockChatBackend mock = respond_once(
        "I believe the step is fine. {\"error\": \"false\", \"rationale\": \"coherent\"} Hope that "
        "helps.");
    Critique c = criticize(snapshot(), {}, "", mock, kTemplate);
    EXPECT_EQ(c.err, 0);
    EXPECT_EQ(c.rationale, "coherent");
}

TEST(Critic, PromptCarriesSessionAndExperiences) {
    std::string seen_prompt;
    MockChatBackend mock;
    mock.add_rule([](const ChatRequest&) { return true; },
                  [&seen_prompt](const ChatRequest& r) {
                      seen_prompt = r.messages[0].content;
                      return ChatResponse{"{\"error\": false}", {}, FinishReason::Stop};
                  });
    criticize(snapshot(), hits_with_experiences(), "step 1: searched for the year", mock, kTemplate);

    EXPECT_NE(seen_prompt.find("the sources disagree"), std::string::npos);
    EXPECT_NE(seen_prompt.find("step 1: searched for the year"), std::string::npos);
    // success experiences list the abstraction; failure experiences foreground the insight
    EXPECT_NE(seen_prompt.find("cross-check"), std::string::npos);
    EXPECT_NE(seen_prompt.find("Insight: do not answer before checking dates"), std::string::npos);
}

TEST(Critic, DeterministicWithScriptedBackend) {
    MockChatBackend mock =
        respond_once("```json\n{\"error\": true, \"suggestion\": \"check again\"}\n```");
    Critique c1 = criticize(snapshot(), hits_with_experiences(), "digest", mock, kTemplate);
    Critique c2 = criticize(snapshot(), hits_with_experiences(), "digest", mock, kTemplate);
    EXPECT_EQ(c1, c2);
}

// invariant fuzz: no adversarial output may produce an invalid Critique
TEST(CriticProperty, AdversarialOutputsNeverViolateInvariants) {
    std::mt19937_64 rng(47);
    std::uniform_int_distribution<int> shape(0, 9);
    std::uniform_int_distribution<int> coin(0, 1);

    for (int trial = 0; trial < 1000; ++trial) {
        std::string text;
        switch (shape(rng)) {
            case 0: text = ""; break;
            case 1: text = testutil::random_text(rng, 0, 200); break;
            case 2: text = "{\"error\": " + testutil::random_text(rng, 1, 10) + "}"; break;
            case 3:
                text = std::string("{\"error\": ") + (coin(rng) ? "true" : "false") +
                       ", \"suggestion\": \"" + testutil::random_text(rng, 0, 30) + "\"}";
                break;
            case 4: text = "```json\n{\"error\": tru"; break;            // truncated fence
            case 5: text = "{\"suggestion\": \"no verdict field\"}"; break;
            case 6: text = "```json\n{}\n```"; break;
            case 7: text = "{\"error\": [1,2]}"; break;
            case 8: text = std::string(2000, '{'); break;                // nesting bomb
            case 9:
                text = "prose {\"error\": " + std::to_string(coin(rng)) +
                       ", \"suggestion\": \"\", \"rationale\": 7} more prose";
                break;
        }
        MockChatBackend mock = respond_once(text);
        Critique c;
        ASSERT_NO_THROW(c = criticize(snapshot(), {}, "", mock, kTemplate)) << "trial " << trial;
        ASSERT_TRUE(c.err == 0 || c.err == 1);
        if (c.err == 0) {
            ASSERT_TRUE(c.delta.empty()) << "err=0 with delta, trial " << trial;
        } else {
            ASSERT_FALSE(c.delta.empty()) << "err=1 without delta, trial " << trial;
        }
        ASSERT_EQ(c.raw, text);  // audit trail intact
    }
}
