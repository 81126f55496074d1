#include <autokg/llm.hpp>
#include <gtest/gtest.h>

#include <atomic>
#include <nlohmann/json.hpp>
#include <thread>

#include "fixtures.hpp"

namespace autokg {
namespace {

ChatRequest request(std::string prompt, int max_tokens = 1024) {
  ChatRequest r;
  r.prompt = std::move(prompt);
  r.max_output_tokens = max_tokens;
  return r;
}

TEST(ScriptedMock, FixtureReplay) {
  ScriptedMock mock;
  mock.on("determine the core theme", "Alex, Cafe A, Company B");
  const auto a = mock.complete(request("please determine the core theme of these"));
  EXPECT_EQ(a, "Alex, Cafe A, Company B");
  EXPECT_EQ(mock.complete(request("please determine the core theme of these")), a);
  EXPECT_EQ(mock.calls(), 2u);
}

TEST(ScriptedMock, FirstMatchWinsAndEmptyPatternMatchesAll) {
  ScriptedMock mock;
  mock.on("Keywords", "a, b").on("", "fallback");
  EXPECT_EQ(mock.complete(request("some Keywords here")), "a, b");
  EXPECT_EQ(mock.complete(request("zzz")), "fallback");
}

TEST(ScriptedMock, SequenceRepeatsLast) {
  ScriptedMock mock;
  mock.on_sequence("q", {"x", "y"});
  EXPECT_EQ(mock.complete(request("q")), "x");
  EXPECT_EQ(mock.complete(request("q")), "y");
  EXPECT_EQ(mock.complete(request("q")), "y");
  EXPECT_EQ(mock.consumed(0), 3u);
}

TEST(ScriptedMock, MissNamesClosestPattern) {
  ScriptedMock mock;
  mock.on("organizing keyword lists", "x").on("zebra", "y");
  try {
    mock.complete(request("you are organizing keyword list entries"));
    FAIL() << "expected FixtureError";
  } catch (const FixtureError& e) {
    EXPECT_NE(std::string(e.what()).find("organizing keyword lists"), std::string::npos) << e.what();
  }
}

TEST(ScriptedMock, RegexAndCallable) {
  ScriptedMock mock;
  mock.on_regex("^count: [0-9]+$", "number").on_call("echo", [](const std::string& p) { return p + "!"; });
  EXPECT_EQ(mock.complete(request("count: 42")), "number");
  EXPECT_EQ(mock.complete(request("echo")), "echo!");
}

TEST(ScriptedMock, ResponseOverLimitIsFixtureError) {
  ScriptedMock mock;
  mock.on("", "one two three");
  EXPECT_THROW(mock.complete(request("p", 2)), FixtureError);
}

TEST(ScriptedMock, FromJson) {
  const auto j = nlohmann::json::parse(R"([
    {"match": "regex", "pattern": "^a", "response": "A"},
    {"match": "substring", "pattern": "b", "responses": ["B1", "B2"]}
  ])");
  auto mock = ScriptedMock::from_json(j);
  EXPECT_EQ(mock->complete(request("abc")), "A");
  EXPECT_EQ(mock->complete(request("xb")), "B1");
  EXPECT_EQ(mock->complete(request("xb")), "B2");
}

class FlakyProvider final : public ChatProvider {
 public:
  explicit FlakyProvider(int failures) : failures_(failures) {}
  std::string complete(const ChatRequest&) override {
    if (attempts_++ < failures_) throw ProviderError("flaky", {}, true);
    return "ok";
  }
  std::string name() const override { return "flaky"; }
  int attempts() const { return attempts_; }

 private:
  int failures_;
  std::atomic<int> attempts_{0};
};

TEST(LlmClient, RetriesTransientFailures) {
  auto flaky = std::make_shared<FlakyProvider>(2);
  LlmClientOptions opt;
  opt.max_retries = 2;
  opt.backoff_ms = 0;
  LlmClient client(flaky, opt);
  EXPECT_EQ(client.complete(request("p")), "ok");
  EXPECT_EQ(flaky->attempts(), 3);
  EXPECT_EQ(client.transcript().size(), 1u);
}

TEST(LlmClient, GivesUpAfterRetries) {
  auto flaky = std::make_shared<FlakyProvider>(5);
  LlmClientOptions opt;
  opt.max_retries = 1;
  opt.backoff_ms = 0;
  LlmClient client(flaky, opt);
  EXPECT_THROW(client.complete(request("p")), ProviderError);
  EXPECT_EQ(flaky->attempts(), 2);
}

TEST(LlmClient, TranscriptRecordsAndPersists) {
  testing::TempDir dir("transcript");
  auto mock = std::make_shared<ScriptedMock>();
  mock->on("", "alpha beta");
  auto transcript = std::make_shared<Transcript>(dir / "t.jsonl", true);
  LlmClient client(mock, {}, transcript);
  auto r = request("hello there world");
  r.task = TaskId::keyword_extraction;
  r.fixed_tokens = 1;
  client.complete(r);

  const auto records = Transcript::read(dir / "t.jsonl");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].task, TaskId::keyword_extraction);
  EXPECT_EQ(records[0].prompt, "hello there world");
  EXPECT_EQ(records[0].response, "alpha beta");
  EXPECT_EQ(records[0].prompt_tokens, 3u);
  EXPECT_EQ(records[0].response_tokens, 2u);
  EXPECT_EQ(records[0].fixed_tokens, 1u);
  EXPECT_EQ(transcript->total_tokens(TaskId::keyword_extraction), 5u);
  EXPECT_EQ(transcript->total_tokens(TaskId::query_response), 0u);
}

TEST(LlmClient, ConcurrentCallsAllRecorded) {
  auto mock = std::make_shared<ScriptedMock>();
  mock->on("", "r");
  LlmClient client(mock);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&client, t] {
      for (int i = 0; i < 10; ++i) client.complete(request("p" + std::to_string(t)));
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(client.transcript().size(), 80u);
}

TEST(ChatConfig, Validation) {
  EXPECT_THROW(parse_chat_provider_kind("telepathy"), ConfigError);
  ChatProviderConfig c;
  c.kind = ChatProviderKind::remote;
  EXPECT_THROW(c.validate(), ConfigError);
  ChatRequest r;
  r.prompt = "";
  EXPECT_THROW(r.validate(), ParameterError);
}

}  // namespace
}  // namespace autokg
