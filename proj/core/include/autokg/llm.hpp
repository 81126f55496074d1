#pragma once

#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "autokg/corpus.hpp"

namespace autokg {

enum class TaskId : int { keyword_extraction = 1, keyword_refinement = 2, query_response = 3 };

struct ChatRequest {
  std::string prompt;
  int max_output_tokens = 1024;
  std::string model_name;
  TaskId task = TaskId::query_response;
  // Tokens of template text in `prompt` (task information, requirements,
  // separators). Only used for budget accounting.
  std::size_t fixed_tokens = 0;

  void validate() const;
};

struct TranscriptRecord {
  TaskId task = TaskId::query_response;
  std::string model_name;
  std::string prompt;
  std::string response;
  std::size_t prompt_tokens = 0;
  std::size_t response_tokens = 0;
  std::size_t fixed_tokens = 0;
  std::string timestamp;  // UTC, ISO 8601
};

nlohmann::json to_json(const TranscriptRecord& record);
TranscriptRecord transcript_record_from_json(const nlohmann::json& j);

// Append-only record of every completed chat call. With a path, each record
// is also written as one JSON line.
class Transcript {
 public:
  Transcript() = default;
  explicit Transcript(const std::filesystem::path& file, bool truncate = false);

  void append(TranscriptRecord record);
  std::vector<TranscriptRecord> records() const;
  std::size_t size() const;
  std::size_t total_tokens(TaskId task) const;

  static std::vector<TranscriptRecord> read(const std::filesystem::path& file);

 private:
  mutable std::mutex mutex_;
  std::vector<TranscriptRecord> records_;
  std::ofstream out_;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  // One attempt. Transient failures throw ProviderError with transient() set.
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Replays canned responses. The first fixture whose matcher accepts the
// prompt answers; a fixture with several responses hands them out in order
// and repeats the last one once exhausted.
class ScriptedMock final : public ChatProvider {
 public:
  enum class MatchKind { substring, regex };

  struct Fixture {
    MatchKind kind = MatchKind::substring;
    std::string pattern;  // empty substring matches everything
    std::vector<std::string> responses;
    // Computes the response from the prompt instead of `responses`.
    std::function<std::string(const std::string&)> respond;
  };

  explicit ScriptedMock(std::vector<Fixture> fixtures = {}, std::string tokenizer_id = std::string(kDefaultTokenizer));

  ScriptedMock& on(std::string substring, std::string response);
  ScriptedMock& on_sequence(std::string substring, std::vector<std::string> responses);
  ScriptedMock& on_regex(std::string pattern, std::string response);
  ScriptedMock& on_call(std::string substring, std::function<std::string(const std::string&)> respond);

  std::string complete(const ChatRequest& request) override;
  std::string name() const override { return "mock"; }

  std::size_t calls() const;
  std::size_t consumed(std::size_t fixture) const;

  // [{"match": "substring"|"regex", "pattern": "...", "response": "..."} or
  //  "responses": [...]]
  static std::unique_ptr<ScriptedMock> from_json(const nlohmann::json& fixtures,
                                                 std::string tokenizer_id = std::string(kDefaultTokenizer));
  static std::unique_ptr<ScriptedMock> from_file(const std::filesystem::path& file,
                                                 std::string tokenizer_id = std::string(kDefaultTokenizer));

 private:
  struct Entry {
    Fixture fixture;
    std::optional<std::regex> compiled;
    std::size_t used = 0;
  };
  void add(Fixture fixture);

  mutable std::mutex mutex_;
  std::vector<Entry> entries_;
  std::string tokenizer_id_;
  std::size_t calls_ = 0;
};

// Offline stand-in that answers from the prompt itself: frequent content
// words for extraction, the given list for refinement, and the first
// retrieved text for queries. Meant for demos and smoke runs.
class HeuristicProvider final : public ChatProvider {
 public:
  std::string complete(const ChatRequest& request) override;
  std::string name() const override { return "heuristic"; }
};

enum class ChatProviderKind { remote, mock, heuristic };
std::string_view to_string(ChatProviderKind kind);
ChatProviderKind parse_chat_provider_kind(std::string_view name);

struct ChatProviderConfig {
  ChatProviderKind kind = ChatProviderKind::heuristic;
  std::string endpoint_url;  // e.g. https://api.openai.com/v1/chat/completions
  std::string model_name = "gpt-3.5-turbo-16k";
  double temperature = 0.0;
  int timeout_seconds = 120;
  int max_retries = 3;
  int in_flight_limit = 4;
  std::string api_key_env = "AUTOKG_API_KEY";
  std::filesystem::path fixtures;  // mock only

  void validate() const;
};

// OpenAI chat-completions wire shape; the whole prompt is sent as a single
// user message.
class RemoteChatProvider final : public ChatProvider {
 public:
  explicit RemoteChatProvider(ChatProviderConfig config);
  std::string complete(const ChatRequest& request) override;
  std::string name() const override { return "remote"; }

 private:
  ChatProviderConfig config_;
  std::string api_key_;
};

std::unique_ptr<ChatProvider> make_chat_provider(const ChatProviderConfig& config,
                                                 std::string_view tokenizer_id = kDefaultTokenizer);

struct LlmClientOptions {
  int max_retries = 3;
  int in_flight_limit = 4;
  int backoff_ms = 50;
  std::string tokenizer_id = std::string(kDefaultTokenizer);
  std::string model_name;
};

// Retries, bounded concurrency and transcript recording around a provider.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<ChatProvider> provider, LlmClientOptions options = {},
            std::shared_ptr<Transcript> transcript = nullptr);

  std::string complete(ChatRequest request);

  const LlmClientOptions& options() const { return options_; }
  Transcript& transcript() { return *transcript_; }
  const Transcript& transcript() const { return *transcript_; }
  ChatProvider& provider() { return *provider_; }

 private:
  std::shared_ptr<ChatProvider> provider_;
  LlmClientOptions options_;
  std::shared_ptr<Transcript> transcript_;
  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  int busy_ = 0;
};

}  // namespace autokg
