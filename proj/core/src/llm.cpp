#include "autokg/llm.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "autokg/error.hpp"

namespace autokg {
namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::size_t longest_common_substring(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
      best = std::max(best, cur[j]);
    }
    std::swap(prev, cur);
  }
  return best;
}

// Text between the first "```" after `label` and the next "```".
std::optional<std::string> fenced_after(const std::string& prompt, std::string_view label) {
  const auto at = prompt.find(label);
  if (at == std::string::npos) return std::nullopt;
  const auto open = prompt.find("```", at);
  if (open == std::string::npos) return std::nullopt;
  const auto close = prompt.find("```", open + 3);
  if (close == std::string::npos) return std::nullopt;
  return prompt.substr(open + 3, close - open - 3);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "about", "after", "again", "also", "because", "been", "before", "being", "between", "both",
      "could", "does", "doing", "down", "during", "each", "from", "further", "have", "having",
      "here", "into", "itself", "just", "more", "most", "only", "other", "over", "same", "should",
      "some", "such", "than", "that", "their", "them", "then", "there", "these", "they", "this",
      "those", "through", "under", "until", "very", "were", "what", "when", "where", "which",
      "while", "whom", "will", "with", "would", "your", "said", "says", "today", "asked"};
  return words;
}

}  // namespace

void ChatRequest::validate() const {
  if (prompt.empty()) throw ParameterError("chat request: empty prompt");
  if (max_output_tokens < 1) throw ParameterError("chat request: max_output_tokens must be >= 1");
}

nlohmann::json to_json(const TranscriptRecord& r) {
  nlohmann::ordered_json j;
  j["task_id"] = static_cast<int>(r.task);
  j["model_name"] = r.model_name;
  j["prompt_tokens"] = r.prompt_tokens;
  j["response_tokens"] = r.response_tokens;
  j["fixed_tokens"] = r.fixed_tokens;
  j["timestamp"] = r.timestamp;
  j["prompt"] = r.prompt;
  j["response"] = r.response;
  return j;
}

TranscriptRecord transcript_record_from_json(const nlohmann::json& j) {
  TranscriptRecord r;
  const int task = j.at("task_id").get<int>();
  if (task < 1 || task > 3) throw CorruptionError("transcript: bad task_id " + std::to_string(task));
  r.task = static_cast<TaskId>(task);
  r.model_name = j.value("model_name", "");
  r.prompt = j.at("prompt").get<std::string>();
  r.response = j.at("response").get<std::string>();
  r.prompt_tokens = j.at("prompt_tokens").get<std::size_t>();
  r.response_tokens = j.at("response_tokens").get<std::size_t>();
  r.fixed_tokens = j.value("fixed_tokens", std::size_t{0});
  r.timestamp = j.value("timestamp", "");
  return r;
}

Transcript::Transcript(const std::filesystem::path& file, bool truncate) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  out_.open(file, truncate ? std::ios::trunc : std::ios::app);
  if (!out_) throw IoError("cannot open transcript " + file.string());
}

void Transcript::append(TranscriptRecord record) {
  std::lock_guard lock(mutex_);
  if (out_.is_open()) {
    out_ << to_json(record).dump() << '\n';
    out_.flush();
  }
  records_.push_back(std::move(record));
}

std::vector<TranscriptRecord> Transcript::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t Transcript::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::size_t Transcript::total_tokens(TaskId task) const {
  std::lock_guard lock(mutex_);
  std::size_t total = 0;
  for (const auto& r : records_) {
    if (r.task == task) total += r.prompt_tokens + r.response_tokens;
  }
  return total;
}

std::vector<TranscriptRecord> Transcript::read(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read transcript " + file.string());
  std::vector<TranscriptRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(transcript_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError("transcript " + file.string() + ": " + e.what());
    }
  }
  return out;
}

ScriptedMock::ScriptedMock(std::vector<Fixture> fixtures, std::string tokenizer_id)
    : tokenizer_id_(std::move(tokenizer_id)) {
  for (auto& f : fixtures) add(std::move(f));
}

void ScriptedMock::add(Fixture fixture) {
  if (!fixture.respond && fixture.responses.empty()) {
    throw ParameterError("mock fixture '" + fixture.pattern + "' has no response");
  }
  Entry e;
  if (fixture.kind == MatchKind::regex) {
    try {
      e.compiled.emplace(fixture.pattern);
    } catch (const std::regex_error& err) {
      throw ConfigError("mock fixture regex '" + fixture.pattern + "': " + err.what());
    }
  }
  e.fixture = std::move(fixture);
  std::lock_guard lock(mutex_);
  entries_.push_back(std::move(e));
}

ScriptedMock& ScriptedMock::on(std::string substring, std::string response) {
  add({MatchKind::substring, std::move(substring), {std::move(response)}, {}});
  return *this;
}

ScriptedMock& ScriptedMock::on_sequence(std::string substring, std::vector<std::string> responses) {
  add({MatchKind::substring, std::move(substring), std::move(responses), {}});
  return *this;
}

ScriptedMock& ScriptedMock::on_regex(std::string pattern, std::string response) {
  add({MatchKind::regex, std::move(pattern), {std::move(response)}, {}});
  return *this;
}

ScriptedMock& ScriptedMock::on_call(std::string substring, std::function<std::string(const std::string&)> respond) {
  add({MatchKind::substring, std::move(substring), {}, std::move(respond)});
  return *this;
}

std::string ScriptedMock::complete(const ChatRequest& request) {
  request.validate();
  std::string response;
  {
    std::lock_guard lock(mutex_);
    ++calls_;
    Entry* hit = nullptr;
    for (auto& e : entries_) {
      const bool match = e.compiled ? std::regex_search(request.prompt, *e.compiled)
                                    : request.prompt.find(e.fixture.pattern) != std::string::npos;
      if (match) {
        hit = &e;
        break;
      }
    }
    if (hit == nullptr) {
      std::string closest;
      std::size_t best = 0;
      for (const auto& e : entries_) {
        const auto score = longest_common_substring(e.fixture.pattern, request.prompt);
        if (closest.empty() || score > best) {
          best = score;
          closest = e.fixture.pattern;
        }
      }
      throw FixtureError(entries_.empty() ? "mock: no fixtures configured"
                                          : "mock: no fixture matches the prompt; closest pattern '" + closest + "'");
    }
    if (hit->fixture.respond) {
      response = hit->fixture.respond(request.prompt);
    } else {
      const auto& rs = hit->fixture.responses;
      response = rs[std::min(hit->used, rs.size() - 1)];
    }
    ++hit->used;
  }
  const auto tokens = count_tokens(response, tokenizer_id_);
  if (tokens > static_cast<std::size_t>(request.max_output_tokens)) {
    throw FixtureError("mock: fixture response has " + std::to_string(tokens) + " tokens, limit " +
                       std::to_string(request.max_output_tokens));
  }
  return response;
}

std::size_t ScriptedMock::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::size_t ScriptedMock::consumed(std::size_t fixture) const {
  std::lock_guard lock(mutex_);
  return fixture < entries_.size() ? entries_[fixture].used : 0;
}

std::unique_ptr<ScriptedMock> ScriptedMock::from_json(const nlohmann::json& fixtures, std::string tokenizer_id) {
  if (!fixtures.is_array()) throw ConfigError("mock fixtures must be a JSON array");
  auto mock = std::make_unique<ScriptedMock>(std::vector<Fixture>{}, std::move(tokenizer_id));
  for (const auto& f : fixtures) {
    try {
      Fixture fx;
      const auto match = f.value("match", "substring");
      if (match == "regex") {
        fx.kind = MatchKind::regex;
      } else if (match != "substring") {
        throw ConfigError("mock fixture: unknown match kind '" + match + "'");
      }
      fx.pattern = f.value("pattern", "");
      if (f.contains("responses")) {
        fx.responses = f.at("responses").get<std::vector<std::string>>();
      } else {
        fx.responses.push_back(f.at("response").get<std::string>());
      }
      mock->add(std::move(fx));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("mock fixture: ") + e.what());
    }
  }
  return mock;
}

std::unique_ptr<ScriptedMock> ScriptedMock::from_file(const std::filesystem::path& file, std::string tokenizer_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("mock fixtures " + file.string() + ": " + e.what());
  }
  return from_json(j, std::move(tokenizer_id));
}

std::string HeuristicProvider::complete(const ChatRequest& request) {
  request.validate();
  const std::string& prompt = request.prompt;
  if (auto info = fenced_after(prompt, "Information:")) {
    std::size_t limit = 10;
    std::smatch m;
    static const std::regex at_most("at most (\\d+) keywords");
    if (std::regex_search(prompt, m, at_most)) limit = std::stoul(m[1].str());

    std::set<std::string> avoid;
    const auto open = prompt.rfind("⟨");
    const auto close = prompt.rfind("⟩");
    if (open != std::string::npos && close != std::string::npos && close > open) {
      std::stringstream ss(prompt.substr(open + 3, close - open - 3));
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(' ');
        if (b != std::string::npos) avoid.insert(lower(item.substr(b)));
      }
    }

    std::map<std::string, int> counts;
    std::string word;
    auto flush = [&] {
      if (word.size() >= 4) {
        auto key = lower(word);
        if (!stopwords().contains(key) && !avoid.contains(key)) ++counts[key];
      }
      word.clear();
    };
    for (char ch : *info) {
      if (std::isalpha(static_cast<unsigned char>(ch))) {
        word.push_back(ch);
      } else {
        flush();
      }
    }
    flush();
    std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::string out;
    for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) {
      if (!out.empty()) out += ", ";
      out += ranked[i].first;
    }
    return out;
  }
  if (auto list = fenced_after(prompt, "Keywords:")) return *list;
  if (auto texts = fenced_after(prompt, "Text information:")) {
    const auto b = texts->find_first_not_of(" \n");
    if (b == std::string::npos) return "The retrieved information does not answer the task.";
    auto e = texts->find_first_of(".!?\n", b);
    e = e == std::string::npos ? texts->size() : e + 1;
    return "Based on the retrieved texts: " + texts->substr(b, e - b);
  }
  return "";
}

std::string_view to_string(ChatProviderKind kind) {
  switch (kind) {
    case ChatProviderKind::remote:
      return "remote";
    case ChatProviderKind::mock:
      return "mock";
    case ChatProviderKind::heuristic:
      return "heuristic";
  }
  return "?";
}

ChatProviderKind parse_chat_provider_kind(std::string_view name) {
  if (name == "remote") return ChatProviderKind::remote;
  if (name == "mock") return ChatProviderKind::mock;
  if (name == "heuristic") return ChatProviderKind::heuristic;
  throw ConfigError("unknown chat provider '" + std::string(name) + "'");
}

void ChatProviderConfig::validate() const {
  if (kind == ChatProviderKind::remote && endpoint_url.empty()) {
    throw ConfigError("llm: remote provider needs endpoint_url");
  }
  if (kind == ChatProviderKind::mock && fixtures.empty()) throw ConfigError("llm: mock provider needs fixtures");
  if (max_retries < 0) throw ConfigError("llm: max_retries must be >= 0");
  if (in_flight_limit < 1) throw ConfigError("llm: in_flight_limit must be >= 1");
  if (timeout_seconds < 1) throw ConfigError("llm: timeout_seconds must be >= 1");
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw ConfigError("llm: temperature must be in [0, 2]");
}

RemoteChatProvider::RemoteChatProvider(ChatProviderConfig config) : config_(std::move(config)) {
  config_.validate();
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string RemoteChatProvider::complete(const ChatRequest& request) {
  request.validate();
  const auto& url = config_.endpoint_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint url lacks a scheme: " + url);
  const auto path_begin = url.find('/', scheme_end + 3);
  const std::string origin = path_begin == std::string::npos ? url : url.substr(0, path_begin);
  const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

  nlohmann::json body;
  body["model"] = request.model_name.empty() ? config_.model_name : request.model_name;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});
  body["max_tokens"] = request.max_output_tokens;
  body["temperature"] = config_.temperature;

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  httplib::Client client(origin);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw ProviderError("chat endpoint: transport error: " + httplib::to_string(res.error()), {}, true);
  if (res->status == 429 || res->status >= 500) {
    throw ProviderError("chat endpoint returned HTTP " + std::to_string(res->status), {}, true);
  }
  if (res->status != 200) {
    throw ProviderError("chat endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  try {
    const auto reply = nlohmann::json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed chat reply: ") + e.what());
  }
}

std::unique_ptr<ChatProvider> make_chat_provider(const ChatProviderConfig& config, std::string_view tokenizer_id) {
  config.validate();
  switch (config.kind) {
    case ChatProviderKind::remote:
      return std::make_unique<RemoteChatProvider>(config);
    case ChatProviderKind::mock:
      return ScriptedMock::from_file(config.fixtures, std::string(tokenizer_id));
    case ChatProviderKind::heuristic:
      return std::make_unique<HeuristicProvider>();
  }
  throw InternalError("unhandled chat provider kind");
}

LlmClient::LlmClient(std::shared_ptr<ChatProvider> provider, LlmClientOptions options,
                     std::shared_ptr<Transcript> transcript)
    : provider_(std::move(provider)),
      options_(std::move(options)),
      transcript_(transcript ? std::move(transcript) : std::make_shared<Transcript>()) {
  if (!provider_) throw ParameterError("LlmClient: null provider");
  if (options_.in_flight_limit < 1) throw ParameterError("LlmClient: in_flight_limit must be >= 1");
  if (options_.max_retries < 0) throw ParameterError("LlmClient: max_retries must be >= 0");
  find_tokenizer(options_.tokenizer_id);
}

std::string LlmClient::complete(ChatRequest request) {
  if (request.model_name.empty()) request.model_name = options_.model_name;
  request.validate();
  {
    std::unique_lock lock(slots_mutex_);
    slots_cv_.wait(lock, [&] { return busy_ < options_.in_flight_limit; });
    ++busy_;
  }
  struct Release {
    LlmClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->slots_mutex_);
        --self->busy_;
      }
      self->slots_cv_.notify_one();
    }
  } release{this};

  std::string trace;
  for (int attempt = 0;; ++attempt) {
    try {
      std::string response = provider_->complete(request);
      TranscriptRecord record;
      record.task = request.task;
      record.model_name = request.model_name;
      record.prompt_tokens = count_tokens(request.prompt, options_.tokenizer_id);
      record.response_tokens = count_tokens(response, options_.tokenizer_id);
      record.fixed_tokens = request.fixed_tokens;
      record.timestamp = utc_timestamp();
      record.prompt = std::move(request.prompt);
      record.response = response;
      transcript_->append(std::move(record));
      return response;
    } catch (ProviderError& e) {
      trace += "\n  attempt " + std::to_string(attempt + 1) + ": " + e.what();
      if (!e.transient() || attempt >= options_.max_retries) {
        ProviderError out(std::string(e.what()) + (attempt > 0 ? " (retry trace:" + trace + ")" : ""),
                          e.failed_indices(), e.transient());
        out.attach_prompt(request.prompt);
        throw out;
      }
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(options_.backoff_ms << std::min(attempt, 6)));
  }
}

}  // namespace autokg
