#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autokg/clustering.hpp"
#include "autokg/corpus.hpp"
#include "autokg/error.hpp"
#include "autokg/llm.hpp"
#include "autokg/simgraph.hpp"

namespace autokg {

// Reference maximum for the default parameters, shown beside the computed
// total in build reports.
inline constexpr long long kReportedKgTokenMaximum = 181280;

struct ExtractionParams {
  int n = 15;
  int c = 15;
  int l1 = 10;
  int l2 = 3;
  int m = 300;
  std::string main_topic = "the knowledge base";
  std::string language = "English";
  std::uint64_t seed = 0;
  int kmeans_iterations = kDefaultKMeansIterations;
  KMeansMetric kmeans_metric = KMeansMetric::euclidean;
  int dense_eigen_limit = kDenseEigenLimit;
  // Strict call order: the avoid-list sees every earlier call.
  bool sequential = false;
  // Calls per wave in concurrent mode; each wave shares one avoid-list
  // snapshot.
  int in_flight = 4;
  // Task-2 prompts above this many tokens are split into batches.
  int context_tokens = 16000;

  void validate() const;
};

nlohmann::ordered_json to_json(const ExtractionParams& params);
ExtractionParams extraction_params_from_json(const nlohmann::json& j);

struct ClusterRef {
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
  int cluster = 0;

  auto operator<=>(const ClusterRef&) const = default;
};

class KeywordSet {
 public:
  const std::vector<std::string>& keywords() const { return keywords_; }
  const std::vector<std::vector<ClusterRef>>& provenance() const { return provenance_; }
  std::size_t size() const { return keywords_.size(); }
  bool empty() const { return keywords_.empty(); }

  // Index of a case-insensitive, trimmed match, or -1.
  int find(std::string_view keyword) const;
  // Adds the keyword or merges provenance into an existing match. Returns
  // true if it was new.
  bool add(std::string_view keyword, std::span<const ClusterRef> refs);
  const std::vector<ClusterRef>& provenance_of(std::size_t i) const { return provenance_[i]; }

  nlohmann::ordered_json to_json(const ExtractionParams* params = nullptr) const;
  static KeywordSet from_json(const nlohmann::json& j);

  bool operator==(const KeywordSet&) const = default;

 private:
  std::vector<std::string> keywords_;
  std::vector<std::string> keys_;  // normalized for lookup
  std::vector<std::vector<ClusterRef>> provenance_;
};

// Lowercased, trimmed form used for case-insensitive dedupe.
std::string normalize_keyword(std::string_view keyword);

// Backticks would close the template's fence early.
std::string sanitize_block_text(std::string_view text);

struct Prompt {
  std::string text;
  std::size_t fixed_tokens = 0;  // template text, excluding slot contents
};

Prompt build_task1_prompt(std::span<const std::string> blocks, std::span<const std::string> previous,
                          const ExtractionParams& params, std::string_view tokenizer_id = kDefaultTokenizer);
Prompt build_task2_prompt(std::span<const std::string> keywords, const ExtractionParams& params,
                          std::string_view tokenizer_id = kDefaultTokenizer);

// Comma-separated list (newlines also separate), trimmed of whitespace and
// stray punctuation, deduped case-insensitively, keywords over l2 tokens
// dropped with a warning.
std::vector<std::string> parse_keywords(std::string_view response, int l2,
                                        std::string_view tokenizer_id = kDefaultTokenizer,
                                        Warnings* warnings = nullptr);

struct ExtractionRun {
  KeywordSet raw;
  ClusterResult kmeans;
  ClusterResult spectral;
  int calls = 0;
};

// Extraction up to the raw keyword set: k-means clusters 0..n-1, then
// spectral clusters 0..n-1, one Task-1 call each.
ExtractionRun run_extraction(const Corpus& corpus, const EmbeddingMatrix& vectors, const SimilarityGraph& graph,
                             const ExtractionParams& params, LlmClient& llm, Warnings* warnings = nullptr);

KeywordSet extract_keywords(const Corpus& corpus, const EmbeddingMatrix& vectors, const SimilarityGraph& graph,
                            const ExtractionParams& params, LlmClient& llm, Warnings* warnings = nullptr);

// Task 2 over the raw set. An empty refined answer keeps the raw set.
KeywordSet refine_keywords(const KeywordSet& raw, const ExtractionParams& params, LlmClient& llm,
                           Warnings* warnings = nullptr);

// 2n(2cT + (m + 2 l1)(l2 + 1)) + L_F
long long kg_token_budget(long long n, long long c, long long T, long long m, long long l1, long long l2,
                          long long L_F);

struct TokenBudget {
  long long n = 0, c = 0, T = 0, m = 0, l1 = 0, l2 = 0;
  long long L_F = 0;           // fixed template tokens over the audited calls
  long long computed_max = 0;  // kg_token_budget of the above
  long long actual_used = 0;   // prompt + response tokens, Tasks 1 and 2
  long long reported_max = kReportedKgTokenMaximum;
  int calls = 0;

  bool within() const { return actual_used <= computed_max; }
  nlohmann::ordered_json to_json() const;
};

TokenBudget audit_token_budget(const ExtractionParams& params, int T, std::span<const TranscriptRecord> records);

}  // namespace autokg
