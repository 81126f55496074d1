#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "autokg/corpus.hpp"
#include "autokg/embedding.hpp"
#include "autokg/error.hpp"
#include "autokg/kgraph.hpp"
#include "autokg/llm.hpp"

namespace autokg {

struct SearchParams {
  int s_t0 = 15;
  int s_k1 = 5;
  int s_t1 = 3;
  int s_k2 = 3;
  int s_t2 = 2;

  void validate() const;
  long long max_keywords() const;  // s_k1 (1 + s_k2)
  long long max_blocks() const;    // s_t0 + s_k1 s_t1 + s_k1 s_k2 s_t2
  nlohmann::ordered_json to_json() const;
  static SearchParams from_json(const nlohmann::json& j);
};

enum class BlockStage { direct = 0, via_keyword = 1, via_adjacency = 2 };
enum class KeywordStage { similar = 0, adjacent = 1 };
std::string_view to_string(BlockStage stage);
std::string_view to_string(KeywordStage stage);

struct BlockHit {
  int id = 0;
  BlockStage stage = BlockStage::direct;
  double angle = 0.0;    // to the query
  int via_keyword = -1;  // keyword that brought the block in, -1 for direct
};

struct KeywordHit {
  int id = 0;
  std::string text;
  KeywordStage stage = KeywordStage::similar;
  double angle = 0.0;    // to the query
  int via_keyword = -1;  // the similar keyword an adjacent one hangs off
  int weight = 0;        // W^k to via_keyword
};

struct SearchResult {
  std::string query;
  std::vector<KeywordHit> keywords;  // similar first (by angle), then adjacent
  std::vector<BlockHit> blocks;      // by stage, then angle, then id
  Warnings warnings;

  std::vector<int> block_ids() const;
  std::vector<int> block_ids(BlockStage stage) const;
  std::vector<int> keyword_ids() const;
};

struct SearcherOptions {
  // Nearest blocks cached per keyword; deeper requests are computed.
  int neighbor_cache_depth = 8;
  unsigned threads = 0;
};

// Read-only index over one build: unit block and keyword vectors, a
// per-keyword nearest-block cache, and W^k rows sorted by weight. The
// knowledge graph and corpus must outlive the searcher.
class HybridSearcher {
 public:
  // Throws ConsistencyError if the corpus hash differs from the one
  // recorded in the graph manifest.
  HybridSearcher(const KnowledgeGraph& kg, const Corpus& corpus, const EmbeddingMatrix& block_vectors,
                 SearcherOptions options = {});

  SearchResult search(const Eigen::Ref<const Eigen::VectorXd>& query_vector, const SearchParams& params,
                      std::string query = {}) const;
  SearchResult search(const std::string& query, Embedder& embedder, const SearchParams& params) const;

  // Plain top-`count` by angle.
  std::vector<BlockHit> vector_search(const Eigen::Ref<const Eigen::VectorXd>& query_vector, int count) const;

  // `count` blocks nearest keyword k by angle, ties by id.
  std::vector<int> keyword_blocks(int k, int count) const;

  const KnowledgeGraph& kg() const { return *kg_; }
  const Corpus& corpus() const { return *corpus_; }
  int dimension() const { return static_cast<int>(unit_blocks_.cols()); }

 private:
  Eigen::VectorXd unit_query(const Eigen::Ref<const Eigen::VectorXd>& query_vector) const;

  const KnowledgeGraph* kg_;
  const Corpus* corpus_;
  SearcherOptions options_;
  EmbeddingMatrix unit_blocks_;
  EmbeddingMatrix unit_keywords_;
  std::vector<std::vector<int>> keyword_cache_;
  std::vector<std::vector<std::pair<int, int>>> adjacency_;  // (neighbor, weight)
};

SearchResult hybrid_search(const std::string& query, const KnowledgeGraph& kg, const Corpus& corpus,
                           const EmbeddingMatrix& block_vectors, const SearchParams& params, Embedder& embedder);

// s_k1 l2 (1 + s_k2) + T (s_t0 + s_k1 s_t1 + s_k1 s_k2 s_t2)
long long qa_token_budget(const SearchParams& params, long long T, long long l2);

struct AssembledPrompt {
  std::string text;
  std::size_t token_count = 0;
  std::vector<int> included_blocks;
  std::size_t omitted_blocks = 0;
};

// Task-3 template. Blocks go in by result order until the next one would
// push the prompt past token_limit.
AssembledPrompt assemble_response_prompt(const std::string& query, const SearchResult& result, const Corpus& corpus,
                                         std::size_t token_limit, std::string_view language = "English",
                                         std::string_view tokenizer_id = kDefaultTokenizer);

enum class SearchMode { hybrid, vector_only };
std::string_view to_string(SearchMode mode);
SearchMode parse_search_mode(std::string_view name);

struct AnswerOptions {
  SearchParams params;
  SearchMode mode = SearchMode::hybrid;
  std::size_t token_limit = 10000;
  int max_response_tokens = 1024;
  std::string language = "English";
  bool dry_run = false;  // assemble the prompt, skip the LLM
};

struct QueryAnswer {
  std::string answer;
  SearchResult result;
  AssembledPrompt prompt;
  SearchMode mode = SearchMode::hybrid;
  bool answered = false;
};

// Provider failures are rethrown with the assembled prompt attached.
QueryAnswer answer_query(const std::string& query, const HybridSearcher& searcher, Embedder& embedder,
                         const AnswerOptions& options, LlmClient* llm);

nlohmann::ordered_json to_json(const QueryAnswer& answer);

struct LatencyReport {
  int repetitions = 0;
  int vector_count = 0;
  double hybrid_mean = 0.0;  // seconds, embedding included
  double vector_mean = 0.0;
  std::vector<double> hybrid_samples;
  std::vector<double> vector_samples;

  double ratio() const { return vector_mean > 0.0 ? hybrid_mean / vector_mean : 0.0; }
  nlohmann::ordered_json to_json() const;
};

std::string random_query(std::uint64_t seed, int length = 50);

// Times hybrid search and a top-`vector_count` vector search on the same
// random queries. Embedding goes through the provider directly so neither
// side sees cached query vectors.
LatencyReport compare_latency(const HybridSearcher& searcher, EmbeddingProvider& provider, const SearchParams& params,
                              int repetitions, int vector_count = 30, std::uint64_t seed = 0,
                              int query_length = 50);

}  // namespace autokg
