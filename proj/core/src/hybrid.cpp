#include "autokg/hybrid.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "autokg/extraction.hpp"
#include "autokg/parallel.hpp"
#include "autokg/rng.hpp"

namespace autokg {
namespace {

constexpr std::string_view kTask3Intro =
    "I want you to do a task, deal with a query, or answer a question with some information from a knowledge "
    "graph. You will be given a set of keywords directly related to a query, as well as adjacent keywords from the "
    "knowledge graph. Relevant texts will be provided, enclosed within triple backticks. These texts contain "
    "information pertinent to the query and keywords.";

std::string task3_prompt(const std::string& query, const std::string& keywords, const std::string& texts,
                         std::string_view language) {
  std::string p;
  p += kTask3Intro;
  p += "\nPlease note, you should not invent any information. Stick to the facts provided in the keywords and "
       "texts. These additional data are meant to assist you in accurately completing the task. Your response "
       "should be written in ";
  p += language;
  p += ".\nAvoid showing any personal information, like Name, Email, WhatsApp, Skype, and Website in your "
       "polished response.\n\n";
  p += "Keywords information (directly related to the query or find via the adjacent search of the knowledge "
       "graph): " +
       keywords + "\n\n";
  p += "Text information: ```\n" + texts + "\n```\n\n";
  p += "Your task: " + query + "\n";
  p += "Your response:";
  return p;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void SearchParams::validate() const {
  if (s_t0 < 0 || s_k1 < 0 || s_t1 < 0 || s_k2 < 0 || s_t2 < 0) {
    throw ParameterError("search params must be nonnegative");
  }
}

long long SearchParams::max_keywords() const { return static_cast<long long>(s_k1) * (1 + s_k2); }

long long SearchParams::max_blocks() const {
  return s_t0 + static_cast<long long>(s_k1) * s_t1 + static_cast<long long>(s_k1) * s_k2 * s_t2;
}

nlohmann::ordered_json SearchParams::to_json() const {
  nlohmann::ordered_json j;
  j["s_t0"] = s_t0;
  j["s_k1"] = s_k1;
  j["s_t1"] = s_t1;
  j["s_k2"] = s_k2;
  j["s_t2"] = s_t2;
  return j;
}

SearchParams SearchParams::from_json(const nlohmann::json& j) {
  SearchParams p;
  try {
    p.s_t0 = j.value("s_t0", p.s_t0);
    p.s_k1 = j.value("s_k1", p.s_k1);
    p.s_t1 = j.value("s_t1", p.s_t1);
    p.s_k2 = j.value("s_k2", p.s_k2);
    p.s_t2 = j.value("s_t2", p.s_t2);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("search params: ") + e.what());
  }
  return p;
}

std::string_view to_string(BlockStage stage) {
  switch (stage) {
    case BlockStage::direct:
      return "direct";
    case BlockStage::via_keyword:
      return "via-keyword";
    case BlockStage::via_adjacency:
      return "via-adjacency";
  }
  return "?";
}

std::string_view to_string(KeywordStage stage) { return stage == KeywordStage::similar ? "similar" : "adjacent"; }

std::vector<int> SearchResult::block_ids() const {
  std::vector<int> out;
  for (const auto& b : blocks) out.push_back(b.id);
  return out;
}

std::vector<int> SearchResult::block_ids(BlockStage stage) const {
  std::vector<int> out;
  for (const auto& b : blocks) {
    if (b.stage == stage) out.push_back(b.id);
  }
  return out;
}

std::vector<int> SearchResult::keyword_ids() const {
  std::vector<int> out;
  for (const auto& k : keywords) out.push_back(k.id);
  return out;
}

HybridSearcher::HybridSearcher(const KnowledgeGraph& kg, const Corpus& corpus, const EmbeddingMatrix& block_vectors,
                               SearcherOptions options)
    : kg_(&kg), corpus_(&corpus), options_(options) {
  if (options_.neighbor_cache_depth < 0) throw ParameterError("searcher: negative cache depth");
  if (block_vectors.rows() != static_cast<Eigen::Index>(corpus.size())) {
    throw ConsistencyError("searcher: " + std::to_string(block_vectors.rows()) + " block vectors for " +
                           std::to_string(corpus.size()) + " blocks");
  }
  const auto hash = corpus.content_hash();
  if (hash != kg.manifest.corpus_hash) {
    throw ConsistencyError("knowledge graph was built from a different corpus (manifest " +
                           kg.manifest.corpus_hash.substr(0, 12) + ", corpus " + hash.substr(0, 12) + ")");
  }
  if (kg.size() > 0 && kg.keyword_embeddings.cols() != block_vectors.cols()) {
    throw ConsistencyError("searcher: keyword and block embedding dimensions differ");
  }
  unit_blocks_ = normalized_rows(block_vectors);
  unit_keywords_ = kg.size() > 0 ? normalized_rows(kg.keyword_embeddings) : EmbeddingMatrix(0, block_vectors.cols());

  const int m = kg.size();
  keyword_cache_.resize(static_cast<std::size_t>(m));
  parallel_for(
      static_cast<std::size_t>(m),
      [&](std::size_t k) {
        const Eigen::VectorXd angles = angles_to(unit_blocks_, unit_keywords_.row(static_cast<Eigen::Index>(k)).transpose());
        keyword_cache_[k] = nearest_by_angle(angles, options_.neighbor_cache_depth);
      },
      options_.threads);

  adjacency_.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < kg.weights.outerSize(); ++i) {
    auto& row = adjacency_[i];
    for (WeightMatrix::InnerIterator it(kg.weights, i); it; ++it) {
      if (it.value() > 0 && it.col() != i) row.emplace_back(static_cast<int>(it.col()), it.value());
    }
    std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
  }
}

Eigen::VectorXd HybridSearcher::unit_query(const Eigen::Ref<const Eigen::VectorXd>& query_vector) const {
  if (query_vector.size() != unit_blocks_.cols()) throw ParameterError("search: query dimension mismatch");
  const double norm = query_vector.norm();
  if (!(norm > 0.0)) throw DegenerateVectorError("search: zero query vector");
  return query_vector / norm;
}

std::vector<int> HybridSearcher::keyword_blocks(int k, int count) const {
  if (k < 0 || k >= kg_->size()) throw ParameterError("search: unknown keyword " + std::to_string(k));
  const auto& cached = keyword_cache_[k];
  const auto n = static_cast<int>(unit_blocks_.rows());
  if (count <= static_cast<int>(cached.size()) || static_cast<int>(cached.size()) == n) {
    return {cached.begin(), cached.begin() + std::min<std::size_t>(cached.size(), static_cast<std::size_t>(std::max(count, 0)))};
  }
  const Eigen::VectorXd angles = angles_to(unit_blocks_, unit_keywords_.row(k).transpose());
  return nearest_by_angle(angles, count);
}

std::vector<BlockHit> HybridSearcher::vector_search(const Eigen::Ref<const Eigen::VectorXd>& query_vector,
                                                    int count) const {
  if (count < 0) throw ParameterError("vector_search: negative count");
  const Eigen::VectorXd angles = angles_to(unit_blocks_, unit_query(query_vector));
  std::vector<BlockHit> out;
  for (int id : nearest_by_angle(angles, count)) out.push_back({id, BlockStage::direct, angles[id], -1});
  return out;
}

SearchResult HybridSearcher::search(const Eigen::Ref<const Eigen::VectorXd>& query_vector, const SearchParams& params,
                                    std::string query) const {
  params.validate();
  SearchResult result;
  result.query = std::move(query);
  const Eigen::VectorXd q = unit_query(query_vector);
  const Eigen::VectorXd block_angles = angles_to(unit_blocks_, q);
  const int n = static_cast<int>(unit_blocks_.rows());

  std::vector<signed char> block_stage(static_cast<std::size_t>(n), -1);
  std::vector<int> block_via(static_cast<std::size_t>(n), -1);
  auto add_block = [&](int id, BlockStage stage, int via) {
    if (block_stage[id] >= 0) return;
    block_stage[id] = static_cast<signed char>(stage);
    block_via[id] = via;
    result.blocks.push_back({id, stage, block_angles[id], via});
  };

  for (int id : nearest_by_angle(block_angles, params.s_t0)) add_block(id, BlockStage::direct, -1);

  if (params.s_k1 > 0 && kg_->size() == 0) {
    warn(&result.warnings, "keyword graph is empty; returning vector-similarity results only");
  } else if (params.s_k1 > 0) {
    const Eigen::VectorXd keyword_angles = angles_to(unit_keywords_, q);
    const auto similar = nearest_by_angle(keyword_angles, params.s_k1);
    std::vector<char> keyword_seen(static_cast<std::size_t>(kg_->size()), 0);
    for (int k : similar) {
      keyword_seen[k] = 1;
      result.keywords.push_back({k, kg_->keywords[k], KeywordStage::similar, keyword_angles[k], -1, 0});
    }
    for (int k : similar) {
      for (int id : keyword_blocks(k, params.s_t1)) add_block(id, BlockStage::via_keyword, k);
    }
    for (int k : similar) {
      const auto& row = adjacency_[k];
      const auto take = std::min(row.size(), static_cast<std::size_t>(params.s_k2));
      for (std::size_t t = 0; t < take; ++t) {
        const auto [nb, w] = row[t];
        if (!keyword_seen[nb]) {
          keyword_seen[nb] = 1;
          result.keywords.push_back({nb, kg_->keywords[nb], KeywordStage::adjacent, keyword_angles[nb], k, w});
        }
        for (int id : keyword_blocks(nb, params.s_t2)) add_block(id, BlockStage::via_adjacency, nb);
      }
    }
  }

  std::stable_sort(result.blocks.begin(), result.blocks.end(), [](const BlockHit& a, const BlockHit& b) {
    if (a.stage != b.stage) return a.stage < b.stage;
    const double ka = angle_rank_key(a.angle);
    const double kb = angle_rank_key(b.angle);
    if (ka != kb) return ka < kb;
    return a.id < b.id;
  });
  return result;
}

SearchResult HybridSearcher::search(const std::string& query, Embedder& embedder, const SearchParams& params) const {
  if (query.empty()) throw ParameterError("search: empty query");
  return search(embedder.embed(query), params, query);
}

SearchResult hybrid_search(const std::string& query, const KnowledgeGraph& kg, const Corpus& corpus,
                           const EmbeddingMatrix& block_vectors, const SearchParams& params, Embedder& embedder) {
  SearcherOptions options;
  options.neighbor_cache_depth = std::max(params.s_t1, params.s_t2);
  const HybridSearcher searcher(kg, corpus, block_vectors, options);
  return searcher.search(query, embedder, params);
}

long long qa_token_budget(const SearchParams& p, long long T, long long l2) {
  return static_cast<long long>(p.s_k1) * l2 * (1 + p.s_k2) + T * p.max_blocks();
}

AssembledPrompt assemble_response_prompt(const std::string& query, const SearchResult& result, const Corpus& corpus,
                                         std::size_t token_limit, std::string_view language,
                                         std::string_view tokenizer_id) {
  std::string keywords;
  for (const auto& k : result.keywords) {
    if (!keywords.empty()) keywords += ", ";
    keywords += k.text;
  }
  if (keywords.empty()) keywords = "(none)";

  AssembledPrompt out;
  out.text = task3_prompt(query, keywords, "", language);
  out.token_count = count_tokens(out.text, tokenizer_id);
  if (out.token_count > token_limit) {
    throw ParameterError("prompt template alone needs " + std::to_string(out.token_count) + " tokens, limit " +
                         std::to_string(token_limit));
  }
  std::string texts;
  for (std::size_t t = 0; t < result.blocks.size(); ++t) {
    const int id = result.blocks[t].id;
    if (id < 0 || static_cast<std::size_t>(id) >= corpus.size()) {
      throw ParameterError("prompt: unknown block id " + std::to_string(id));
    }
    std::string next = texts;
    if (!next.empty()) next += "\n\n";
    next += sanitize_block_text(corpus.blocks[id].text);
    auto candidate = task3_prompt(query, keywords, next, language);
    const auto tokens = count_tokens(candidate, tokenizer_id);
    if (tokens > token_limit) {
      out.omitted_blocks = result.blocks.size() - t;
      break;
    }
    texts = std::move(next);
    out.text = std::move(candidate);
    out.token_count = tokens;
    out.included_blocks.push_back(id);
  }
  return out;
}

std::string_view to_string(SearchMode mode) { return mode == SearchMode::hybrid ? "hybrid" : "vector-only"; }

SearchMode parse_search_mode(std::string_view name) {
  if (name == "hybrid") return SearchMode::hybrid;
  if (name == "vector-only") return SearchMode::vector_only;
  throw ConfigError("unknown search mode '" + std::string(name) + "'");
}

QueryAnswer answer_query(const std::string& query, const HybridSearcher& searcher, Embedder& embedder,
                         const AnswerOptions& options, LlmClient* llm) {
  if (query.empty()) throw ParameterError("answer_query: empty query");
  QueryAnswer out;
  out.mode = options.mode;
  if (options.mode == SearchMode::hybrid) {
    out.result = searcher.search(query, embedder, options.params);
  } else {
    options.params.validate();
    out.result.query = query;
    out.result.blocks = searcher.vector_search(embedder.embed(query), options.params.s_t0);
  }
  const auto& tokenizer = searcher.corpus().tokenizer_id;
  out.prompt = assemble_response_prompt(query, out.result, searcher.corpus(), options.token_limit, options.language,
                                        tokenizer);
  if (options.dry_run) return out;
  if (llm == nullptr) throw ParameterError("answer_query: no LLM client configured");
  ChatRequest req;
  req.prompt = out.prompt.text;
  req.max_output_tokens = options.max_response_tokens;
  req.task = TaskId::query_response;
  try {
    out.answer = llm->complete(std::move(req));
  } catch (ProviderError& e) {
    if (e.prompt().empty()) e.attach_prompt(out.prompt.text);
    throw;
  }
  out.answered = true;
  return out;
}

nlohmann::ordered_json to_json(const QueryAnswer& a) {
  nlohmann::ordered_json j;
  j["query"] = a.result.query;
  j["mode"] = to_string(a.mode);
  auto keywords = nlohmann::ordered_json::array();
  for (const auto& k : a.result.keywords) {
    nlohmann::ordered_json kj;
    kj["text"] = k.text;
    kj["stage"] = to_string(k.stage);
    keywords.push_back(std::move(kj));
  }
  j["keywords"] = std::move(keywords);
  auto blocks = nlohmann::ordered_json::array();
  for (const auto& b : a.result.blocks) {
    nlohmann::ordered_json bj;
    bj["id"] = b.id;
    bj["stage"] = to_string(b.stage);
    bj["angle"] = b.angle;
    blocks.push_back(std::move(bj));
  }
  j["blocks"] = std::move(blocks);
  j["prompt_tokens"] = a.prompt.token_count;
  j["answer"] = a.answered ? nlohmann::ordered_json(a.answer) : nlohmann::ordered_json(nullptr);
  return j;
}

nlohmann::ordered_json LatencyReport::to_json() const {
  nlohmann::ordered_json j;
  j["repetitions"] = repetitions;
  j["vector_count"] = vector_count;
  j["hybrid_mean_seconds"] = hybrid_mean;
  j["vector_mean_seconds"] = vector_mean;
  j["ratio"] = ratio();
  return j;
}

std::string random_query(std::uint64_t seed, int length) {
  static constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ";
  Rng rng(seed);
  std::string q;
  for (int i = 0; i < length; ++i) q.push_back(kAlphabet[rng.below(kAlphabet.size())]);
  if (q.find_first_not_of(' ') == std::string::npos) q.front() = 'q';
  return q;
}

LatencyReport compare_latency(const HybridSearcher& searcher, EmbeddingProvider& provider, const SearchParams& params,
                              int repetitions, int vector_count, std::uint64_t seed, int query_length) {
  if (repetitions < 1) throw ParameterError("latency: repetitions must be >= 1");
  LatencyReport report;
  report.repetitions = repetitions;
  report.vector_count = vector_count;
  std::size_t sink = 0;
  auto run_hybrid = [&](const std::string& q) {
    const auto start = std::chrono::steady_clock::now();
    const std::string texts[] = {q};
    const auto v = provider.embed(texts);
    sink += searcher.search(v.front(), params).blocks.size();
    report.hybrid_samples.push_back(seconds_since(start));
  };
  auto run_vector = [&](const std::string& q) {
    const auto start = std::chrono::steady_clock::now();
    const std::string texts[] = {q};
    const auto v = provider.embed(texts);
    sink += searcher.vector_search(v.front(), vector_count).size();
    report.vector_samples.push_back(seconds_since(start));
  };
  for (int r = 0; r < repetitions; ++r) {
    const auto q = random_query(mix_seed(seed, static_cast<std::uint64_t>(r)), query_length);
    // Alternate order so neither side always runs on a warm cache.
    if (r % 2 == 0) {
      run_hybrid(q);
      run_vector(q);
    } else {
      run_vector(q);
      run_hybrid(q);
    }
  }
  auto mean = [](const std::vector<double>& xs) { return std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size(); };
  report.hybrid_mean = mean(report.hybrid_samples);
  report.vector_mean = mean(report.vector_samples);
  volatile std::size_t keep = sink;
  (void)keep;
  return report;
}

}  // namespace autokg
