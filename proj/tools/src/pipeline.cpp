#include "autokg_tools/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <autokg/hybrid.hpp>
#include <autokg/rng.hpp>
#include <chrono>

namespace autokg::cli {
namespace {

using Clock = std::chrono::steady_clock;

template <class F>
auto run_phase(const std::string& name, BuildReport& report, F&& body) {
  spdlog::info("phase {}: start", name);
  const auto start = Clock::now();
  try {
    auto value = body();
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    report.phases.push_back({name, seconds});
    spdlog::info("phase {}: done in {:.3f} s", name, seconds);
    return value;
  } catch (const BuildError&) {
    throw;
  } catch (const ConfigError& e) {
    throw BuildError(name, e.what(), true);
  } catch (const std::exception& e) {
    throw BuildError(name, e.what(), false);
  }
}

const std::vector<std::vector<std::string>>& vocabulary() {
  static const std::vector<std::vector<std::string>> topics = [] {
    static constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ren", "tas", "vo", "zu", "pel", "dri", "on",
                                                 "sha", "gru", "fe", "bix", "nol", "que", "ta", "wim", "yor", "ex"};
    Rng rng(0x5eed'70b1c5ULL);
    std::vector<std::vector<std::string>> out(60);
    for (auto& words : out) {
      for (int w = 0; w < 25; ++w) {
        std::string word;
        const auto parts = 2 + rng.below(2);
        for (std::size_t s = 0; s < parts; ++s) word += kSyllables[rng.below(std::size(kSyllables))];
        words.push_back(word);
      }
    }
    return out;
  }();
  return topics;
}

}  // namespace

nlohmann::ordered_json BuildReport::to_json() const {
  nlohmann::ordered_json j;
  auto ph = nlohmann::ordered_json::array();
  double total = 0.0;
  for (const auto& p : phases) {
    ph.push_back({{"phase", p.phase}, {"seconds", p.seconds}});
    total += p.seconds;
  }
  j["phases"] = std::move(ph);
  j["total_seconds"] = total;
  j["documents"] = documents;
  j["blocks"] = blocks;
  j["similarity_graph"] = {
      {"K_requested", k_requested}, {"K_final", k_final}, {"escalations", escalations}, {"nnz", graph_nnz}};
  j["keywords"] = {{"raw", raw_keywords}, {"raw_bound_2nl1", raw_keyword_bound}, {"refined", refined_keywords}};
  j["kg_token_budget"] = budget.to_json();
  j["qa_token_budget"] = qa_budget;
  j["knowledge_graph"] = kg.to_json();
  j["warnings"] = warnings;
  return j;
}

std::vector<Document> collect_documents(const std::vector<std::filesystem::path>& paths) {
  std::vector<Document> docs;
  for (const auto& p : paths) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::recursive_directory_iterator(p)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        auto more = read_documents(f);
        docs.insert(docs.end(), more.begin(), more.end());
      }
    } else {
      auto more = read_documents(p);
      docs.insert(docs.end(), more.begin(), more.end());
    }
  }
  return docs;
}

std::unique_ptr<Embedder> make_embedder(const EngineConfig& config, const ArtifactPaths& paths,
                                        std::unique_ptr<EmbeddingProvider> override) {
  std::optional<std::filesystem::path> cache;
  if (config.embedding_cache) cache = paths.embedding_cache();
  if (override) return std::make_unique<Embedder>(std::move(override), cache);
  return std::make_unique<Embedder>(config.embedding, cache);
}

BuildResult run_build(const EngineConfig& config, BuildOverrides overrides) {
  try {
    config.validate_for_build();
  } catch (const ConfigError& e) {
    throw BuildError("config", e.what(), true);
  }
  BuildResult out;
  out.paths.dir = config.output_dir;
  std::filesystem::create_directories(out.paths.dir);
  auto& report = out.report;
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::filesystem::path& path, const std::string& bytes) {
    write_file_atomic(path, bytes);
    written.push_back(path);
  };

  try {
    const auto& paths = out.paths;
    out.corpus = run_phase("corpus", report, [&] {
      const auto docs = collect_documents(config.corpus);
      report.documents = docs.size();
      auto corpus = chunk(docs, config.T, config.tokenizer, &report.warnings);
      if (corpus.size() == 0) throw ConfigError("corpus is empty after chunking");
      write(paths.corpus(), serialize_corpus(corpus));
      return corpus;
    });
    report.blocks = out.corpus.size();
    const auto texts = out.corpus.texts();

    auto embedder = make_embedder(config, paths, std::move(overrides.embedding));
    const EmbeddingMatrix vectors = run_phase("embedding", report, [&] { return embedder->embed_matrix(texts); });

    const SimilarityGraph graph = run_phase("similarity-graph", report, [&] {
      GraphBuildOptions options;
      options.k = config.K;
      options.threads = config.threads;
      auto g = build_similarity_graph(vectors, options);
      write(paths.graph(), serialize_graph(g));
      return g;
    });
    report.k_requested = graph.k_requested;
    report.k_final = graph.k;
    report.escalations = graph.escalations;
    report.graph_nnz = graph.nnz();

    std::shared_ptr<ChatProvider> chat = overrides.chat;
    if (!chat) chat = make_chat_provider(config.llm, config.tokenizer);
    auto transcript = std::make_shared<Transcript>(paths.transcript(), true);
    LlmClientOptions llm_options;
    llm_options.max_retries = config.llm.max_retries;
    llm_options.in_flight_limit = config.llm.in_flight_limit;
    llm_options.tokenizer_id = config.tokenizer;
    llm_options.model_name = config.llm.model_name;
    LlmClient llm(chat, llm_options, transcript);

    const KeywordSet raw = run_phase("extraction", report, [&] {
      auto run = run_extraction(out.corpus, vectors, graph, config.extraction, llm, &report.warnings);
      write(paths.raw_keywords(), run.raw.to_json(&config.extraction).dump(2) + "\n");
      return run.raw;
    });
    report.raw_keywords = raw.size();
    report.raw_keyword_bound = 2LL * config.extraction.n * config.extraction.l1;
    if (static_cast<long long>(raw.size()) > report.raw_keyword_bound) {
      throw BuildError("extraction", "raw keyword count exceeds 2 n l1", false);
    }
    if (raw.empty()) throw BuildError("extraction", "the LLM returned no usable keywords", false);

    const KeywordSet refined = run_phase("refinement", report, [&] {
      auto set = refine_keywords(raw, config.extraction, llm, &report.warnings);
      write(paths.keywords(), set.to_json(&config.extraction).dump(2) + "\n");
      return set;
    });
    report.refined_keywords = refined.size();

    out.kg = run_phase("association", report, [&] {
      const EmbeddingMatrix keyword_vectors = embedder->embed_matrix(refined.keywords());
      KgManifest manifest;
      manifest.corpus_hash = out.corpus.content_hash();
      manifest.n_blocks = static_cast<int>(out.corpus.size());
      manifest.params = config.manifest_params();
      manifest.params["K_final"] = graph.k;
      manifest.engine_version = std::string(engine_version());
      auto kg = build_kg(refined.keywords(), keyword_vectors, vectors, graph, config.association, std::move(manifest));
      write(paths.kg(), serialize_kg(kg));
      return kg;
    });

    const auto records = transcript->records();
    report.budget = audit_token_budget(config.extraction, config.T, records);
    report.qa_budget = qa_token_budget(config.search, config.T, config.extraction.l2);
    report.kg = diagnose(out.kg);
    if (!report.budget.within()) {
      report.warnings.push_back("token usage " + std::to_string(report.budget.actual_used) +
                                " exceeds the computed maximum " + std::to_string(report.budget.computed_max));
    }
    for (const auto& w : report.warnings) spdlog::warn("{}", w);
    write(paths.report(), report.to_json().dump(2) + "\n");
  } catch (...) {
    for (const auto& p : written) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
    throw;
  }
  return out;
}

LoadedBuild load_build(const EngineConfig& config, const std::filesystem::path& kg_path,
                       std::unique_ptr<EmbeddingProvider> override) {
  LoadedBuild b;
  b.kg = load_kg(kg_path);
  ArtifactPaths paths{kg_path.parent_path()};
  if (paths.dir.empty()) paths.dir = ".";
  b.corpus = load_corpus(paths.corpus(), config.tokenizer, config.T);
  b.embedder = make_embedder(config, paths, std::move(override));
  if (b.kg.size() > 0 && b.kg.keyword_embeddings.cols() != b.embedder->dimension()) {
    throw ConsistencyError("configured embedding dimension " + std::to_string(b.embedder->dimension()) +
                           " differs from the knowledge graph's " + std::to_string(b.kg.keyword_embeddings.cols()));
  }
  b.vectors = b.embedder->embed_matrix(b.corpus.texts());
  return b;
}

Corpus synthetic_corpus(int n_blocks, std::uint64_t seed, int words_per_block) {
  if (n_blocks < 1 || words_per_block < 1) throw ParameterError("synthetic corpus: sizes must be positive");
  const auto& topics = vocabulary();
  Rng rng(mix_seed(seed, 0xc0));
  Corpus corpus;
  corpus.tokenizer_id = std::string(kDefaultTokenizer);
  corpus.max_tokens = words_per_block;
  for (int b = 0; b < n_blocks; ++b) {
    const auto& main = topics[rng.below(topics.size())];
    const auto& side = topics[rng.below(topics.size())];
    std::string text;
    for (int w = 0; w < words_per_block; ++w) {
      const auto& pool = rng.uniform() < 0.8 ? main : side;
      if (!text.empty()) text += ' ';
      text += pool[rng.below(pool.size())];
    }
    corpus.blocks.push_back({b, std::move(text), static_cast<std::size_t>(words_per_block),
                             "synthetic:" + std::to_string(b)});
  }
  return corpus;
}

std::vector<std::string> synthetic_keywords(int count, std::uint64_t seed) {
  const auto& topics = vocabulary();
  std::size_t total = 0;
  for (const auto& t : topics) total += t.size();
  if (count < 0 || static_cast<std::size_t>(count) > total) throw ParameterError("synthetic keywords: bad count");
  Rng rng(mix_seed(seed, 0xc1));
  std::vector<std::string> out;
  for (auto idx : rng.sample_indices(total, static_cast<std::size_t>(count))) {
    out.push_back(topics[idx / topics.front().size()][idx % topics.front().size()]);
  }
  return out;
}

SyntheticBuild synthetic_build(int n_blocks, int n_keywords, std::uint64_t seed,
                               const EmbeddingProviderConfig& embedding, unsigned threads) {
  SyntheticBuild b;
  b.corpus = synthetic_corpus(n_blocks, seed);
  OfflineHashProvider provider(embedding);
  const auto texts = b.corpus.texts();
  b.vectors = stack_rows(provider.embed(texts));
  const auto keywords = synthetic_keywords(n_keywords, seed);
  const EmbeddingMatrix keyword_vectors = stack_rows(provider.embed(keywords));

  const auto start = Clock::now();
  GraphBuildOptions options;
  options.threads = threads;
  b.graph = build_similarity_graph(b.vectors, options);
  AssociationParams params;
  params.threads = threads;
  KgManifest manifest;
  manifest.corpus_hash = b.corpus.content_hash();
  manifest.n_blocks = n_blocks;
  manifest.params = {{"synthetic", true}, {"seed", seed}};
  manifest.engine_version = std::string(engine_version());
  b.kg = build_kg(keywords, keyword_vectors, b.vectors, b.graph, params, std::move(manifest));
  b.kg_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return b;
}

}  // namespace autokg::cli
