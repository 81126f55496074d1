#pragma once

#include <autokg/corpus.hpp>
#include <autokg/embedding.hpp>
#include <autokg/error.hpp>
#include <autokg/extraction.hpp>
#include <autokg/kgraph.hpp>
#include <autokg/llm.hpp>
#include <autokg/simgraph.hpp>
#include <memory>
#include <string>
#include <vector>

#include "autokg_tools/config.hpp"

namespace autokg::cli {

// A build phase failed. Carries the phase name and whether the root cause
// was a configuration problem.
class BuildError : public Error {
 public:
  BuildError(std::string phase, const std::string& what, bool config_error)
      : Error("build failed in phase '" + phase + "': " + what), phase_(std::move(phase)), config_error_(config_error) {}

  const std::string& phase() const noexcept { return phase_; }
  bool config_error() const noexcept { return config_error_; }

 private:
  std::string phase_;
  bool config_error_;
};

struct PhaseTiming {
  std::string phase;
  double seconds = 0.0;
};

struct BuildReport {
  std::vector<PhaseTiming> phases;
  std::size_t documents = 0;
  std::size_t blocks = 0;
  int k_requested = 0;
  int k_final = 0;
  int escalations = 0;
  Eigen::Index graph_nnz = 0;
  std::size_t raw_keywords = 0;
  long long raw_keyword_bound = 0;  // 2 n l1
  std::size_t refined_keywords = 0;
  TokenBudget budget;
  long long qa_budget = 0;
  KgDiagnostics kg;
  Warnings warnings;

  nlohmann::ordered_json to_json() const;
};

struct BuildOverrides {
  std::shared_ptr<ChatProvider> chat;
  std::unique_ptr<EmbeddingProvider> embedding;
};

struct BuildResult {
  Corpus corpus;
  KnowledgeGraph kg;
  BuildReport report;
  ArtifactPaths paths;
};

std::vector<Document> collect_documents(const std::vector<std::filesystem::path>& paths);

// corpus -> embeddings -> similarity graph -> extraction -> refinement ->
// associations -> KG, writing every artifact under config.output_dir. On
// failure the artifacts written by this run are removed.
BuildResult run_build(const EngineConfig& config, BuildOverrides overrides = {});

std::unique_ptr<Embedder> make_embedder(const EngineConfig& config, const ArtifactPaths& paths,
                                        std::unique_ptr<EmbeddingProvider> override = nullptr);

// A finished build loaded back for querying. The corpus is read from the
// KG's directory and re-embedded through the cache.
struct LoadedBuild {
  Corpus corpus;
  KnowledgeGraph kg;
  EmbeddingMatrix vectors;
  std::unique_ptr<Embedder> embedder;
};

LoadedBuild load_build(const EngineConfig& config, const std::filesystem::path& kg_path,
                       std::unique_ptr<EmbeddingProvider> override = nullptr);

// Topic-structured random text for scale tests and benchmarks.
Corpus synthetic_corpus(int n_blocks, std::uint64_t seed, int words_per_block = 40);
std::vector<std::string> synthetic_keywords(int count, std::uint64_t seed);

// Synthetic corpus embedded offline, with a KG over synthetic keywords.
struct SyntheticBuild {
  Corpus corpus;
  EmbeddingMatrix vectors;
  SimilarityGraph graph;
  KnowledgeGraph kg;
  double kg_seconds = 0.0;  // graph + associations, embedding excluded
};

SyntheticBuild synthetic_build(int n_blocks, int n_keywords, std::uint64_t seed,
                               const EmbeddingProviderConfig& embedding = {}, unsigned threads = 0);

}  // namespace autokg::cli
