#pragma once

#include <autokg/embedding.hpp>
#include <autokg/extraction.hpp>
#include <autokg/hybrid.hpp>
#include <autokg/kgraph.hpp>
#include <autokg/llm.hpp>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace autokg::cli {

// Everything a command needs, read from one JSON file. Secrets never live
// here; the API key comes from the environment variable each provider names.
struct EngineConfig {
  std::vector<std::filesystem::path> corpus;  // files, .jsonl record files, or directories
  int T = kDefaultBlockTokens;
  std::string tokenizer = std::string(kDefaultTokenizer);
  EmbeddingProviderConfig embedding;
  bool embedding_cache = true;
  ChatProviderConfig llm;
  int K = kDefaultNeighbors;
  ExtractionParams extraction;
  AssociationParams association;
  SearchParams search;
  std::size_t token_limit = 10000;
  int max_response_tokens = 1024;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "autokg_out";
  unsigned threads = 0;

  void validate() const;
  void validate_for_build() const;

  // Algorithm parameters only (no paths), as recorded in build manifests.
  nlohmann::ordered_json manifest_params() const;
  nlohmann::ordered_json to_json() const;

  // Relative paths resolve against `base_dir`. Unknown keys are errors.
  static EngineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static EngineConfig load(const std::filesystem::path& file);
};

// Standard artifact names inside the output directory.
struct ArtifactPaths {
  std::filesystem::path dir;

  std::filesystem::path corpus() const { return dir / "corpus.jsonl"; }
  std::filesystem::path graph() const { return dir / "similarity_graph.json"; }
  std::filesystem::path raw_keywords() const { return dir / "keywords_raw.json"; }
  std::filesystem::path keywords() const { return dir / "keywords.json"; }
  std::filesystem::path kg() const { return dir / "knowledge_graph.akg"; }
  std::filesystem::path report() const { return dir / "build_report.json"; }
  std::filesystem::path transcript() const { return dir / "autokg_transcript.jsonl"; }
  std::filesystem::path embedding_cache() const { return dir / "embedding_cache.jsonl"; }
};

}  // namespace autokg::cli
