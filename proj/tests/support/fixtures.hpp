#pragma once

#include <autokg/corpus.hpp>
#include <autokg/embedding.hpp>
#include <autokg/extraction.hpp>
#include <autokg/hybrid.hpp>
#include <autokg/kgraph.hpp>
#include <autokg/laplace.hpp>
#include <autokg/llm.hpp>
#include <autokg/simgraph.hpp>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace autokg::testing {

EmbeddingMatrix random_vectors(int rows, int dim, std::uint64_t seed);

// Gaussian blobs around `centers` random unit directions.
EmbeddingMatrix clustered_vectors(int rows, int dim, int centers, double spread, std::uint64_t seed);

SimilarityGraph graph_from_edges(int n, const std::vector<std::tuple<int, int, double>>& edges);
SimilarityGraph path_graph(int n, double weight = 1.0);

// Dense reference: L_uu u = W_ul y by Eigen LDLT on the full matrix.
Eigen::VectorXd dense_harmonic(const SimilarityGraph& graph, const LabelAssignment& labels);

// Corpus of `n` short numbered blocks.
Corpus numbered_corpus(int n, std::uint64_t seed = 0);

// Random keyword graph over `corpus`: each keyword gets a random block set.
KnowledgeGraph random_kg(const Corpus& corpus, int n_keywords, int dim, std::uint64_t seed);

// Embeds text as a bag of concepts from a small lexicon plus a faint hashed
// residue, so hand-written fixtures get predictable geometry.
class ConceptProvider final : public EmbeddingProvider {
 public:
  ConceptProvider(std::map<std::string, int> lexicon, int concepts, int residue_dim = 32, double residue = 0.15);

  std::vector<Embedding> embed(std::span<const std::string> texts) override;
  const EmbeddingProviderConfig& config() const override { return config_; }

 private:
  std::map<std::string, int> lexicon_;
  int concepts_;
  int residue_dim_;
  double residue_;
  EmbeddingProviderConfig config_;
};

// Scales every vector a provider returns.
class ScaledProvider final : public EmbeddingProvider {
 public:
  ScaledProvider(std::unique_ptr<EmbeddingProvider> inner, double factor);
  std::vector<Embedding> embed(std::span<const std::string> texts) override;
  const EmbeddingProviderConfig& config() const override { return inner_->config(); }

 private:
  std::unique_ptr<EmbeddingProvider> inner_;
  double factor_;
};

struct AlexFixture {
  std::vector<Document> documents;
  std::string query;
  std::vector<int> clue_blocks;  // block ids after chunking
  std::vector<std::string> keywords;

  std::unique_ptr<ConceptProvider> provider() const;
  std::shared_ptr<ScriptedMock> mock() const;
};

// Alex's day: routine, cafe, bus and office scenes plus two indirect
// weather clues that share no vocabulary with the query.
AlexFixture alex_fixture();

struct AlexBuild {
  Corpus corpus;
  EmbeddingMatrix vectors;
  SimilarityGraph graph;
  KeywordSet keywords;
  KnowledgeGraph kg;
  std::unique_ptr<Embedder> embedder;
};

// Chunk, embed, extract through the mock, refine, associate.
AlexBuild build_alex(const AlexFixture& fixture);

// Temp directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace autokg::testing
