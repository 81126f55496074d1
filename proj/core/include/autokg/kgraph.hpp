#pragma once

#include <Eigen/SparseCore>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autokg/embedding.hpp"
#include "autokg/error.hpp"
#include "autokg/laplace.hpp"
#include "autokg/simgraph.hpp"

namespace autokg {

inline constexpr int kKgFormatVersion = 1;
inline constexpr int kDefaultSeedsNear = 5;
inline constexpr int kDefaultSeedsFar = 35;
// Absolute slack on the u >= 0.5 membership cut. CG stops at a relative
// residual of 1e-8, so a node whose exact value is 0.5 can come back a few
// ulps low.
inline constexpr double kMembershipSlack = 1e-12;

using WeightMatrix = Eigen::SparseMatrix<int, Eigen::RowMajor>;

std::string_view engine_version();

struct AssociationParams {
  int n1 = kDefaultSeedsNear;
  int n2 = kDefaultSeedsFar;
  LaplaceOptions laplace;
  bool keep_u_values = false;
  unsigned threads = 0;

  void validate() const;
};

struct KeywordAssociation {
  std::string keyword;
  Embedding embedding;
  std::vector<int> block_ids;  // ascending
  std::optional<Eigen::VectorXd> u_values;
  int iterations = 0;
  double residual = 0.0;

  bool operator==(const KeywordAssociation& other) const;
};

// Seeds: the n1 blocks nearest the keyword by angle get label 1, the n2
// farthest get 0. The harmonic extension decides the rest.
KeywordAssociation associate_keyword(std::string keyword, const Embedding& keyword_embedding,
                                     const EmbeddingMatrix& vectors, const SimilarityGraph& graph,
                                     const AssociationParams& params);
KeywordAssociation associate_keyword(std::string keyword, Embedder& embedder, const EmbeddingMatrix& vectors,
                                     const SimilarityGraph& graph, const AssociationParams& params);

struct KgManifest {
  int format_version = kKgFormatVersion;
  std::string corpus_hash;
  int n_blocks = 0;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  std::string engine_version;

  bool operator==(const KgManifest& other) const;
};

struct KnowledgeGraph {
  std::vector<std::string> keywords;
  EmbeddingMatrix keyword_embeddings;  // row per keyword
  WeightMatrix weights;                // |X^ki ∩ X^kj|, zero diagonal, symmetric
  std::vector<KeywordAssociation> associations;
  KgManifest manifest;

  int size() const { return static_cast<int>(keywords.size()); }
  Eigen::Index nnz() const { return weights.nonZeros(); }
  int weight(int i, int j) const { return weights.coeff(i, j); }

  bool operator==(const KnowledgeGraph& other) const;
};

// Weights from association sets through a block -> keywords inverted index.
WeightMatrix intersection_weights(std::span<const KeywordAssociation> associations, int n_blocks);

KnowledgeGraph assemble_kg(std::vector<KeywordAssociation> associations, KgManifest manifest);

// Associates every keyword on a worker pool, then assembles W^k.
KnowledgeGraph build_kg(std::span<const std::string> keywords, const EmbeddingMatrix& keyword_embeddings,
                        const EmbeddingMatrix& vectors, const SimilarityGraph& graph,
                        const AssociationParams& params, KgManifest manifest);

// Throws ConsistencyError on any broken structural invariant.
void check_kg_invariants(const KnowledgeGraph& kg);

struct KgDiagnostics {
  int nodes = 0;
  Eigen::Index nnz = 0;
  int edges = 0;
  int isolated = 0;
  int min_degree = 0;
  int max_degree = 0;
  double mean_degree = 0.0;
  double median_degree = 0.0;
  std::vector<int> degrees;
  double mean_association_size = 0.0;
  int max_association_size = 0;

  int degree_below(int threshold) const;
  nlohmann::ordered_json to_json() const;
};

KgDiagnostics diagnose(const KnowledgeGraph& kg);

// Binary container: magic, version, JSON manifest, payload, SHA-256 trailer.
std::string serialize_kg(const KnowledgeGraph& kg);
KnowledgeGraph parse_kg(std::string_view bytes);
void save_kg(const KnowledgeGraph& kg, const std::filesystem::path& path);
KnowledgeGraph load_kg(const std::filesystem::path& path);
// Manifest only, after the same integrity checks.
nlohmann::ordered_json read_kg_manifest(const std::filesystem::path& path);

enum class ExportFormat { dot, json };
ExportFormat parse_export_format(std::string_view name);

struct SubgraphSpec {
  std::string query_label;
  std::vector<int> inner;  // K1, linked to the query
  std::vector<int> outer;  // K2, linked to adjacent K1 keywords
  std::vector<double> inner_scores;  // optional similarity per inner keyword
  struct BlockNode {
    int id = 0;
    std::string label;
    int via_keyword = -1;  // -1 links the block to the query node
  };
  std::vector<BlockNode> blocks;
};

std::string export_subgraph(const KnowledgeGraph& kg, const SubgraphSpec& spec, ExportFormat format);
std::string export_subgraph(const KnowledgeGraph& kg, const SubgraphSpec& spec, std::string_view format);
// Every keyword and every positive-weight pair.
std::string export_full(const KnowledgeGraph& kg, ExportFormat format);

}  // namespace autokg
