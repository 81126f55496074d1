#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "autokg/embedding.hpp"

namespace autokg {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Lower bound applied to per-node bandwidths; duplicate vectors would
// otherwise give a zero bandwidth and a 0/0 kernel.
inline constexpr double kTauFloor = 1e-8;
inline constexpr int kDefaultNeighbors = 30;
inline constexpr int kGraphFormatVersion = 1;

// Angle in [0, pi] between two nonzero vectors; the cosine is clamped to
// [-1, 1] before arccos. Throws DegenerateVectorError for zero vectors.
double angle(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v);

// exp(-theta^2 / sqrt(tau_u * tau_v)).
double kernel_weight(double theta, double tau_u, double tau_v);
double similarity_weight(const Eigen::Ref<const Eigen::VectorXd>& u,
                         const Eigen::Ref<const Eigen::VectorXd>& v, double tau_u, double tau_v);

// Rows scaled to unit norm. Throws DegenerateVectorError on a zero row.
EmbeddingMatrix normalized_rows(const EmbeddingMatrix& vectors);

// Angles between a unit query and every row of a row-normalized matrix.
Eigen::VectorXd angles_to(const EmbeddingMatrix& unit_rows, const Eigen::Ref<const Eigen::VectorXd>& unit_query);

// Ordering key for angles: rounded to a 1e-12 rad grid so that rounding
// noise in the dot products never reorders equal angles.
double angle_rank_key(double theta);

// The `count` smallest entries of `angles` as indices, ascending by angle
// with ties broken by smaller index.
std::vector<int> nearest_by_angle(const Eigen::Ref<const Eigen::VectorXd>& angles, int count);
// The `count` largest, descending, ties broken by smaller index.
std::vector<int> farthest_by_angle(const Eigen::Ref<const Eigen::VectorXd>& angles, int count);

// K nearest neighbors by angle for every node. Row i lists node i first,
// then the others ascending by angle (ties by id).
struct NeighborLists {
  int n_nodes = 0;
  int k = 0;
  std::vector<int> ids;        // n_nodes * k, row-major
  std::vector<double> angles;  // aligned with ids

  std::span<const int> neighbors(int i) const {
    return {ids.data() + static_cast<std::size_t>(i) * k, static_cast<std::size_t>(k)};
  }
  std::span<const double> neighbor_angles(int i) const {
    return {angles.data() + static_cast<std::size_t>(i) * k, static_cast<std::size_t>(k)};
  }
};

NeighborLists knn(const EmbeddingMatrix& vectors, int k, unsigned threads = 0);

struct SimilarityGraph {
  int n_nodes = 0;
  int k = 0;            // neighbors used by the final build
  int k_requested = 0;  // neighbors asked for before escalation
  int escalations = 0;
  SparseMatrix weights;  // symmetric, nonnegative, zero diagonal
  Eigen::VectorXd tau;
  bool connected = false;

  Eigen::Index nnz() const { return weights.nonZeros(); }

  // Wraps an explicit weight matrix (tests, fixtures, deserialization).
  // Validates symmetry and sign, drops the diagonal, computes connectivity.
  static SimilarityGraph from_weights(SparseMatrix weights, Eigen::VectorXd tau = {});

  bool operator==(const SimilarityGraph& other) const;
};

struct GraphBuildOptions {
  int k = kDefaultNeighbors;
  int escalation_step = 10;
  unsigned threads = 0;
};

// KNN kernel graph: bandwidth tau_i is the angle to the k-th list entry
// (self counted first), the one-sided matrix keeps w(v_i, v_j) for j in the
// list of i, and the result is its symmetric average. If the graph is
// disconnected, k grows by `escalation_step` (capped at n) and the build
// repeats.
SimilarityGraph build_similarity_graph(const EmbeddingMatrix& vectors, GraphBuildOptions options = {});

struct GraphLaplacian {
  Eigen::VectorXd degree;
  SparseMatrix laplacian;  // D - W

  Eigen::Index nnz() const { return laplacian.nonZeros(); }
};

GraphLaplacian laplacian(const SimilarityGraph& graph);

// Connected components over the nonzero pattern (union-find).
int count_components(const SparseMatrix& weights);

// JSON container: header {format_version, n_nodes, K_final, ...}, the tau
// vector, and the upper-triangle COO triplets [i, j, weight].
std::string serialize_graph(const SimilarityGraph& graph);
SimilarityGraph parse_graph(std::string_view json);
void save_graph(const SimilarityGraph& graph, const std::filesystem::path& path);
SimilarityGraph load_graph(const std::filesystem::path& path);

}  // namespace autokg
