#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "autokg/embedding.hpp"
#include "autokg/simgraph.hpp"

namespace autokg {

enum class ClusterAlgorithm { kmeans, spectral };
std::string_view to_string(ClusterAlgorithm algorithm);

// Distance used by k-means on raw embeddings. `cosine` runs Euclidean
// k-means on L2-normalized rows.
enum class KMeansMetric { euclidean, cosine };
std::string_view to_string(KMeansMetric metric);
KMeansMetric parse_kmeans_metric(std::string_view name);

inline constexpr int kDefaultKMeansIterations = 300;
inline constexpr int kDenseEigenLimit = 3000;

struct ClusterResult {
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
  std::vector<int> assignments;
  EmbeddingMatrix centers;  // one row per cluster, in `space` coordinates
  // Coordinates the centers live in: empty for k-means (the input vectors),
  // the row-normalized spectral embedding for spectral clustering.
  EmbeddingMatrix space;
  std::uint64_t seed = 0;
  int iterations = 0;
  std::vector<double> objective_trace;  // within-cluster SSE after each iteration

  int cluster_count() const { return static_cast<int>(centers.rows()); }
  std::vector<int> members(int cluster) const;
};

// k-means++ seeding, then Lloyd iterations until the assignment is a fixpoint
// or `max_iter` is reached. Empty clusters take the point farthest from its
// current center.
ClusterResult kmeans(const EmbeddingMatrix& vectors, int n, int max_iter, std::uint64_t seed,
                     KMeansMetric metric = KMeansMetric::euclidean);

struct EigenPairs {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column per value
};

// The `count` smallest eigenpairs of I - D^{-1/2} W D^{-1/2}. Dense solve up
// to `dense_limit` nodes, Lanczos with full reorthogonalization above.
EigenPairs normalized_laplacian_eigenpairs(const SimilarityGraph& graph, int count,
                                           int dense_limit = kDenseEigenLimit,
                                           std::uint64_t seed = 0);

// Normalized spectral clustering: row-normalized bottom eigenvectors, then
// seeded k-means.
ClusterResult spectral(const SimilarityGraph& graph, int n, int max_iter, std::uint64_t seed,
                       int dense_limit = kDenseEigenLimit);

struct ClusterSample {
  int cluster_id = 0;
  std::vector<int> center_blocks;
  std::vector<int> random_blocks;

  std::vector<int> all() const;
};

// `c` members nearest the center by angle (ties by id), then `c` drawn
// uniformly without replacement from the rest. Clusters of at most 2c
// members are returned whole. `points` rows are indexed by member id.
ClusterSample sample_cluster(int cluster_id, std::span<const int> members, const EmbeddingMatrix& points,
                             const Eigen::Ref<const Eigen::VectorXd>& center, int c, std::uint64_t seed);

}  // namespace autokg
