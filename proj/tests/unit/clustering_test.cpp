#include <autokg/clustering.hpp>
#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

#include "fixtures.hpp"

namespace autokg {
namespace {

// Partition of `n` items as a bitmask, normalized so item 0 is in group 0.
unsigned mask_of(const std::vector<int>& assignments) {
  unsigned m = 0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != assignments[0]) m |= 1u << i;
  }
  return m;
}

double sse(const EmbeddingMatrix& x, unsigned mask) {
  double total = 0;
  for (int side = 0; side < 2; ++side) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
    int count = 0;
    for (int i = 0; i < x.rows(); ++i) {
      if (((mask >> i) & 1u) == static_cast<unsigned>(side)) {
        mean += x.row(i);
        ++count;
      }
    }
    if (count == 0) return std::numeric_limits<double>::infinity();
    mean /= count;
    for (int i = 0; i < x.rows(); ++i) {
      if (((mask >> i) & 1u) == static_cast<unsigned>(side)) total += (x.row(i) - mean).squaredNorm();
    }
  }
  return total;
}

double normalized_cut(const Eigen::MatrixXd& w, unsigned mask) {
  double cut = 0, vol_a = 0, vol_b = 0;
  for (int i = 0; i < w.rows(); ++i) {
    const bool a = ((mask >> i) & 1u) == 0;
    (a ? vol_a : vol_b) += w.row(i).sum();
    for (int j = 0; j < w.cols(); ++j) {
      if (a && ((mask >> j) & 1u)) cut += w(i, j);
    }
  }
  if (vol_a == 0 || vol_b == 0) return std::numeric_limits<double>::infinity();
  return cut / vol_a + cut / vol_b;
}

TEST(KMeans, SingleClusterCenterIsMean) {
  const auto x = testing::random_vectors(20, 4, 1);
  const auto r = kmeans(x, 1, 100, 7);
  EXPECT_EQ(r.cluster_count(), 1);
  for (int a : r.assignments) EXPECT_EQ(a, 0);
  EXPECT_LT((r.centers.row(0) - x.colwise().mean()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KMeans, TwoBlobsMatchBruteForce) {
  EmbeddingMatrix x(6, 2);
  x << 0, 0, 0.5, 0.1, 0.2, 0.6, 10, 10, 10.4, 9.8, 9.7, 10.3;
  const auto r = kmeans(x, 2, 100, 3);
  unsigned best = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  for (unsigned m = 0; m < (1u << 6); m += 2) {
    if (sse(x, m) < best_sse) {
      best_sse = sse(x, m);
      best = m;
    }
  }
  EXPECT_EQ(mask_of(r.assignments), best);
  EXPECT_EQ(best, 0b111000u);
}

TEST(KMeans, OneClusterPerDistinctPoint) {
  const auto x = testing::random_vectors(8, 3, 4);
  const auto r = kmeans(x, 8, 100, 1);
  EXPECT_EQ(std::set<int>(r.assignments.begin(), r.assignments.end()).size(), 8u);
}

TEST(KMeans, ObjectiveNonIncreasingAndSeeded) {
  const auto x = testing::clustered_vectors(400, 10, 6, 0.5, 2);
  const auto r = kmeans(x, 6, 300, 11);
  for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
    EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1] * (1 + 1e-12));
  }
  const auto again = kmeans(x, 6, 300, 11);
  EXPECT_EQ(r.assignments, again.assignments);
  for (int c = 0; c < r.cluster_count(); ++c) EXPECT_FALSE(r.members(c).empty());
}

TEST(KMeans, BadCount) {
  const auto x = testing::random_vectors(3, 2, 0);
  EXPECT_THROW(kmeans(x, 4, 10, 0), ParameterError);
  EXPECT_THROW(kmeans(x, 0, 10, 0), ParameterError);
}

TEST(Spectral, TwoCliquesMatchBruteForceNormalizedCut) {
  std::vector<std::tuple<int, int, double>> edges;
  for (int i = 0; i < 5; ++i) {
    for (int j = i + 1; j < 5; ++j) {
      edges.emplace_back(i, j, 1.0);
      edges.emplace_back(i + 5, j + 5, 1.0);
    }
  }
  edges.emplace_back(4, 5, 0.01);
  const auto g = testing::graph_from_edges(10, edges);
  const auto r = spectral(g, 2, 100, 5);
  const Eigen::MatrixXd w(g.weights);
  unsigned best = 0;
  double best_cut = std::numeric_limits<double>::infinity();
  for (unsigned m = 2; m < (1u << 10); m += 2) {
    if (normalized_cut(w, m) < best_cut) {
      best_cut = normalized_cut(w, m);
      best = m;
    }
  }
  EXPECT_EQ(best, 0b1111100000u);
  EXPECT_EQ(mask_of(r.assignments), best);
}

TEST(Spectral, SingleCluster) {
  const auto r = spectral(testing::path_graph(6), 1, 50, 0);
  for (int a : r.assignments) EXPECT_EQ(a, 0);
}

TEST(Spectral, UniformCompleteGraphSplitsNonEmpty) {
  std::vector<std::tuple<int, int, double>> edges;
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) edges.emplace_back(i, j, 1.0);
  }
  const auto r = spectral(testing::graph_from_edges(6, edges), 2, 50, 0);
  EXPECT_FALSE(r.members(0).empty());
  EXPECT_FALSE(r.members(1).empty());
}

TEST(Spectral, LanczosAgreesWithDense) {
  const auto x = testing::clustered_vectors(200, 12, 4, 0.4, 8);
  GraphBuildOptions o;
  o.k = 8;
  const auto g = build_similarity_graph(x, o);
  const auto dense = normalized_laplacian_eigenpairs(g, 5, 10000);
  const auto lanczos = normalized_laplacian_eigenpairs(g, 5, 10, 3);
  ASSERT_EQ(lanczos.values.size(), 5);
  EXPECT_LT((dense.values - lanczos.values).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(dense.values[0], 0.0, 1e-9);
}

TEST(SampleCluster, SmallClusterReturnedWhole) {
  const auto x = testing::random_vectors(10, 3, 0);
  const std::vector<int> members = {1, 4, 6, 9};
  const auto s = sample_cluster(0, members, x, x.row(1).transpose(), 15, 5);
  auto all = s.all();
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, members);
}

TEST(SampleCluster, LargeClusterGivesTwoC) {
  const auto x = testing::random_vectors(100, 6, 2);
  std::vector<int> members(100);
  std::iota(members.begin(), members.end(), 0);
  const Eigen::VectorXd center = x.colwise().mean().transpose();
  const auto s = sample_cluster(3, members, x, center, 15, 9);
  EXPECT_EQ(s.cluster_id, 3);
  EXPECT_EQ(s.center_blocks.size(), 15u);
  EXPECT_EQ(s.random_blocks.size(), 15u);
  const auto all = s.all();
  EXPECT_EQ(std::set<int>(all.begin(), all.end()).size(), 30u);

  // The center part is the 15 members nearest the center by angle.
  Eigen::VectorXd angles(100);
  for (int i = 0; i < 100; ++i) angles[i] = angle(x.row(i).transpose(), center);
  EXPECT_EQ(s.center_blocks, nearest_by_angle(angles, 15));

  const auto again = sample_cluster(3, members, x, center, 15, 9);
  EXPECT_EQ(again.random_blocks, s.random_blocks);
}

}  // namespace
}  // namespace autokg
