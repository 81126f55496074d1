#include <autokg/laplace.hpp>
#include <gtest/gtest.h>

#include "fixtures.hpp"

namespace autokg {
namespace {

LabelAssignment labels(std::initializer_list<std::pair<int, double>> l) {
  LabelAssignment a;
  for (auto [n, v] : l) a.set(n, v);
  return a;
}

TEST(Laplace, ThreeNodePath) {
  const auto s = laplace_learn(testing::path_graph(3), labels({{0, 1.0}, {2, 0.0}}));
  EXPECT_NEAR(s.u[1], 0.5, 1e-10);
  EXPECT_EQ(s.u[0], 1.0);
  EXPECT_EQ(s.u[2], 0.0);
}

TEST(Laplace, WeightedPath) {
  const auto g = testing::graph_from_edges(3, {{0, 1, 2.0}, {1, 2, 1.0}});
  const auto l = labels({{0, 1.0}, {2, 0.0}});
  const auto s = laplace_learn(g, l);
  EXPECT_NEAR(s.u[1], 2.0 / 3.0, 1e-10);
  EXPECT_NEAR(s.u[1], testing::dense_harmonic(g, l)[1], 1e-10);
}

TEST(Laplace, FiveNodePathIsLinear) {
  const auto s = laplace_learn(testing::path_graph(5), labels({{0, 1.0}, {4, 0.0}}));
  const double expect[] = {1.0, 0.75, 0.5, 0.25, 0.0};
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(s.u[i], expect[i], 1e-10);
}

TEST(Laplace, ConstantLabelsGiveConstant) {
  const auto m = testing::random_vectors(30, 6, 3);
  GraphBuildOptions o;
  o.k = 8;
  const auto g = build_similarity_graph(m, o);
  const auto s = laplace_learn(g, labels({{0, 1.0}, {7, 1.0}, {19, 1.0}}));
  for (int i = 0; i < 30; ++i) EXPECT_NEAR(s.u[i], 1.0, 1e-10);
}

TEST(Laplace, MatchesDenseOracleAndMaximumPrinciple) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = testing::clustered_vectors(120, 10, 3, 0.4, seed);
    GraphBuildOptions o;
    o.k = 10;
    const auto g = build_similarity_graph(m, o);
    LabelAssignment l;
    for (int i = 0; i < 5; ++i) l.set(i, 1.0);
    for (int i = 100; i < 120; ++i) l.set(i, 0.0);
    const auto s = laplace_learn(g, l);
    const auto dense = testing::dense_harmonic(g, l);
    EXPECT_LT((s.u - dense).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_GE(s.u.minCoeff(), -1e-12);
    EXPECT_LE(s.u.maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(Laplace, RaisingALabelNeverLowersTheSolution) {
  const auto m = testing::random_vectors(50, 5, 21);
  GraphBuildOptions o;
  o.k = 7;
  const auto g = build_similarity_graph(m, o);
  const auto low = laplace_learn(g, labels({{0, 1.0}, {1, 0.0}, {2, 0.2}}));
  const auto high = laplace_learn(g, labels({{0, 1.0}, {1, 0.0}, {2, 0.8}}));
  for (int i = 0; i < 50; ++i) EXPECT_GE(high.u[i], low.u[i] - 1e-9);
}

TEST(Laplace, AllLabeledReturnsLabels) {
  const auto s = laplace_learn(testing::path_graph(2), labels({{0, 0.3}, {1, 0.9}}));
  EXPECT_EQ(s.u[0], 0.3);
  EXPECT_EQ(s.u[1], 0.9);
  EXPECT_EQ(s.iterations, 0);
}

TEST(Laplace, InputErrors) {
  const auto g = testing::path_graph(4);
  EXPECT_THROW(laplace_learn(g, labels({{0, 1.0}, {0, 0.0}})), ParameterError);
  EXPECT_NO_THROW(laplace_learn(g, labels({{0, 1.0}, {0, 1.0}})));
  EXPECT_THROW(laplace_learn(g, labels({{9, 1.0}})), ParameterError);
  const auto split = testing::graph_from_edges(4, {{0, 1, 1.0}, {2, 3, 1.0}});
  EXPECT_THROW(laplace_learn(split, labels({{0, 1.0}})), ParameterError);
}

TEST(Laplace, IterationCapRaisesSolverError) {
  LaplaceOptions opt;
  opt.max_iter = 1;
  try {
    laplace_learn(testing::path_graph(40), labels({{0, 1.0}, {39, 0.0}}), opt);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_GT(e.residual(), opt.tol);
    EXPECT_EQ(e.iterations(), 1);
  }
}

}  // namespace
}  // namespace autokg
