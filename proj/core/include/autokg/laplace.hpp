#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "autokg/simgraph.hpp"

namespace autokg {

// Boundary values for harmonic extension. Unlabeled nodes are everything not
// listed. Repeating a node is allowed only with the same label.
struct LabelAssignment {
  std::vector<std::pair<int, double>> labeled;

  void set(int node, double label) { labeled.emplace_back(node, label); }
};

struct LaplaceOptions {
  double tol = 1e-8;  // relative residual of the unlabeled system
  int max_iter = 0;   // 0 selects 10 * n_nodes
};

struct HarmonicSolution {
  Eigen::VectorXd u;
  double residual = 0.0;
  int iterations = 0;
};

// Solves L_uu u_u = W_ul y_l by conjugate gradients with a Jacobi
// preconditioner; labeled entries of u equal their labels exactly. A fully
// labeled graph returns the labels without solving.
HarmonicSolution laplace_learn(const SimilarityGraph& graph, const LabelAssignment& labels,
                               LaplaceOptions options = {});

}  // namespace autokg
