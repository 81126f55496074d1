#include "autokg/laplace.hpp"

#include <cmath>
#include <string>

#include "autokg/error.hpp"

namespace autokg {

HarmonicSolution laplace_learn(const SimilarityGraph& graph, const LabelAssignment& labels,
                               LaplaceOptions options) {
  const int n = graph.n_nodes;
  if (labels.labeled.empty()) throw ParameterError("laplace_learn: no labeled nodes");
  if (!(options.tol > 0.0)) throw ParameterError("laplace_learn: tol must be positive");

  // is_labeled[i] is 1 for boundary nodes; boundary holds their values.
  std::vector<char> is_labeled(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  for (const auto& [node, value] : labels.labeled) {
    if (node < 0 || node >= n) throw ParameterError("laplace_learn: label for unknown node " + std::to_string(node));
    if (!std::isfinite(value)) throw ParameterError("laplace_learn: non-finite label");
    if (is_labeled[node] && u[node] != value) {
      throw ParameterError("laplace_learn: conflicting labels for node " + std::to_string(node));
    }
    is_labeled[node] = 1;
    u[node] = value;
  }

  std::size_t unlabeled = 0;
  for (char f : is_labeled) unlabeled += f == 0;
  HarmonicSolution out;
  if (unlabeled == 0) {
    out.u = std::move(u);
    return out;
  }
  if (!graph.connected) throw ParameterError("laplace_learn: graph must be connected");

  const SparseMatrix& w = graph.weights;
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < w.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(w, i); it; ++it) degree[i] += it.value();
  }

  // A x = (D - W) x restricted to unlabeled rows, with x zero on labeled nodes.
  auto apply = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    for (int i = 0; i < n; ++i) {
      if (is_labeled[i]) {
        y[i] = 0.0;
        continue;
      }
      double acc = degree[i] * x[i];
      for (SparseMatrix::InnerIterator it(w, i); it; ++it) {
        const auto j = it.col();
        if (!is_labeled[j]) acc -= it.value() * x[j];
      }
      y[i] = acc;
    }
  };

  // Right-hand side: W_ul y_l.
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (is_labeled[i]) continue;
    double acc = 0.0;
    for (SparseMatrix::InnerIterator it(w, i); it; ++it) {
      if (is_labeled[it.col()]) acc += it.value() * u[it.col()];
    }
    b[i] = acc;
  }

  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    // All boundary values are zero; the harmonic extension is zero.
    return {std::move(u), 0.0, 0};
  }

  Eigen::VectorXd inv_diag(n);
  for (int i = 0; i < n; ++i) inv_diag[i] = is_labeled[i] || degree[i] == 0.0 ? 0.0 : 1.0 / degree[i];

  const int max_iter = options.max_iter > 0 ? options.max_iter : 10 * n;
  // Start from the mean boundary value; constant labels are then exact.
  double label_mean = 0.0;
  int label_count = 0;
  for (int i = 0; i < n; ++i) {
    if (is_labeled[i]) {
      label_mean += u[i];
      ++label_count;
    }
  }
  label_mean /= label_count;
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = is_labeled[i] ? 0.0 : label_mean;
  Eigen::VectorXd ap(n);
  apply(x, ap);
  Eigen::VectorXd r = b - ap;
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  double rel = r.norm() / b_norm;
  int iter = 0;
  while (rel > options.tol && iter < max_iter) {
    apply(p, ap);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    ++iter;
    if (r.norm() / b_norm <= options.tol) {
      // The recurrence residual drifts from the true one; confirm, and
      // restart from the current iterate if they disagree.
      apply(x, ap);
      r = b - ap;
      rel = r.norm() / b_norm;
      if (rel <= options.tol) break;
      z = inv_diag.cwiseProduct(r);
      p = z;
      rz = r.dot(z);
      continue;
    }
    z = inv_diag.cwiseProduct(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }

  apply(x, ap);
  rel = (b - ap).norm() / b_norm;
  if (!(rel <= options.tol)) {
    throw SolverError("laplace_learn: CG stopped at relative residual " + std::to_string(rel) +
                          " after " + std::to_string(iter) + " iterations",
                      rel, iter);
  }
  for (int i = 0; i < n; ++i) {
    if (!is_labeled[i]) u[i] = x[i];
  }
  out.u = std::move(u);
  out.residual = rel;
  out.iterations = iter;
  return out;
}

}  // namespace autokg
