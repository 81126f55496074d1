#include "autokg/clustering.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "autokg/error.hpp"
#include "autokg/rng.hpp"

namespace autokg {
namespace {

double squared_distance(const EmbeddingMatrix& x, Eigen::Index i, const EmbeddingMatrix& c, Eigen::Index k) {
  return (x.row(i) - c.row(k)).squaredNorm();
}

EmbeddingMatrix kmeans_plus_plus(const EmbeddingMatrix& x, int n, Rng& rng) {
  const Eigen::Index rows = x.rows();
  EmbeddingMatrix centers(n, x.cols());
  std::vector<char> chosen(static_cast<std::size_t>(rows), 0);
  Eigen::Index first = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(rows)));
  centers.row(0) = x.row(first);
  chosen[first] = 1;
  Eigen::VectorXd d2(rows);
  for (Eigen::Index i = 0; i < rows; ++i) d2[i] = squared_distance(x, i, centers, 0);

  for (int k = 1; k < n; ++k) {
    const double total = d2.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > target) break;
      }
    }
    if (pick < 0) {
      // Every remaining point coincides with a center; take an unchosen one.
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (!chosen[i]) free.push_back(i);
      }
      pick = free[rng.below(free.size())];
    }
    chosen[pick] = 1;
    centers.row(k) = x.row(pick);
    for (Eigen::Index i = 0; i < rows; ++i) d2[i] = std::min(d2[i], squared_distance(x, i, centers, k));
  }
  return centers;
}

// Nearest center per point (ties to the smaller cluster id).
bool assign(const EmbeddingMatrix& x, const EmbeddingMatrix& centers, std::vector<int>& labels) {
  const Eigen::MatrixXd cross = x * centers.transpose();
  const Eigen::VectorXd center_sq = centers.rowwise().squaredNorm();
  bool changed = false;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < centers.rows(); ++k) {
      const double d = center_sq[k] - 2.0 * cross(i, k);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    if (labels[i] != best) {
      labels[i] = best;
      changed = true;
    }
  }
  return changed;
}

void update_centers(const EmbeddingMatrix& x, std::vector<int>& labels, EmbeddingMatrix& centers) {
  const int n = static_cast<int>(centers.rows());
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  centers.setZero();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    centers.row(labels[i]) += x.row(i);
    ++counts[labels[i]];
  }
  for (int k = 0; k < n; ++k) {
    if (counts[k] > 0) centers.row(k) /= counts[k];
  }
  for (int k = 0; k < n; ++k) {
    if (counts[k] > 0) continue;
    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (counts[labels[i]] <= 1) continue;
      const double d = squared_distance(x, i, centers, labels[i]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far < 0) throw InternalError("kmeans: no point available to repair an empty cluster");
    const int old = labels[far];
    centers.row(old) = (centers.row(old) * counts[old] - x.row(far)) / (counts[old] - 1);
    --counts[old];
    labels[far] = k;
    counts[k] = 1;
    centers.row(k) = x.row(far);
  }
}

double objective(const EmbeddingMatrix& x, const std::vector<int>& labels, const EmbeddingMatrix& centers) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) s += squared_distance(x, i, centers, labels[i]);
  return s;
}

EigenPairs dense_eigenpairs(const SparseMatrix& s, int count) {
  const Eigen::MatrixXd lsym = Eigen::MatrixXd::Identity(s.rows(), s.cols()) - Eigen::MatrixXd(s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lsym);
  if (solver.info() != Eigen::Success) {
    throw NumericError("spectral: dense eigensolver failed on " + std::to_string(s.rows()) + " nodes");
  }
  return {solver.eigenvalues().head(count), solver.eigenvectors().leftCols(count)};
}

// Largest eigenpairs of the normalized adjacency via Lanczos, returned as
// eigenpairs of I - S (ascending).
EigenPairs lanczos_eigenpairs(const SparseMatrix& s, int count, std::uint64_t seed) {
  const int n = static_cast<int>(s.rows());
  constexpr double kTol = 1e-8;
  Rng rng(mix_seed(seed, 0x1a2c05));
  auto random_unit = [&] {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform() - 0.5;
    return v;
  };
  std::vector<Eigen::VectorXd> basis;
  std::vector<double> alpha;
  std::vector<double> beta;
  auto orthogonalize = [&](Eigen::VectorXd& w) {
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis) w -= q.dot(w) * q;
    }
  };

  Eigen::VectorXd v = random_unit();
  v.normalize();
  basis.push_back(v);
  Eigen::MatrixXd ritz_vectors;
  Eigen::VectorXd ritz_values;
  for (int j = 0;; ++j) {
    Eigen::VectorXd w = s * basis[j];
    alpha.push_back(basis[j].dot(w));
    orthogonalize(w);
    double b = w.norm();
    const int m = j + 1;

    const bool exhausted = m == n;
    if (m >= count && (exhausted || b < 1e-12 || m % 5 == 0 || m == count)) {
      Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) {
        t(i, i) = alpha[i];
        if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[i];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri(t);
      if (tri.info() != Eigen::Success) throw NumericError("spectral: Lanczos tridiagonal solve failed");
      bool converged = true;
      for (int q = 0; q < count; ++q) {
        const int col = m - 1 - q;
        if (b * std::abs(tri.eigenvectors()(m - 1, col)) > kTol) converged = false;
      }
      if (converged || exhausted) {
        ritz_values.resize(count);
        ritz_vectors.resize(n, count);
        for (int q = 0; q < count; ++q) {
          const int col = m - 1 - q;
          Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
          for (int i = 0; i < m; ++i) y += tri.eigenvectors()(i, col) * basis[i];
          ritz_values[q] = 1.0 - tri.eigenvalues()[col];
          ritz_vectors.col(q) = y.normalized();
        }
        return {ritz_values, ritz_vectors};
      }
    }
    if (b < 1e-12) {
      // Invariant subspace found; continue from a fresh orthogonal direction.
      w = random_unit();
      orthogonalize(w);
      w.normalize();
      b = 0.0;
    } else {
      w /= b;
    }
    beta.push_back(b);
    basis.push_back(std::move(w));
  }
}

}  // namespace

std::string_view to_string(ClusterAlgorithm algorithm) {
  return algorithm == ClusterAlgorithm::kmeans ? "kmeans" : "spectral";
}

std::string_view to_string(KMeansMetric metric) {
  return metric == KMeansMetric::euclidean ? "euclidean" : "cosine";
}

KMeansMetric parse_kmeans_metric(std::string_view name) {
  if (name == "euclidean") return KMeansMetric::euclidean;
  if (name == "cosine") return KMeansMetric::cosine;
  throw ConfigError("unknown k-means metric '" + std::string(name) + "'");
}

std::vector<int> ClusterResult::members(int cluster) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == cluster) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> ClusterSample::all() const {
  std::vector<int> out = center_blocks;
  out.insert(out.end(), random_blocks.begin(), random_blocks.end());
  return out;
}

ClusterResult kmeans(const EmbeddingMatrix& vectors, int n, int max_iter, std::uint64_t seed,
                     KMeansMetric metric) {
  const Eigen::Index rows = vectors.rows();
  if (n < 1) throw ParameterError("kmeans: n must be >= 1");
  if (n > rows) throw ParameterError("kmeans: n exceeds the number of points");
  if (max_iter < 1) throw ParameterError("kmeans: I_max must be >= 1");
  const EmbeddingMatrix x = metric == KMeansMetric::cosine ? normalized_rows(vectors) : vectors;

  Rng rng(mix_seed(seed, 0x6b6d));
  ClusterResult out;
  out.algorithm = ClusterAlgorithm::kmeans;
  out.seed = seed;
  out.centers = kmeans_plus_plus(x, n, rng);
  out.assignments.assign(static_cast<std::size_t>(rows), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    const bool changed = assign(x, out.centers, out.assignments);
    if (!changed && iter > 0) break;
    update_centers(x, out.assignments, out.centers);
    out.objective_trace.push_back(objective(x, out.assignments, out.centers));
    out.iterations = iter + 1;
  }
  return out;
}

EigenPairs normalized_laplacian_eigenpairs(const SimilarityGraph& graph, int count, int dense_limit,
                                           std::uint64_t seed) {
  const int n = graph.n_nodes;
  if (count < 1 || count > n) throw ParameterError("eigenpairs: count must be in [1, n]");
  Eigen::VectorXd inv_sqrt_degree(n);
  for (int i = 0; i < n; ++i) {
    double d = 0.0;
    for (SparseMatrix::InnerIterator it(graph.weights, i); it; ++it) d += it.value();
    if (!(d > 0.0)) throw NumericError("spectral: node " + std::to_string(i) + " has zero degree");
    inv_sqrt_degree[i] = 1.0 / std::sqrt(d);
  }
  SparseMatrix s = graph.weights;
  for (int i = 0; i < s.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(s, i); it; ++it) {
      it.valueRef() *= inv_sqrt_degree[i] * inv_sqrt_degree[it.col()];
    }
  }
  if (n <= dense_limit) return dense_eigenpairs(s, count);
  return lanczos_eigenpairs(s, count, seed);
}

ClusterResult spectral(const SimilarityGraph& graph, int n, int max_iter, std::uint64_t seed, int dense_limit) {
  if (!graph.connected) throw ParameterError("spectral: graph must be connected");
  if (n < 1 || n > graph.n_nodes) throw ParameterError("spectral: n must be in [1, n_nodes]");
  const EigenPairs pairs = normalized_laplacian_eigenpairs(graph, n, dense_limit, seed);

  EmbeddingMatrix space = pairs.vectors;
  for (Eigen::Index i = 0; i < space.rows(); ++i) {
    const double norm = space.row(i).norm();
    if (norm > 0.0) space.row(i) /= norm;
  }
  ClusterResult out = kmeans(space, n, max_iter, seed);
  out.algorithm = ClusterAlgorithm::spectral;
  out.space = std::move(space);
  return out;
}

ClusterSample sample_cluster(int cluster_id, std::span<const int> members, const EmbeddingMatrix& points,
                             const Eigen::Ref<const Eigen::VectorXd>& center, int c, std::uint64_t seed) {
  if (c < 1) throw ParameterError("sample_cluster: c must be >= 1");
  if (members.empty()) throw ParameterError("sample_cluster: empty cluster " + std::to_string(cluster_id));

  std::vector<int> ids(members.begin(), members.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  const double center_norm = center.norm();
  std::vector<double> key(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const auto row = points.row(ids[t]).transpose();
    const double row_norm = row.norm();
    if (center_norm > 0.0 && row_norm > 0.0) {
      key[t] = std::acos(std::clamp(row.dot(center) / (row_norm * center_norm), -1.0, 1.0));
    } else {
      key[t] = (row - center).norm();
    }
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });

  ClusterSample out;
  out.cluster_id = cluster_id;
  const std::size_t near = std::min<std::size_t>(static_cast<std::size_t>(c), ids.size());
  std::vector<int> rest;
  for (std::size_t t = 0; t < order.size(); ++t) {
    (t < near ? out.center_blocks : rest).push_back(ids[order[t]]);
  }
  std::sort(rest.begin(), rest.end());
  if (rest.size() <= static_cast<std::size_t>(c)) {
    out.random_blocks = std::move(rest);
    return out;
  }
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cluster_id)));
  for (auto idx : rng.sample_indices(rest.size(), static_cast<std::size_t>(c))) {
    out.random_blocks.push_back(rest[idx]);
  }
  return out;
}

}  // namespace autokg
