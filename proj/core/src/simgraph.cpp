#include "autokg/simgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <nlohmann/json.hpp>

#include "autokg/corpus.hpp"
#include "autokg/error.hpp"
#include "autokg/parallel.hpp"

namespace autokg {
namespace {

double clamped_acos(double c) { return std::acos(std::clamp(c, -1.0, 1.0)); }

struct DisjointSets {
  explicit DisjointSets(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
  std::vector<int> parent;
};

// Index order for `count` entries selected by (value, index) under `less`.
template <typename Less>
std::vector<int> select_sorted(const Eigen::Ref<const Eigen::VectorXd>& values, int count, Less less) {
  const int n = static_cast<int>(values.size());
  count = std::clamp(count, 0, n);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  auto cmp = [&](int a, int b) {
    const double ka = angle_rank_key(values[a]);
    const double kb = angle_rank_key(values[b]);
    if (ka != kb) return less(ka, kb);
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + count, idx.end(), cmp);
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

}  // namespace

double angle_rank_key(double theta) { return std::nearbyint(theta * 1e12); }

double angle(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (u.size() != v.size()) throw ParameterError("angle: dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw DegenerateVectorError("angle: zero-norm vector");
  return clamped_acos(u.dot(v) / (nu * nv));
}

double kernel_weight(double theta, double tau_u, double tau_v) {
  if (!(tau_u >= kTauFloor) || !(tau_v >= kTauFloor)) {
    throw ParameterError("similarity weight: bandwidth below floor");
  }
  return std::exp(-(theta * theta) / std::sqrt(tau_u * tau_v));
}

double similarity_weight(const Eigen::Ref<const Eigen::VectorXd>& u,
                         const Eigen::Ref<const Eigen::VectorXd>& v, double tau_u, double tau_v) {
  return kernel_weight(angle(u, v), tau_u, tau_v);
}

EmbeddingMatrix normalized_rows(const EmbeddingMatrix& vectors) {
  EmbeddingMatrix out(vectors.rows(), vectors.cols());
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    const double n = vectors.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DegenerateVectorError("row " + std::to_string(i) + " has zero or non-finite norm");
    }
    out.row(i) = vectors.row(i) / n;
  }
  return out;
}

Eigen::VectorXd angles_to(const EmbeddingMatrix& unit_rows, const Eigen::Ref<const Eigen::VectorXd>& unit_query) {
  if (unit_rows.cols() != unit_query.size()) throw ParameterError("angles_to: dimension mismatch");
  Eigen::VectorXd cos = unit_rows * unit_query;
  return cos.unaryExpr([](double c) { return clamped_acos(c); });
}

std::vector<int> nearest_by_angle(const Eigen::Ref<const Eigen::VectorXd>& angles, int count) {
  return select_sorted(angles, count, std::less<double>());
}

std::vector<int> farthest_by_angle(const Eigen::Ref<const Eigen::VectorXd>& angles, int count) {
  return select_sorted(angles, count, std::greater<double>());
}

NeighborLists knn(const EmbeddingMatrix& vectors, int k, unsigned threads) {
  const int n = static_cast<int>(vectors.rows());
  if (k < 1) throw ParameterError("knn: K must be >= 1");
  if (k > n) throw ParameterError("knn: K exceeds the number of nodes");
  const EmbeddingMatrix unit = normalized_rows(vectors);

  NeighborLists out;
  out.n_nodes = n;
  out.k = k;
  out.ids.resize(static_cast<std::size_t>(n) * k);
  out.angles.resize(out.ids.size());

  constexpr int kRowBlock = 128;
  const int blocks = (n + kRowBlock - 1) / kRowBlock;
  parallel_for(
      static_cast<std::size_t>(blocks),
      [&](std::size_t b) {
        const int r0 = static_cast<int>(b) * kRowBlock;
        const int rows = std::min(kRowBlock, n - r0);
        const Eigen::MatrixXd gram = unit.middleRows(r0, rows) * unit.transpose();
        std::vector<int> idx(static_cast<std::size_t>(n));
        Eigen::VectorXd ang(n);
        for (int r = 0; r < rows; ++r) {
          const int i = r0 + r;
          for (int j = 0; j < n; ++j) ang[j] = clamped_acos(gram(r, j));
          ang[i] = 0.0;
          std::iota(idx.begin(), idx.end(), 0);
          // Self is pinned to the front; everyone else ranks by (angle, id).
          std::swap(idx[0], idx[static_cast<std::size_t>(i)]);
          auto cmp = [&](int a, int c) {
            const double ka = angle_rank_key(ang[a]);
            const double kc = angle_rank_key(ang[c]);
            return ka != kc ? ka < kc : a < c;
          };
          std::partial_sort(idx.begin() + 1, idx.begin() + k, idx.end(), cmp);
          const std::size_t base = static_cast<std::size_t>(i) * k;
          for (int t = 0; t < k; ++t) {
            out.ids[base + t] = idx[static_cast<std::size_t>(t)];
            out.angles[base + t] = ang[idx[static_cast<std::size_t>(t)]];
          }
        }
      },
      threads);
  return out;
}

int count_components(const SparseMatrix& weights) {
  const int n = static_cast<int>(weights.rows());
  DisjointSets sets(n);
  int components = n;
  for (int i = 0; i < weights.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(weights, i); it; ++it) {
      if (it.value() != 0.0 && sets.unite(i, static_cast<int>(it.col()))) --components;
    }
  }
  return components;
}

SimilarityGraph SimilarityGraph::from_weights(SparseMatrix weights, Eigen::VectorXd tau) {
  if (weights.rows() != weights.cols()) throw ParameterError("graph weights must be square");
  weights.prune([](Eigen::Index r, Eigen::Index c, double v) { return r != c && v != 0.0; });
  weights.makeCompressed();
  for (int i = 0; i < weights.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(weights, i); it; ++it) {
      if (!(it.value() > 0.0) || !std::isfinite(it.value())) {
        throw ParameterError("graph weights must be finite and nonnegative");
      }
    }
  }
  SparseMatrix transposed = weights.transpose();
  SparseMatrix diff = weights - transposed;
  diff.prune(0.0, 0.0);
  for (int i = 0; i < diff.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(diff, i); it; ++it) {
      if (it.value() != 0.0) throw ParameterError("graph weights must be exactly symmetric");
    }
  }
  SimilarityGraph g;
  g.n_nodes = static_cast<int>(weights.rows());
  g.tau = tau.size() == 0 ? Eigen::VectorXd::Ones(g.n_nodes) : std::move(tau);
  if (g.tau.size() != g.n_nodes) throw ParameterError("tau length must match node count");
  g.weights = std::move(weights);
  g.connected = g.n_nodes > 0 && count_components(g.weights) == 1;
  return g;
}

bool SimilarityGraph::operator==(const SimilarityGraph& other) const {
  if (n_nodes != other.n_nodes || k != other.k || k_requested != other.k_requested ||
      escalations != other.escalations || connected != other.connected || tau != other.tau ||
      weights.nonZeros() != other.weights.nonZeros()) {
    return false;
  }
  for (int i = 0; i < weights.outerSize(); ++i) {
    SparseMatrix::InnerIterator a(weights, i);
    SparseMatrix::InnerIterator b(other.weights, i);
    for (; a && b; ++a, ++b) {
      if (a.col() != b.col() || a.value() != b.value()) return false;
    }
    if (a || b) return false;
  }
  return true;
}

SimilarityGraph build_similarity_graph(const EmbeddingMatrix& vectors, GraphBuildOptions options) {
  const int n = static_cast<int>(vectors.rows());
  if (n < 2) throw ParameterError("build_similarity_graph: need at least 2 nodes");
  if (options.k < 1) throw ParameterError("build_similarity_graph: K must be >= 1");
  if (options.escalation_step < 1) throw ParameterError("build_similarity_graph: escalation step must be >= 1");
  const EmbeddingMatrix unit = normalized_rows(vectors);

  SimilarityGraph g;
  g.n_nodes = n;
  g.k_requested = options.k;
  int k = std::min(options.k, n);

  for (;;) {
    const NeighborLists lists = knn(unit, k, options.threads);
    g.tau.resize(n);
    for (int i = 0; i < n; ++i) g.tau[i] = std::max(lists.neighbor_angles(i)[k - 1], kTauFloor);

    // One entry per directed membership, keyed by the unordered pair.
    struct Membership {
      int lo, hi;
      bool from_lo;
    };
    std::vector<Membership> members;
    members.reserve(static_cast<std::size_t>(n) * k);
    for (int i = 0; i < n; ++i) {
      for (int j : lists.neighbors(i)) {
        if (j == i) continue;
        members.push_back({std::min(i, j), std::max(i, j), i < j});
      }
    }
    std::sort(members.begin(), members.end(), [](const Membership& a, const Membership& b) {
      return a.lo != b.lo ? a.lo < b.lo : (a.hi != b.hi ? a.hi < b.hi : a.from_lo < b.from_lo);
    });

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(members.size() * 2);
    for (std::size_t t = 0; t < members.size();) {
      const int lo = members[t].lo;
      const int hi = members[t].hi;
      bool lo_lists_hi = false;
      bool hi_lists_lo = false;
      for (; t < members.size() && members[t].lo == lo && members[t].hi == hi; ++t) {
        (members[t].from_lo ? lo_lists_hi : hi_lists_lo) = true;
      }
      // One canonical angle per unordered pair keeps W exactly symmetric.
      const double theta = clamped_acos(unit.row(lo).dot(unit.row(hi)));
      const double w = kernel_weight(theta, g.tau[lo], g.tau[hi]);
      const double value = ((lo_lists_hi ? w : 0.0) + (hi_lists_lo ? w : 0.0)) / 2.0;
      if (value > 0.0) {
        triplets.emplace_back(lo, hi, value);
        triplets.emplace_back(hi, lo, value);
      }
    }
    g.weights = SparseMatrix(n, n);
    g.weights.setFromTriplets(triplets.begin(), triplets.end());
    g.weights.makeCompressed();
    g.k = k;
    g.connected = count_components(g.weights) == 1;
    if (g.connected) return g;
    if (k == n) throw InternalError("build_similarity_graph: disconnected even with K = n");
    k = std::min(k + options.escalation_step, n);
    ++g.escalations;
  }
}

GraphLaplacian laplacian(const SimilarityGraph& graph) {
  const int n = graph.n_nodes;
  GraphLaplacian out;
  out.degree = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(graph.weights.nonZeros()) + static_cast<std::size_t>(n));
  for (int i = 0; i < graph.weights.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(graph.weights, i); it; ++it) {
      out.degree[i] += it.value();
      triplets.emplace_back(i, static_cast<int>(it.col()), -it.value());
    }
  }
  for (int i = 0; i < n; ++i) {
    if (out.degree[i] != 0.0) triplets.emplace_back(i, i, out.degree[i]);
  }
  out.laplacian = SparseMatrix(n, n);
  out.laplacian.setFromTriplets(triplets.begin(), triplets.end());
  out.laplacian.makeCompressed();
  return out;
}

std::string serialize_graph(const SimilarityGraph& graph) {
  nlohmann::ordered_json j;
  j["format_version"] = kGraphFormatVersion;
  j["n_nodes"] = graph.n_nodes;
  j["K_final"] = graph.k;
  j["K_requested"] = graph.k_requested;
  j["escalations"] = graph.escalations;
  j["tau"] = std::vector<double>(graph.tau.data(), graph.tau.data() + graph.tau.size());
  auto entries = nlohmann::ordered_json::array();
  for (int i = 0; i < graph.weights.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(graph.weights, i); it; ++it) {
      if (it.col() > i) entries.push_back({i, it.col(), it.value()});
    }
  }
  j["entries"] = std::move(entries);
  return j.dump();
}

SimilarityGraph parse_graph(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("graph file is not valid JSON: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kGraphFormatVersion) {
      throw MigrationError("graph format_version " + std::to_string(version) + " is not supported");
    }
    const int n = j.at("n_nodes").get<int>();
    const auto tau_values = j.at("tau").get<std::vector<double>>();
    std::vector<Eigen::Triplet<double>> triplets;
    for (const auto& e : j.at("entries")) {
      const int a = e.at(0).get<int>();
      const int b = e.at(1).get<int>();
      const double w = e.at(2).get<double>();
      if (a < 0 || b < 0 || a >= n || b >= n || a >= b) throw CorruptionError("graph entry out of range");
      triplets.emplace_back(a, b, w);
      triplets.emplace_back(b, a, w);
    }
    SparseMatrix w(n, n);
    w.setFromTriplets(triplets.begin(), triplets.end());
    auto g = SimilarityGraph::from_weights(
        std::move(w), Eigen::Map<const Eigen::VectorXd>(tau_values.data(), static_cast<Eigen::Index>(tau_values.size())));
    g.k = j.at("K_final").get<int>();
    g.k_requested = j.at("K_requested").get<int>();
    g.escalations = j.at("escalations").get<int>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("graph file is malformed: ") + e.what());
  }
}

void save_graph(const SimilarityGraph& graph, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_graph(graph));
}

SimilarityGraph load_graph(const std::filesystem::path& path) { return parse_graph(read_file(path)); }

}  // namespace autokg
