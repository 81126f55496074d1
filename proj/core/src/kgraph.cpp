#include "autokg/kgraph.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <unordered_map>

#include "autokg/corpus.hpp"
#include "autokg/hashing.hpp"
#include "autokg/parallel.hpp"

#ifndef AUTOKG_VERSION
#define AUTOKG_VERSION "0.0.0"
#endif

namespace autokg {
namespace {

constexpr char kMagic[8] = {'A', 'U', 'T', 'O', 'K', 'G', 'K', 'G'};

KeywordAssociation associate_unit(std::string keyword, const Embedding& keyword_embedding,
                                  const EmbeddingMatrix& unit_rows, const SimilarityGraph& graph,
                                  const AssociationParams& params) {
  const int n = static_cast<int>(unit_rows.rows());
  if (keyword.empty()) throw ParameterError("associate_keyword: empty keyword");
  if (params.n1 + params.n2 > n) {
    throw ParameterError("associate_keyword: n1 + n2 = " + std::to_string(params.n1 + params.n2) + " exceeds " +
                         std::to_string(n) + " blocks");
  }
  if (graph.n_nodes != n) throw ParameterError("associate_keyword: graph size differs from block count");
  if (keyword_embedding.size() != unit_rows.cols()) {
    throw ParameterError("associate_keyword: keyword embedding dimension mismatch");
  }
  const double norm = keyword_embedding.norm();
  if (!(norm > 0.0)) throw DegenerateVectorError("associate_keyword: zero embedding for '" + keyword + "'");

  const Eigen::VectorXd angles = angles_to(unit_rows, keyword_embedding / norm);
  const auto near = nearest_by_angle(angles, params.n1);
  LabelAssignment labels;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (int i : near) {
    seen[i] = 1;
    labels.set(i, 1.0);
  }
  // Under ties both orders start from the smallest ids; far seeds skip near ones.
  int far_left = params.n2;
  for (int i : farthest_by_angle(angles, params.n1 + params.n2)) {
    if (far_left == 0) break;
    if (seen[i]) continue;
    labels.set(i, 0.0);
    --far_left;
  }
  const auto solution = laplace_learn(graph, labels, params.laplace);

  KeywordAssociation out;
  out.keyword = std::move(keyword);
  out.embedding = keyword_embedding;
  for (int i = 0; i < n; ++i) {
    if (solution.u[i] >= 0.5 - kMembershipSlack) out.block_ids.push_back(i);
  }
  out.iterations = solution.iterations;
  out.residual = solution.residual;
  if (params.keep_u_values) out.u_values = solution.u;
  return out;
}

template <class E>
[[noreturn]] void rethrow_as(const E& e, const std::string& context) {
  throw E(context + ": " + e.what());
}

// Byte writer / reader, little-endian.
struct Writer {
  std::string out;

  void u8(std::uint8_t v) { out.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) {
    u64(s.size());
    out.append(s);
  }
};

struct Reader {
  std::string_view in;
  std::size_t pos = 0;

  void need(std::size_t k) const {
    if (in.size() - pos < k) throw CorruptionError("kg file: truncated payload");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in[pos++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes() {
    const auto len = u64();
    need(len);
    std::string s(in.substr(pos, len));
    pos += len;
    return s;
  }
};

bool same_weights(const WeightMatrix& a, const WeightMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.nonZeros() != b.nonZeros()) return false;
  for (int i = 0; i < a.outerSize(); ++i) {
    WeightMatrix::InnerIterator x(a, i), y(b, i);
    for (; x && y; ++x, ++y) {
      if (x.col() != y.col() || x.value() != y.value()) return false;
    }
    if (x || y) return false;
  }
  return true;
}

// Integrity checks shared by parse_kg and read_kg_manifest. Returns the
// manifest and leaves the reader positioned after it.
nlohmann::ordered_json open_container(std::string_view bytes, Reader& reader) {
  if (bytes.size() < sizeof kMagic + 4 + 32) throw CorruptionError("kg file: too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CorruptionError("kg file: bad magic");
  reader.in = bytes.substr(0, bytes.size() - 32);
  reader.pos = sizeof kMagic;
  const auto version = reader.u32();
  if (version != static_cast<std::uint32_t>(kKgFormatVersion)) {
    throw MigrationError("kg file: format version " + std::to_string(version) + ", this build reads " +
                         std::to_string(kKgFormatVersion));
  }
  const auto digest = sha256(reader.in);
  if (std::memcmp(digest.data(), bytes.data() + bytes.size() - 32, 32) != 0) {
    throw CorruptionError("kg file: checksum mismatch");
  }
  try {
    return nlohmann::ordered_json::parse(reader.bytes());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("kg file: bad manifest: ") + e.what());
  }
}

}  // namespace

std::string_view engine_version() { return AUTOKG_VERSION; }

void AssociationParams::validate() const {
  if (n1 < 1) throw ParameterError("association: n1 must be >= 1");
  if (n2 < 1) throw ParameterError("association: n2 must be >= 1");
}

bool KeywordAssociation::operator==(const KeywordAssociation& o) const {
  if (keyword != o.keyword || block_ids != o.block_ids || iterations != o.iterations || residual != o.residual) {
    return false;
  }
  if (embedding.size() != o.embedding.size() || embedding != o.embedding) return false;
  if (u_values.has_value() != o.u_values.has_value()) return false;
  return !u_values || (u_values->size() == o.u_values->size() && *u_values == *o.u_values);
}

bool KgManifest::operator==(const KgManifest& o) const {
  return format_version == o.format_version && corpus_hash == o.corpus_hash && n_blocks == o.n_blocks &&
         params.dump() == o.params.dump() && engine_version == o.engine_version;
}

bool KnowledgeGraph::operator==(const KnowledgeGraph& o) const {
  if (keywords != o.keywords || associations != o.associations || !(manifest == o.manifest)) return false;
  if (keyword_embeddings.rows() != o.keyword_embeddings.rows() ||
      keyword_embeddings.cols() != o.keyword_embeddings.cols() || keyword_embeddings != o.keyword_embeddings) {
    return false;
  }
  return same_weights(weights, o.weights);
}

KeywordAssociation associate_keyword(std::string keyword, const Embedding& keyword_embedding,
                                     const EmbeddingMatrix& vectors, const SimilarityGraph& graph,
                                     const AssociationParams& params) {
  params.validate();
  return associate_unit(std::move(keyword), keyword_embedding, normalized_rows(vectors), graph, params);
}

KeywordAssociation associate_keyword(std::string keyword, Embedder& embedder, const EmbeddingMatrix& vectors,
                                     const SimilarityGraph& graph, const AssociationParams& params) {
  if (keyword.empty()) throw ParameterError("associate_keyword: empty keyword");
  const Embedding e = embedder.embed(keyword);
  return associate_keyword(std::move(keyword), e, vectors, graph, params);
}

WeightMatrix intersection_weights(std::span<const KeywordAssociation> associations, int n_blocks) {
  const int m = static_cast<int>(associations.size());
  std::vector<std::vector<int>> index(static_cast<std::size_t>(n_blocks));
  for (int k = 0; k < m; ++k) {
    for (int b : associations[k].block_ids) {
      if (b < 0 || b >= n_blocks) throw ParameterError("association references unknown block " + std::to_string(b));
      index[b].push_back(k);
    }
  }
  std::unordered_map<std::uint64_t, int> counts;
  for (const auto& ks : index) {
    for (std::size_t a = 0; a < ks.size(); ++a) {
      for (std::size_t b = a + 1; b < ks.size(); ++b) {
        const auto lo = static_cast<std::uint64_t>(std::min(ks[a], ks[b]));
        const auto hi = static_cast<std::uint64_t>(std::max(ks[a], ks[b]));
        ++counts[(lo << 32) | hi];
      }
    }
  }
  std::vector<Eigen::Triplet<int>> triplets;
  triplets.reserve(counts.size() * 2);
  for (const auto& [key, count] : counts) {
    const int i = static_cast<int>(key >> 32);
    const int j = static_cast<int>(key & 0xffffffffu);
    triplets.emplace_back(i, j, count);
    triplets.emplace_back(j, i, count);
  }
  WeightMatrix w(m, m);
  w.setFromTriplets(triplets.begin(), triplets.end());
  w.makeCompressed();
  return w;
}

KnowledgeGraph assemble_kg(std::vector<KeywordAssociation> associations, KgManifest manifest) {
  KnowledgeGraph kg;
  const auto m = static_cast<Eigen::Index>(associations.size());
  const Eigen::Index d = m > 0 ? associations.front().embedding.size() : 0;
  kg.keyword_embeddings.resize(m, d);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& a = associations[k];
    if (a.embedding.size() != d) throw ParameterError("assemble_kg: mixed keyword embedding dimensions");
    kg.keywords.push_back(a.keyword);
    kg.keyword_embeddings.row(k) = a.embedding.transpose();
  }
  kg.weights = intersection_weights(associations, manifest.n_blocks);
  kg.associations = std::move(associations);
  kg.manifest = std::move(manifest);
  check_kg_invariants(kg);
  return kg;
}

KnowledgeGraph build_kg(std::span<const std::string> keywords, const EmbeddingMatrix& keyword_embeddings,
                        const EmbeddingMatrix& vectors, const SimilarityGraph& graph,
                        const AssociationParams& params, KgManifest manifest) {
  params.validate();
  if (keywords.empty()) throw ParameterError("build_kg: keyword set is empty");
  if (keyword_embeddings.rows() != static_cast<Eigen::Index>(keywords.size())) {
    throw ParameterError("build_kg: one embedding per keyword required");
  }
  const EmbeddingMatrix unit = normalized_rows(vectors);
  std::vector<KeywordAssociation> associations(keywords.size());
  parallel_for(
      keywords.size(),
      [&](std::size_t k) {
        const std::string context = "keyword '" + keywords[k] + "'";
        try {
          associations[k] = associate_unit(keywords[k], keyword_embeddings.row(static_cast<Eigen::Index>(k)).transpose(),
                                           unit, graph, params);
        } catch (const SolverError& e) {
          throw SolverError(context + ": " + e.what(), e.residual(), e.iterations());
        } catch (const ParameterError& e) {
          rethrow_as(e, context);
        } catch (const DegenerateVectorError& e) {
          rethrow_as(e, context);
        } catch (const NumericError& e) {
          rethrow_as(e, context);
        }
      },
      params.threads);
  manifest.n_blocks = static_cast<int>(vectors.rows());
  return assemble_kg(std::move(associations), std::move(manifest));
}

void check_kg_invariants(const KnowledgeGraph& kg) {
  const auto m = static_cast<Eigen::Index>(kg.keywords.size());
  if (static_cast<Eigen::Index>(kg.associations.size()) != m || kg.keyword_embeddings.rows() != m ||
      kg.weights.rows() != m || kg.weights.cols() != m) {
    throw ConsistencyError("kg: keyword, embedding, association and weight sizes disagree");
  }
  const WeightMatrix transposed = kg.weights.transpose();
  if (!same_weights(kg.weights, WeightMatrix(transposed))) throw ConsistencyError("kg: W^k is not symmetric");
  for (int i = 0; i < kg.weights.outerSize(); ++i) {
    for (WeightMatrix::InnerIterator it(kg.weights, i); it; ++it) {
      if (it.col() == i) throw ConsistencyError("kg: nonzero diagonal at " + std::to_string(i));
      if (it.value() <= 0) throw ConsistencyError("kg: stored weight must be positive");
      const auto bound = std::min(kg.associations[i].block_ids.size(), kg.associations[it.col()].block_ids.size());
      if (static_cast<std::size_t>(it.value()) > bound) {
        throw ConsistencyError("kg: W^k(" + std::to_string(i) + "," + std::to_string(it.col()) +
                               ") exceeds the smaller association size");
      }
    }
  }
}

int KgDiagnostics::degree_below(int threshold) const {
  return static_cast<int>(std::count_if(degrees.begin(), degrees.end(), [&](int d) { return d < threshold; }));
}

nlohmann::ordered_json KgDiagnostics::to_json() const {
  nlohmann::ordered_json j;
  j["nodes"] = nodes;
  j["nnz"] = nnz;
  j["edges"] = edges;
  j["isolated"] = isolated;
  j["min_degree"] = min_degree;
  j["max_degree"] = max_degree;
  j["mean_degree"] = mean_degree;
  j["median_degree"] = median_degree;
  j["mean_association_size"] = mean_association_size;
  j["max_association_size"] = max_association_size;
  return j;
}

KgDiagnostics diagnose(const KnowledgeGraph& kg) {
  KgDiagnostics d;
  d.nodes = kg.size();
  d.nnz = kg.nnz();
  d.edges = static_cast<int>(kg.nnz() / 2);
  for (int i = 0; i < kg.weights.outerSize(); ++i) {
    d.degrees.push_back(static_cast<int>(kg.weights.outerIndexPtr()[i + 1] - kg.weights.outerIndexPtr()[i]));
  }
  if (!d.degrees.empty()) {
    auto sorted = d.degrees;
    std::sort(sorted.begin(), sorted.end());
    d.min_degree = sorted.front();
    d.max_degree = sorted.back();
    d.mean_degree = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    const auto mid = sorted.size() / 2;
    d.median_degree = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    d.isolated = static_cast<int>(std::count(sorted.begin(), sorted.end(), 0));
  }
  double total = 0.0;
  for (const auto& a : kg.associations) {
    total += static_cast<double>(a.block_ids.size());
    d.max_association_size = std::max(d.max_association_size, static_cast<int>(a.block_ids.size()));
  }
  if (!kg.associations.empty()) d.mean_association_size = total / static_cast<double>(kg.associations.size());
  return d;
}

std::string serialize_kg(const KnowledgeGraph& kg) {
  check_kg_invariants(kg);
  const auto m = kg.size();
  const auto d = kg.keyword_embeddings.cols();
  const bool has_u = std::any_of(kg.associations.begin(), kg.associations.end(),
                                 [](const auto& a) { return a.u_values.has_value(); });

  nlohmann::ordered_json manifest;
  manifest["format_version"] = kKgFormatVersion;
  manifest["corpus_hash"] = kg.manifest.corpus_hash;
  manifest["n_blocks"] = kg.manifest.n_blocks;
  manifest["engine_version"] = kg.manifest.engine_version;
  manifest["M"] = m;
  manifest["nnz"] = kg.nnz();
  manifest["dimension"] = d;
  manifest["has_u_values"] = has_u;
  manifest["params"] = kg.manifest.params;

  Writer w;
  w.out.append(kMagic, sizeof kMagic);
  w.u32(kKgFormatVersion);
  w.bytes(manifest.dump());
  for (const auto& k : kg.keywords) w.bytes(k);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) w.f64(kg.keyword_embeddings(r, c));
  }
  w.u64(static_cast<std::uint64_t>(kg.nnz() / 2));
  for (int i = 0; i < kg.weights.outerSize(); ++i) {
    for (WeightMatrix::InnerIterator it(kg.weights, i); it; ++it) {
      if (it.col() <= i) continue;
      w.u32(static_cast<std::uint32_t>(i));
      w.u32(static_cast<std::uint32_t>(it.col()));
      w.u32(static_cast<std::uint32_t>(it.value()));
    }
  }
  for (const auto& a : kg.associations) {
    w.u32(static_cast<std::uint32_t>(a.iterations));
    w.f64(a.residual);
    w.u64(a.block_ids.size());
    for (int b : a.block_ids) w.u32(static_cast<std::uint32_t>(b));
    if (has_u) {
      w.u8(a.u_values ? 1 : 0);
      if (a.u_values) {
        w.u64(static_cast<std::uint64_t>(a.u_values->size()));
        for (double v : *a.u_values) w.f64(v);
      }
    }
  }
  const auto digest = sha256(w.out);
  w.out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return w.out;
}

KnowledgeGraph parse_kg(std::string_view bytes) {
  Reader r;
  const auto manifest = open_container(bytes, r);
  KnowledgeGraph kg;
  Eigen::Index m = 0, d = 0;
  bool has_u = false;
  try {
    kg.manifest.format_version = manifest.at("format_version").get<int>();
    kg.manifest.corpus_hash = manifest.at("corpus_hash").get<std::string>();
    kg.manifest.n_blocks = manifest.at("n_blocks").get<int>();
    kg.manifest.engine_version = manifest.at("engine_version").get<std::string>();
    kg.manifest.params = manifest.at("params");
    m = manifest.at("M").get<Eigen::Index>();
    d = manifest.at("dimension").get<Eigen::Index>();
    has_u = manifest.at("has_u_values").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("kg file: bad manifest: ") + e.what());
  }
  if (m < 0 || d < 0 || kg.manifest.n_blocks < 0) throw CorruptionError("kg file: negative size in manifest");
  r.need(static_cast<std::size_t>(m) * 8);
  for (Eigen::Index k = 0; k < m; ++k) kg.keywords.push_back(r.bytes());
  r.need(static_cast<std::size_t>(m * d) * 8);
  kg.keyword_embeddings.resize(m, d);
  for (Eigen::Index row = 0; row < m; ++row) {
    for (Eigen::Index c = 0; c < d; ++c) kg.keyword_embeddings(row, c) = r.f64();
  }
  const auto pairs = r.u64();
  r.need(pairs * 12);
  std::vector<Eigen::Triplet<int>> triplets;
  triplets.reserve(pairs * 2);
  for (std::uint64_t p = 0; p < pairs; ++p) {
    const auto i = r.u32(), j = r.u32(), v = r.u32();
    if (i >= static_cast<std::uint64_t>(m) || j >= static_cast<std::uint64_t>(m) || i >= j || v == 0) {
      throw CorruptionError("kg file: bad weight entry");
    }
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), static_cast<int>(v));
    triplets.emplace_back(static_cast<int>(j), static_cast<int>(i), static_cast<int>(v));
  }
  kg.weights.resize(m, m);
  kg.weights.setFromTriplets(triplets.begin(), triplets.end());
  kg.weights.makeCompressed();
  if (kg.weights.nonZeros() != static_cast<Eigen::Index>(pairs * 2)) {
    throw CorruptionError("kg file: repeated weight entries");
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    KeywordAssociation a;
    a.keyword = kg.keywords[k];
    a.embedding = kg.keyword_embeddings.row(k).transpose();
    a.iterations = static_cast<int>(r.u32());
    a.residual = r.f64();
    const auto count = r.u64();
    r.need(count * 4);
    for (std::uint64_t t = 0; t < count; ++t) {
      const auto b = r.u32();
      if (b >= static_cast<std::uint32_t>(kg.manifest.n_blocks)) throw CorruptionError("kg file: bad block id");
      a.block_ids.push_back(static_cast<int>(b));
    }
    if (has_u && r.u8() == 1) {
      const auto len = r.u64();
      r.need(len * 8);
      Eigen::VectorXd u(static_cast<Eigen::Index>(len));
      for (std::uint64_t t = 0; t < len; ++t) u[static_cast<Eigen::Index>(t)] = r.f64();
      a.u_values = std::move(u);
    }
    kg.associations.push_back(std::move(a));
  }
  if (r.pos != r.in.size()) throw CorruptionError("kg file: trailing bytes");
  try {
    check_kg_invariants(kg);
  } catch (const ConsistencyError& e) {
    throw CorruptionError(std::string("kg file: ") + e.what());
  }
  return kg;
}

void save_kg(const KnowledgeGraph& kg, const std::filesystem::path& path) { write_file_atomic(path, serialize_kg(kg)); }

KnowledgeGraph load_kg(const std::filesystem::path& path) { return parse_kg(read_file(path)); }

nlohmann::ordered_json read_kg_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader r;
  return open_container(bytes, r);
}

}  // namespace autokg
