#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace autokg {

using Embedding = Eigen::VectorXd;
// One embedding per row.
using EmbeddingMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kDefaultEmbeddingDim = 1536;

enum class ProviderKind { remote, offline_hash };

std::string_view to_string(ProviderKind kind);
ProviderKind parse_provider_kind(std::string_view name);

struct EmbeddingProviderConfig {
  ProviderKind kind = ProviderKind::offline_hash;
  std::string endpoint_url;  // remote only, e.g. https://api.openai.com/v1/embeddings
  std::string model_name = "offline-hash-3gram";
  int dimension = kDefaultEmbeddingDim;
  int batch_size = 64;
  int max_retries = 3;
  int in_flight_limit = 4;
  int timeout_seconds = 60;
  std::string api_key_env = "AUTOKG_API_KEY";

  void validate() const;
};

// Character 3-gram feature hashing with signed buckets, L2-normalized. The
// text is framed with boundary markers so short strings still produce
// n-grams. Never returns the zero vector.
Embedding offline_hash_embed(std::string_view text, int dimension);

EmbeddingMatrix stack_rows(std::span<const Embedding> rows);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Output is order-aligned with `texts`.
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) = 0;
  virtual const EmbeddingProviderConfig& config() const = 0;
};

class OfflineHashProvider final : public EmbeddingProvider {
 public:
  explicit OfflineHashProvider(EmbeddingProviderConfig config);
  std::vector<Embedding> embed(std::span<const std::string> texts) override;
  const EmbeddingProviderConfig& config() const override { return config_; }

 private:
  EmbeddingProviderConfig config_;
};

// OpenAI-embeddings compatible HTTP client: POST {"model", "input": [...]},
// reply {"data": [{"index", "embedding"}]}. Batches of `batch_size` are sent
// with at most `in_flight_limit` outstanding.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(EmbeddingProviderConfig config);
  std::vector<Embedding> embed(std::span<const std::string> texts) override;
  const EmbeddingProviderConfig& config() const override { return config_; }

 private:
  std::vector<Embedding> send_batch(std::span<const std::string> texts);

  EmbeddingProviderConfig config_;
  std::string api_key_;
};

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingProviderConfig& config);

// Content-addressed vector cache. Reads are concurrent; inserts are
// serialized and, when a file is attached, appended as JSON lines
// {"provider", "model_name", "dimension", "content_hash", "vector"}.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path file) { open(std::move(file)); }

  // Loads existing records from `file` and appends new ones to it.
  void open(std::filesystem::path file);

  std::optional<Embedding> lookup(const std::string& key) const;
  void insert(const std::string& key, const Embedding& vector, const EmbeddingProviderConfig& config,
              const std::string& content_hash);
  std::size_t size() const;

  static std::string make_key(const EmbeddingProviderConfig& config, const std::string& content_hash);

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Embedding> entries_;
  std::optional<std::filesystem::path> file_;
};

struct EmbedderStats {
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

// Provider plus cache: the entry point the rest of the engine uses.
class Embedder {
 public:
  explicit Embedder(EmbeddingProviderConfig config,
                    std::optional<std::filesystem::path> cache_file = std::nullopt);
  Embedder(std::unique_ptr<EmbeddingProvider> provider,
           std::optional<std::filesystem::path> cache_file = std::nullopt);

  std::vector<Embedding> embed_batch(std::span<const std::string> texts);
  Embedding embed(const std::string& text);
  EmbeddingMatrix embed_matrix(std::span<const std::string> texts);

  const EmbeddingProviderConfig& config() const { return provider_->config(); }
  int dimension() const { return provider_->config().dimension; }
  EmbedderStats stats() const;

 private:
  std::unique_ptr<EmbeddingProvider> provider_;
  EmbeddingCache cache_;
  mutable std::mutex stats_mutex_;
  EmbedderStats stats_;
};

}  // namespace autokg
