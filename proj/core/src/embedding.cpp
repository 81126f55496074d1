#include "autokg/embedding.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "autokg/error.hpp"
#include "autokg/hashing.hpp"
#include "autokg/parallel.hpp"

namespace autokg {
namespace {

constexpr char kFrameBegin = '\x02';
constexpr char kFrameEnd = '\x03';

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint url lacks a scheme: " + url);
  const auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/"};
  return {url.substr(0, path_begin), url.substr(path_begin)};
}

std::string read_api_key(const std::string& env_name) {
  const char* v = std::getenv(env_name.c_str());
  return v == nullptr ? std::string() : std::string(v);
}

}  // namespace

std::string_view to_string(ProviderKind kind) {
  return kind == ProviderKind::remote ? "remote" : "offline-hash";
}

ProviderKind parse_provider_kind(std::string_view name) {
  if (name == "remote") return ProviderKind::remote;
  if (name == "offline-hash") return ProviderKind::offline_hash;
  throw ConfigError("unknown embedding provider kind '" + std::string(name) + "'");
}

void EmbeddingProviderConfig::validate() const {
  if (dimension < 2) throw ConfigError("embedding dimension must be >= 2");
  if (batch_size < 1) throw ConfigError("embedding batch_size must be >= 1");
  if (max_retries < 0) throw ConfigError("embedding max_retries must be >= 0");
  if (in_flight_limit < 1) throw ConfigError("embedding in_flight_limit must be >= 1");
  if (model_name.empty()) throw ConfigError("embedding model_name must be set");
  if (kind == ProviderKind::remote && endpoint_url.empty()) {
    throw ConfigError("remote embedding provider needs endpoint_url");
  }
}

Embedding offline_hash_embed(std::string_view text, int dimension) {
  if (dimension < 2) throw ParameterError("offline_hash_embed: dimension must be >= 2");
  std::string framed;
  framed.reserve(text.size() + 3);
  framed.push_back(kFrameBegin);
  framed.append(text);
  framed.push_back(kFrameEnd);
  while (framed.size() < 3) framed.push_back(kFrameEnd);

  const auto d = static_cast<std::uint64_t>(dimension);
  Embedding v = Embedding::Zero(dimension);
  const std::string_view f(framed);
  for (std::size_t i = 0; i + 3 <= f.size(); ++i) {
    const std::uint64_t h = fnv1a64(f.substr(i, 3));
    const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    v[static_cast<Eigen::Index>(h % d)] += sign;
  }
  const double norm = v.norm();
  if (norm == 0.0) {
    // Signed buckets cancelled out exactly; fall back to a basis vector.
    v.setZero();
    v[static_cast<Eigen::Index>(fnv1a64(text) % d)] = 1.0;
    return v;
  }
  return v / norm;
}

EmbeddingMatrix stack_rows(std::span<const Embedding> rows) {
  if (rows.empty()) return {};
  EmbeddingMatrix m(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw ParameterError("stack_rows: ragged embeddings");
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return m;
}

OfflineHashProvider::OfflineHashProvider(EmbeddingProviderConfig config) : config_(std::move(config)) {
  config_.validate();
}

std::vector<Embedding> OfflineHashProvider::embed(std::span<const std::string> texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(offline_hash_embed(t, config_.dimension));
  return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(EmbeddingProviderConfig config)
    : config_(std::move(config)), api_key_(read_api_key(config_.api_key_env)) {
  config_.validate();
}

std::vector<Embedding> RemoteEmbeddingProvider::send_batch(std::span<const std::string> texts) {
  const auto url = split_url(config_.endpoint_url);
  nlohmann::json body;
  body["model"] = config_.model_name;
  body["input"] = std::vector<std::string>(texts.begin(), texts.end());
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_failure;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50 << std::min(attempt, 6)));
    }
    httplib::Client client(url.origin);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    auto res = client.Post(url.path, headers, payload, "application/json");
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProviderError("embedding endpoint returned HTTP " + std::to_string(res->status) + ": " +
                          res->body.substr(0, 200));
    }
    std::vector<Embedding> out(texts.size());
    try {
      const auto reply = nlohmann::json::parse(res->body);
      const auto& data = reply.at("data");
      if (data.size() != texts.size()) {
        throw ProtocolError("embedding reply has " + std::to_string(data.size()) +
                            " items for " + std::to_string(texts.size()) + " inputs");
      }
      for (const auto& item : data) {
        const auto index = item.at("index").get<std::size_t>();
        const auto values = item.at("embedding").get<std::vector<double>>();
        if (index >= out.size() || out[index].size() != 0) {
          throw ProtocolError("embedding reply has a bad or repeated index");
        }
        if (static_cast<int>(values.size()) != config_.dimension) {
          throw ProtocolError("embedding reply has dimension " + std::to_string(values.size()) +
                              ", configured " + std::to_string(config_.dimension));
        }
        out[index] = Eigen::Map<const Embedding>(values.data(), config_.dimension);
        if (!out[index].allFinite()) throw ProtocolError("embedding reply has non-finite values");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("malformed embedding reply: ") + e.what());
    }
    return out;
  }
  throw ProviderError("embedding request failed after " + std::to_string(config_.max_retries + 1) +
                          " attempts (" + last_failure + ")",
                      {}, true);
}

std::vector<Embedding> RemoteEmbeddingProvider::embed(std::span<const std::string> texts) {
  const std::size_t batch = static_cast<std::size_t>(config_.batch_size);
  const std::size_t batches = (texts.size() + batch - 1) / batch;
  std::vector<Embedding> out(texts.size());
  std::vector<std::string> failures(batches);
  std::mutex protocol_mutex;
  std::exception_ptr protocol_failure;

  parallel_for(
      batches,
      [&](std::size_t b) {
        const std::size_t begin = b * batch;
        const std::size_t len = std::min(batch, texts.size() - begin);
        try {
          auto part = send_batch(texts.subspan(begin, len));
          for (std::size_t i = 0; i < len; ++i) out[begin + i] = std::move(part[i]);
        } catch (const ProviderError& e) {
          failures[b] = e.what();
        } catch (...) {
          std::lock_guard lock(protocol_mutex);
          if (!protocol_failure) protocol_failure = std::current_exception();
        }
      },
      static_cast<unsigned>(config_.in_flight_limit));

  if (protocol_failure) std::rethrow_exception(protocol_failure);
  std::vector<std::size_t> failed;
  std::string first;
  for (std::size_t b = 0; b < batches; ++b) {
    if (failures[b].empty()) continue;
    if (first.empty()) first = failures[b];
    const std::size_t begin = b * batch;
    for (std::size_t i = begin; i < std::min(begin + batch, texts.size()); ++i) failed.push_back(i);
  }
  if (!failed.empty()) {
    throw ProviderError("embedding failed for " + std::to_string(failed.size()) + " texts: " + first,
                        std::move(failed));
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingProviderConfig& config) {
  if (config.kind == ProviderKind::remote) return std::make_unique<RemoteEmbeddingProvider>(config);
  return std::make_unique<OfflineHashProvider>(config);
}

void EmbeddingCache::open(std::filesystem::path file) {
  std::unique_lock lock(mutex_);
  file_ = std::move(file);
  std::ifstream in(*file_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      continue;  // torn append from an interrupted run
    }
    EmbeddingProviderConfig key_cfg;
    key_cfg.kind = parse_provider_kind(j.at("provider").get<std::string>());
    key_cfg.model_name = j.at("model_name").get<std::string>();
    key_cfg.dimension = j.at("dimension").get<int>();
    const auto values = j.at("vector").get<std::vector<double>>();
    if (static_cast<int>(values.size()) != key_cfg.dimension) continue;
    entries_[make_key(key_cfg, j.at("content_hash").get<std::string>())] =
        Eigen::Map<const Embedding>(values.data(), key_cfg.dimension);
  }
}

std::string EmbeddingCache::make_key(const EmbeddingProviderConfig& config,
                                     const std::string& content_hash) {
  std::string key(to_string(config.kind));
  key += '\x1f';
  key += config.model_name;
  key += '\x1f';
  key += std::to_string(config.dimension);
  key += '\x1f';
  key += content_hash;
  return key;
}

std::optional<Embedding> EmbeddingCache::lookup(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::insert(const std::string& key, const Embedding& vector,
                            const EmbeddingProviderConfig& config, const std::string& content_hash) {
  std::unique_lock lock(mutex_);
  if (!entries_.emplace(key, vector).second) return;
  if (!file_) return;
  nlohmann::ordered_json j;
  j["provider"] = to_string(config.kind);
  j["model_name"] = config.model_name;
  j["dimension"] = config.dimension;
  j["content_hash"] = content_hash;
  j["vector"] = std::vector<double>(vector.data(), vector.data() + vector.size());
  std::ofstream out(*file_, std::ios::app);
  if (!out) throw IoError("cannot append to embedding cache '" + file_->string() + "'");
  out << j.dump() << '\n';
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

Embedder::Embedder(EmbeddingProviderConfig config, std::optional<std::filesystem::path> cache_file)
    : Embedder(make_embedding_provider(config), std::move(cache_file)) {}

Embedder::Embedder(std::unique_ptr<EmbeddingProvider> provider,
                   std::optional<std::filesystem::path> cache_file)
    : provider_(std::move(provider)) {
  if (!provider_) throw ParameterError("Embedder: null provider");
  if (cache_file) cache_.open(*cache_file);
}

std::vector<Embedding> Embedder::embed_batch(std::span<const std::string> texts) {
  const auto& cfg = provider_->config();
  std::vector<Embedding> out(texts.size());
  std::vector<std::string> hashes(texts.size());
  std::vector<std::string> miss_texts;
  std::vector<std::vector<std::size_t>> miss_slots;
  std::unordered_map<std::string, std::size_t> miss_index;
  std::size_t hits = 0;

  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) throw ParameterError("embed_batch: empty text at index " + std::to_string(i));
    hashes[i] = sha256_hex(texts[i]);
    if (auto cached = cache_.lookup(EmbeddingCache::make_key(cfg, hashes[i]))) {
      out[i] = std::move(*cached);
      ++hits;
      continue;
    }
    auto [it, fresh] = miss_index.emplace(hashes[i], miss_texts.size());
    if (fresh) {
      miss_texts.push_back(texts[i]);
      miss_slots.emplace_back();
    }
    miss_slots[it->second].push_back(i);
  }

  if (!miss_texts.empty()) {
    std::vector<Embedding> fresh;
    try {
      fresh = provider_->embed(miss_texts);
    } catch (const ProviderError& e) {
      std::vector<std::size_t> failed;
      for (auto m : e.failed_indices()) {
        for (auto slot : miss_slots.at(m)) failed.push_back(slot);
      }
      std::sort(failed.begin(), failed.end());
      throw ProviderError(e.what(), std::move(failed), e.transient());
    }
    if (fresh.size() != miss_texts.size()) throw ProtocolError("provider returned the wrong count");
    for (std::size_t m = 0; m < fresh.size(); ++m) {
      if (fresh[m].size() != cfg.dimension) {
        throw ProtocolError("provider returned dimension " + std::to_string(fresh[m].size()) +
                            ", configured " + std::to_string(cfg.dimension));
      }
      const auto first = miss_slots[m].front();
      cache_.insert(EmbeddingCache::make_key(cfg, hashes[first]), fresh[m], cfg, hashes[first]);
      for (auto slot : miss_slots[m]) out[slot] = fresh[m];
    }
  }

  std::lock_guard lock(stats_mutex_);
  stats_.cache_hits += hits;
  stats_.cache_misses += texts.size() - hits;
  return out;
}

Embedding Embedder::embed(const std::string& text) {
  return embed_batch(std::span<const std::string>(&text, 1)).front();
}

EmbeddingMatrix Embedder::embed_matrix(std::span<const std::string> texts) {
  const auto rows = embed_batch(texts);
  return stack_rows(rows);
}

EmbedderStats Embedder::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

}  // namespace autokg
