#include "autokg_tools/config.hpp"

#include <autokg/corpus.hpp>
#include <autokg/error.hpp>
#include <set>

namespace autokg::cli {
namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

}  // namespace

void EngineConfig::validate() const {
  if (T < 1) throw ConfigError("T must be >= 1");
  find_tokenizer(tokenizer);
  embedding.validate();
  llm.validate();
  if (K < 1) throw ConfigError("K must be >= 1");
  extraction.validate();
  try {
    association.validate();
    search.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (token_limit < 1) throw ConfigError("token_limit must be >= 1");
  if (max_response_tokens < 1) throw ConfigError("max_response_tokens must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
}

void EngineConfig::validate_for_build() const {
  validate();
  if (corpus.empty()) throw ConfigError("no corpus paths configured");
  for (const auto& p : corpus) {
    if (!std::filesystem::exists(p)) throw ConfigError("corpus path does not exist: " + p.string());
  }
}

nlohmann::ordered_json EngineConfig::manifest_params() const {
  nlohmann::ordered_json j;
  j["T"] = T;
  j["tokenizer"] = tokenizer;
  j["embedding"] = {{"provider", to_string(embedding.kind)},
                    {"model", embedding.model_name},
                    {"dimension", embedding.dimension}};
  j["llm"] = {{"provider", to_string(llm.kind)}, {"model", llm.model_name}, {"temperature", llm.temperature}};
  j["K"] = K;
  j["extraction"] = autokg::to_json(extraction);
  j["association"] = {{"n1", association.n1},
                      {"n2", association.n2},
                      {"tol", association.laplace.tol},
                      {"store_u_values", association.keep_u_values}};
  j["search"] = search.to_json();
  j["seed"] = seed;
  return j;
}

nlohmann::ordered_json EngineConfig::to_json() const {
  nlohmann::ordered_json j;
  auto paths = nlohmann::ordered_json::array();
  for (const auto& p : corpus) paths.push_back(p.string());
  j["corpus"] = std::move(paths);
  j["T"] = T;
  j["tokenizer"] = tokenizer;
  j["embedding"] = {{"provider", to_string(embedding.kind)},
                    {"endpoint_url", embedding.endpoint_url},
                    {"model", embedding.model_name},
                    {"dimension", embedding.dimension},
                    {"batch_size", embedding.batch_size},
                    {"max_retries", embedding.max_retries},
                    {"in_flight", embedding.in_flight_limit},
                    {"timeout_seconds", embedding.timeout_seconds},
                    {"api_key_env", embedding.api_key_env},
                    {"cache", embedding_cache}};
  j["llm"] = {{"provider", to_string(llm.kind)},
              {"endpoint_url", llm.endpoint_url},
              {"model", llm.model_name},
              {"temperature", llm.temperature},
              {"max_retries", llm.max_retries},
              {"in_flight", llm.in_flight_limit},
              {"timeout_seconds", llm.timeout_seconds},
              {"api_key_env", llm.api_key_env},
              {"fixtures", llm.fixtures.string()}};
  j["K"] = K;
  auto ex = autokg::to_json(extraction);
  ex.erase("seed");
  j["extraction"] = std::move(ex);
  j["association"] = {{"n1", association.n1},
                      {"n2", association.n2},
                      {"tol", association.laplace.tol},
                      {"store_u_values", association.keep_u_values}};
  j["search"] = search.to_json();
  j["token_limit"] = token_limit;
  j["max_response_tokens"] = max_response_tokens;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  j["threads"] = threads;
  return j;
}

EngineConfig EngineConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  EngineConfig c;
  reject_unknown(j,
                 {"corpus", "T", "tokenizer", "embedding", "llm", "K", "extraction", "association", "search",
                  "token_limit", "max_response_tokens", "seed", "output_dir", "threads"},
                 "config");
  try {
    if (j.contains("corpus")) {
      const auto& corpus = j.at("corpus");
      if (corpus.is_string()) {
        c.corpus.push_back(resolve(corpus.get<std::string>(), base_dir));
      } else {
        for (const auto& p : corpus) c.corpus.push_back(resolve(p.get<std::string>(), base_dir));
      }
    }
    c.T = j.value("T", c.T);
    c.tokenizer = j.value("tokenizer", c.tokenizer);
    if (j.contains("embedding")) {
      const auto& e = j.at("embedding");
      reject_unknown(e,
                     {"provider", "endpoint_url", "model", "dimension", "batch_size", "max_retries", "in_flight",
                      "timeout_seconds", "api_key_env", "cache"},
                     "embedding");
      c.embedding.kind = parse_provider_kind(e.value("provider", std::string(to_string(c.embedding.kind))));
      c.embedding.endpoint_url = e.value("endpoint_url", c.embedding.endpoint_url);
      c.embedding.model_name = e.value("model", c.embedding.model_name);
      c.embedding.dimension = e.value("dimension", c.embedding.dimension);
      c.embedding.batch_size = e.value("batch_size", c.embedding.batch_size);
      c.embedding.max_retries = e.value("max_retries", c.embedding.max_retries);
      c.embedding.in_flight_limit = e.value("in_flight", c.embedding.in_flight_limit);
      c.embedding.timeout_seconds = e.value("timeout_seconds", c.embedding.timeout_seconds);
      c.embedding.api_key_env = e.value("api_key_env", c.embedding.api_key_env);
      c.embedding_cache = e.value("cache", c.embedding_cache);
    }
    if (j.contains("llm")) {
      const auto& l = j.at("llm");
      reject_unknown(l,
                     {"provider", "endpoint_url", "model", "temperature", "max_retries", "in_flight",
                      "timeout_seconds", "api_key_env", "fixtures"},
                     "llm");
      c.llm.kind = parse_chat_provider_kind(l.value("provider", std::string(to_string(c.llm.kind))));
      c.llm.endpoint_url = l.value("endpoint_url", c.llm.endpoint_url);
      c.llm.model_name = l.value("model", c.llm.model_name);
      c.llm.temperature = l.value("temperature", c.llm.temperature);
      c.llm.max_retries = l.value("max_retries", c.llm.max_retries);
      c.llm.in_flight_limit = l.value("in_flight", c.llm.in_flight_limit);
      c.llm.timeout_seconds = l.value("timeout_seconds", c.llm.timeout_seconds);
      c.llm.api_key_env = l.value("api_key_env", c.llm.api_key_env);
      if (l.contains("fixtures")) c.llm.fixtures = resolve(l.at("fixtures").get<std::string>(), base_dir);
    }
    c.K = j.value("K", c.K);
    if (j.contains("extraction")) {
      reject_unknown(j.at("extraction"),
                     {"n", "c", "l1", "l2", "m", "main_topic", "language", "kmeans_iterations", "kmeans_metric",
                      "dense_eigen_limit", "sequential", "in_flight", "context_tokens"},
                     "extraction");
      c.extraction = extraction_params_from_json(j.at("extraction"));
    }
    if (j.contains("association")) {
      const auto& a = j.at("association");
      reject_unknown(a, {"n1", "n2", "tol", "store_u_values"}, "association");
      c.association.n1 = a.value("n1", c.association.n1);
      c.association.n2 = a.value("n2", c.association.n2);
      c.association.laplace.tol = a.value("tol", c.association.laplace.tol);
      c.association.keep_u_values = a.value("store_u_values", c.association.keep_u_values);
    }
    if (j.contains("search")) {
      reject_unknown(j.at("search"), {"s_t0", "s_k1", "s_t1", "s_k2", "s_t2"}, "search");
      c.search = SearchParams::from_json(j.at("search"));
    }
    c.token_limit = j.value("token_limit", c.token_limit);
    c.max_response_tokens = j.value("max_response_tokens", c.max_response_tokens);
    c.seed = j.value("seed", c.seed);
    c.output_dir = resolve(j.value("output_dir", c.output_dir.string()), base_dir);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.extraction.seed = c.seed;
  c.association.threads = c.threads;
  c.validate();
  return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& file) {
  std::string text;
  try {
    text = read_file(file);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + file.string() + ": " + e.what());
  }
  return from_json(j, file.parent_path());
}

}  // namespace autokg::cli
