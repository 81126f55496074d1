#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "autokg/error.hpp"

namespace autokg {

inline constexpr std::string_view kDefaultTokenizer = "whitespace";
inline constexpr int kDefaultBlockTokens = 200;

// Counts tokens in a string. Implementations must be deterministic and
// thread-safe.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::size_t count(std::string_view text) const = 0;
};

// Whitespace-separated word count.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::size_t count(std::string_view text) const override;
};

// Registry lookup; throws ConfigError for unknown ids. "whitespace" is always
// registered.
std::shared_ptr<const Tokenizer> find_tokenizer(std::string_view tokenizer_id);
void register_tokenizer(std::string tokenizer_id, std::shared_ptr<const Tokenizer> tokenizer);

std::size_t count_tokens(std::string_view text, std::string_view tokenizer_id = kDefaultTokenizer);

struct TextBlock {
  int id = 0;
  std::string text;
  std::size_t token_count = 0;
  std::string source;

  bool operator==(const TextBlock&) const = default;
};

struct Corpus {
  std::vector<TextBlock> blocks;
  std::string tokenizer_id{kDefaultTokenizer};
  int max_tokens = kDefaultBlockTokens;

  std::size_t size() const noexcept { return blocks.size(); }
  const TextBlock& operator[](std::size_t i) const { return blocks[i]; }

  std::vector<std::string> texts() const;

  // SHA-256 over the JSON-lines serialization.
  std::string content_hash() const;

  bool operator==(const Corpus&) const = default;
};

struct Document {
  std::string source;
  std::string text;
};

// Splits documents into blocks of at most `max_tokens` tokens. Packing is
// greedy and boundary-first: whole paragraphs, then sentences, then single
// words. Documents with no tokens are skipped and reported in `warnings`.
Corpus chunk(const std::vector<Document>& documents, int max_tokens,
             std::string_view tokenizer_id = kDefaultTokenizer, Warnings* warnings = nullptr);

// Plain text files become one document each (source = path as given);
// `.jsonl` files hold one {"source", "text"} record per line.
std::vector<Document> read_documents(const std::filesystem::path& path);

// One {"id", "source", "token_count", "text"} object per line.
std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(std::string_view jsonl, std::string_view tokenizer_id = kDefaultTokenizer,
                    int max_tokens = kDefaultBlockTokens);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path,
                   std::string_view tokenizer_id = kDefaultTokenizer,
                   int max_tokens = kDefaultBlockTokens);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace autokg
