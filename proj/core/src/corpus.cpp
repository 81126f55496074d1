#include "autokg/corpus.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <shared_mutex>
#include <sstream>

#include "autokg/hashing.hpp"

namespace autokg {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

struct TokenizerRegistry {
  std::shared_mutex mutex;
  std::map<std::string, std::shared_ptr<const Tokenizer>, std::less<>> entries;

  TokenizerRegistry() {
    entries.emplace(std::string(kDefaultTokenizer), std::make_shared<WhitespaceTokenizer>());
  }
};

TokenizerRegistry& registry() {
  static TokenizerRegistry r;
  return r;
}

// A whitespace-delimited word plus the boundary that follows it.
struct Word {
  std::size_t begin;
  std::size_t end;
  bool sentence_end;
  bool paragraph_end;
};

bool ends_sentence(std::string_view word) {
  std::size_t n = word.size();
  while (n > 0 && std::string_view("\"')]}").find(word[n - 1]) != std::string_view::npos) --n;
  return n > 0 && (word[n - 1] == '.' || word[n - 1] == '!' || word[n - 1] == '?');
}

std::vector<Word> split_words(std::string_view text) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    const std::size_t begin = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    const std::size_t end = i;
    int newlines = 0;
    std::size_t j = i;
    while (j < text.size() && is_space(text[j])) {
      if (text[j] == '\n') ++newlines;
      ++j;
    }
    const bool last = j >= text.size();
    const bool paragraph = last || newlines >= 2;
    words.push_back({begin, end, paragraph || ends_sentence(text.substr(begin, end - begin)),
                     paragraph});
  }
  return words;
}

class Packer {
 public:
  Packer(std::string_view text, const std::vector<Word>& words, const Tokenizer& tokenizer,
         std::size_t limit)
      : text_(text), words_(words), tokenizer_(tokenizer), limit_(limit) {}

  std::vector<std::string> run() {
    pack(0, words_.size(), 0);
    flush();
    return std::move(out_);
  }

 private:
  std::string_view span_text(std::size_t a, std::size_t b) const {
    return text_.substr(words_[a].begin, words_[b - 1].end - words_[a].begin);
  }

  bool fits(std::size_t a, std::size_t b) const { return tokenizer_.count(span_text(a, b)) <= limit_; }

  bool boundary(std::size_t w, int level) const {
    if (level == 0) return words_[w].paragraph_end;
    if (level == 1) return words_[w].sentence_end;
    return true;
  }

  void flush() {
    if (cur_begin_ < cur_end_) out_.emplace_back(span_text(cur_begin_, cur_end_));
    cur_begin_ = cur_end_ = 0;
  }

  void place(std::size_t a, std::size_t b, int level) {
    if (fits(a, b)) {
      cur_begin_ = a;
      cur_end_ = b;
    } else if (level < 2) {
      pack(a, b, level + 1);
    } else {
      throw ConfigError("chunk: a single word exceeds the block token limit under tokenizer");
    }
  }

  void pack(std::size_t a, std::size_t b, int level) {
    std::size_t seg = a;
    while (seg < b) {
      std::size_t end = seg;
      while (end < b && !boundary(end, level)) ++end;
      end = std::min(end + 1, b);
      if (cur_begin_ == cur_end_) {
        place(seg, end, level);
      } else if (fits(cur_begin_, end)) {
        cur_end_ = end;
      } else {
        flush();
        place(seg, end, level);
      }
      seg = end;
    }
  }

  std::string_view text_;
  const std::vector<Word>& words_;
  const Tokenizer& tokenizer_;
  std::size_t limit_;
  std::size_t cur_begin_ = 0;
  std::size_t cur_end_ = 0;
  std::vector<std::string> out_;
};

}  // namespace

std::size_t WhitespaceTokenizer::count(std::string_view text) const {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

std::shared_ptr<const Tokenizer> find_tokenizer(std::string_view tokenizer_id) {
  auto& r = registry();
  std::shared_lock lock(r.mutex);
  auto it = r.entries.find(tokenizer_id);
  if (it == r.entries.end()) {
    throw ConfigError("unknown tokenizer '" + std::string(tokenizer_id) + "'");
  }
  return it->second;
}

void register_tokenizer(std::string tokenizer_id, std::shared_ptr<const Tokenizer> tokenizer) {
  if (!tokenizer) throw ParameterError("register_tokenizer: null tokenizer");
  auto& r = registry();
  std::unique_lock lock(r.mutex);
  r.entries[std::move(tokenizer_id)] = std::move(tokenizer);
}

std::size_t count_tokens(std::string_view text, std::string_view tokenizer_id) {
  return find_tokenizer(tokenizer_id)->count(text);
}

std::vector<std::string> Corpus::texts() const {
  std::vector<std::string> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(b.text);
  return out;
}

std::string Corpus::content_hash() const { return sha256_hex(serialize_corpus(*this)); }

Corpus chunk(const std::vector<Document>& documents, int max_tokens, std::string_view tokenizer_id,
             Warnings* warnings) {
  if (max_tokens < 1) throw ParameterError("chunk: T must be >= 1");
  auto tokenizer = find_tokenizer(tokenizer_id);
  Corpus corpus;
  corpus.tokenizer_id = std::string(tokenizer_id);
  corpus.max_tokens = max_tokens;
  for (const auto& doc : documents) {
    const auto words = split_words(doc.text);
    if (words.empty() || tokenizer->count(doc.text) == 0) {
      warn(warnings, "chunk: document '" + doc.source + "' has no tokens; skipped");
      continue;
    }
    Packer packer(doc.text, words, *tokenizer, static_cast<std::size_t>(max_tokens));
    for (auto& text : packer.run()) {
      TextBlock block;
      block.id = static_cast<int>(corpus.blocks.size());
      block.token_count = tokenizer->count(text);
      block.text = std::move(text);
      block.source = doc.source;
      corpus.blocks.push_back(std::move(block));
    }
  }
  return corpus;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move '" + tmp.string() + "' into place");
  }
}

std::vector<Document> read_documents(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::vector<Document> docs;
  if (path.extension() != ".jsonl") {
    docs.push_back({path.string(), content});
    return docs;
  }
  std::istringstream lines(content);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      docs.push_back({j.at("source").get<std::string>(), j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad record: " + e.what());
    }
  }
  return docs;
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& b : corpus.blocks) {
    nlohmann::ordered_json j;
    j["id"] = b.id;
    j["source"] = b.source;
    j["token_count"] = b.token_count;
    j["text"] = b.text;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Corpus parse_corpus(std::string_view jsonl, std::string_view tokenizer_id, int max_tokens) {
  auto tokenizer = find_tokenizer(tokenizer_id);
  Corpus corpus;
  corpus.tokenizer_id = std::string(tokenizer_id);
  corpus.max_tokens = max_tokens;
  std::istringstream lines{std::string(jsonl)};
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    TextBlock b;
    try {
      auto j = nlohmann::json::parse(line);
      b.id = j.at("id").get<int>();
      b.source = j.at("source").get<std::string>();
      b.token_count = j.at("token_count").get<std::size_t>();
      b.text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError(std::string("corpus: bad record: ") + e.what());
    }
    if (b.id != static_cast<int>(corpus.blocks.size())) {
      throw CorruptionError("corpus: block ids must be contiguous from 0");
    }
    if (tokenizer->count(b.text) != b.token_count) {
      throw CorruptionError("corpus: token_count of block " + std::to_string(b.id) +
                            " does not match tokenizer '" + std::string(tokenizer_id) + "'");
    }
    corpus.blocks.push_back(std::move(b));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_corpus(corpus));
}

Corpus load_corpus(const std::filesystem::path& path, std::string_view tokenizer_id,
                   int max_tokens) {
  return parse_corpus(read_file(path), tokenizer_id, max_tokens);
}

}  // namespace autokg
