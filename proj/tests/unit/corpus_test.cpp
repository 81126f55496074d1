#include <autokg/corpus.hpp>
#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "fixtures.hpp"

namespace autokg {
namespace {

std::size_t reference_count(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

std::string words(int n, const std::string& stem = "w") {
  std::string out;
  for (int i = 0; i < n; ++i) out += (i ? " " : "") + stem + std::to_string(i);
  return out;
}

TEST(CountTokens, Examples) {
  EXPECT_EQ(count_tokens(""), 0u);
  EXPECT_EQ(count_tokens("hello world"), 2u);
  EXPECT_EQ(count_tokens("a  b\tc\nd"), 4u);
}

TEST(CountTokens, MatchesReferenceSplitter) {
  std::mt19937 rng(11);
  const std::string alphabet = "ab \t\n\r\v\f";
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    const int len = static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    EXPECT_EQ(count_tokens(s), reference_count(s)) << '"' << s << '"';
  }
}

TEST(CountTokens, UnknownTokenizer) { EXPECT_THROW(count_tokens("x", "no-such"), ConfigError); }

TEST(Chunk, SmallDocumentIsOneBlock) {
  const auto c = chunk({{"d", words(5)}}, 10);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].token_count, 5u);
  EXPECT_EQ(c[0].source, "d");
}

TEST(Chunk, HardCutWithoutBoundaries) {
  const auto c = chunk({{"d", words(20)}}, 10);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].token_count, 10u);
  EXPECT_EQ(c[1].token_count, 10u);
}

TEST(Chunk, SplitsAtParagraph) {
  const std::string p1 = words(6, "a");
  const std::string p2 = words(6, "b");
  const auto c = chunk({{"d", p1 + "\n\n" + p2}}, 8);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].text, p1);
  EXPECT_EQ(c[1].text, p2);
}

TEST(Chunk, EmptyDocumentSkippedWithWarning) {
  Warnings w;
  const auto c = chunk({{"empty", "  \n "}, {"d", "one two"}}, 10, kDefaultTokenizer, &w);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].id, 0);
  EXPECT_EQ(w.size(), 1u);
}

TEST(Chunk, BlocksRespectLimitAndKeepEveryToken) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Document> docs;
    std::size_t total = 0;
    for (int d = 0; d < 4; ++d) {
      std::string text;
      const int paragraphs = 1 + static_cast<int>(rng() % 4);
      for (int p = 0; p < paragraphs; ++p) {
        const int n = 1 + static_cast<int>(rng() % 30);
        total += static_cast<std::size_t>(n);
        text += (p ? "\n\n" : "") + words(n) + ".";
      }
      docs.push_back({"doc" + std::to_string(d), text});
    }
    const int t = 3 + static_cast<int>(rng() % 20);
    const auto c = chunk(docs, t);
    std::size_t seen = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_EQ(c[i].id, static_cast<int>(i));
      EXPECT_LE(c[i].token_count, static_cast<std::size_t>(t));
      EXPECT_GT(c[i].token_count, 0u);
      EXPECT_EQ(c[i].token_count, count_tokens(c[i].text));
      seen += c[i].token_count;
    }
    EXPECT_EQ(seen, total);
  }
}

TEST(Chunk, Deterministic) {
  const std::vector<Document> docs = {{"a", "First sentence here. Second one.\n\nNew paragraph."}, {"b", words(50)}};
  EXPECT_EQ(serialize_corpus(chunk(docs, 7)), serialize_corpus(chunk(docs, 7)));
}

TEST(Chunk, RejectsNonPositiveLimit) { EXPECT_THROW(chunk({{"d", "x"}}, 0), ParameterError); }

TEST(CorpusIo, RoundTrip) {
  const auto c = chunk({{"a", "Alpha beta. Gamma \"quoted\" delta.\n\nEpsilon"}, {"b", words(30)}}, 6);
  const auto back = parse_corpus(serialize_corpus(c), kDefaultTokenizer, 6);
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.content_hash(), c.content_hash());

  testing::TempDir dir("corpus");
  save_corpus(c, dir / "corpus.jsonl");
  EXPECT_EQ(load_corpus(dir / "corpus.jsonl", kDefaultTokenizer, 6), c);
}

TEST(CorpusIo, HashChangesWithText) {
  auto c = chunk({{"a", "one two three"}}, 10);
  const auto h = c.content_hash();
  c.blocks[0].text = "one two four";
  EXPECT_NE(c.content_hash(), h);
}

TEST(CorpusIo, ReadDocumentsFromJsonl) {
  testing::TempDir dir("docs");
  write_file_atomic(dir / "in.jsonl", "{\"source\":\"s1\",\"text\":\"hello\"}\n{\"source\":\"s2\",\"text\":\"world\"}\n");
  const auto docs = read_documents(dir / "in.jsonl");
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[1].source, "s2");
  EXPECT_EQ(docs[1].text, "world");
}

}  // namespace
}  // namespace autokg
