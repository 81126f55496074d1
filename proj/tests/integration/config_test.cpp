#include <autokg_tools/config.hpp>
#include <gtest/gtest.h>

#include "fixtures.hpp"

namespace autokg::cli {
namespace {

EngineConfig parse(const std::string& text, const std::filesystem::path& base = {}) {
  return EngineConfig::from_json(nlohmann::json::parse(text), base);
}

TEST(Config, Defaults) {
  const auto c = parse("{}");
  EXPECT_EQ(c.T, 200);
  EXPECT_EQ(c.K, 30);
  EXPECT_EQ(c.extraction.n, 15);
  EXPECT_EQ(c.extraction.c, 15);
  EXPECT_EQ(c.extraction.l1, 10);
  EXPECT_EQ(c.extraction.l2, 3);
  EXPECT_EQ(c.extraction.m, 300);
  EXPECT_EQ(c.association.n1, 5);
  EXPECT_EQ(c.association.n2, 35);
  EXPECT_EQ(c.search.s_t0, 15);
  EXPECT_EQ(c.token_limit, 10000u);
  EXPECT_EQ(c.embedding.dimension, 1536);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(parse(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse(R"({"extraction": {"nn": 3}})"), ConfigError);
  EXPECT_THROW(parse(R"({"embedding": {"dim": 3}})"), ConfigError);
  EXPECT_THROW(parse(R"({"search": {"s_t9": 3}})"), ConfigError);
}

TEST(Config, BadValuesRejected) {
  EXPECT_THROW(parse(R"({"T": "many"})"), ConfigError);
  EXPECT_THROW(parse(R"({"K": 0})").validate(), ConfigError);
  EXPECT_THROW(parse(R"({"embedding": {"provider": "psychic"}})"), ConfigError);
  EXPECT_THROW(parse(R"({"llm": {"provider": "mock"}})").validate(), ConfigError);
}

TEST(Config, RelativePathsResolveAgainstBase) {
  const auto c = parse(R"({"corpus": ["docs", "/abs/x.txt"], "output_dir": "out",
                           "llm": {"provider": "mock", "fixtures": "f.json"}})",
                       "/base");
  ASSERT_EQ(c.corpus.size(), 2u);
  EXPECT_EQ(c.corpus[0], std::filesystem::path("/base/docs"));
  EXPECT_EQ(c.corpus[1], std::filesystem::path("/abs/x.txt"));
  EXPECT_EQ(c.output_dir, std::filesystem::path("/base/out"));
  EXPECT_EQ(c.llm.fixtures, std::filesystem::path("/base/f.json"));
}

TEST(Config, RoundTripThroughJson) {
  const auto c = parse(R"({"T": 50, "K": 7, "seed": 9, "extraction": {"n": 4, "c": 2},
                           "association": {"n1": 2, "n2": 9}, "search": {"s_t0": 4}})");
  const auto back = EngineConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.extraction.seed, 9u);
  EXPECT_FALSE(c.manifest_params().contains("output_dir"));
}

TEST(Config, LoadReportsFile) {
  testing::TempDir dir("config");
  write_file_atomic(dir / "bad.json", "{ not json");
  EXPECT_THROW(EngineConfig::load(dir / "bad.json"), ConfigError);
  EXPECT_THROW(EngineConfig::load(dir / "missing.json"), ConfigError);
  write_file_atomic(dir / "ok.json", R"({"corpus": "c.txt"})");
  EXPECT_EQ(EngineConfig::load(dir / "ok.json").corpus.at(0), dir.path() / "c.txt");
}

TEST(Config, BuildNeedsExistingCorpus) {
  EXPECT_THROW(parse("{}").validate_for_build(), ConfigError);
  EXPECT_THROW(parse(R"({"corpus": "/definitely/not/here"})").validate_for_build(), ConfigError);
}

}  // namespace
}  // namespace autokg::cli
