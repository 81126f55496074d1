#include <autokg/hybrid.hpp>
#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "fixtures.hpp"

namespace autokg {
namespace {

KnowledgeGraph kg_for(const Corpus& corpus, std::vector<KeywordAssociation> assoc) {
  KgManifest manifest;
  manifest.corpus_hash = corpus.content_hash();
  manifest.n_blocks = static_cast<int>(corpus.size());
  return assemble_kg(std::move(assoc), manifest);
}

KeywordAssociation assoc(std::string keyword, Embedding e, std::vector<int> blocks) {
  KeywordAssociation a;
  a.keyword = std::move(keyword);
  a.embedding = std::move(e);
  a.block_ids = std::move(blocks);
  return a;
}

Embedding basis(int dim, int i, double noise_axis = -1, double noise = 0.0) {
  Embedding e = Eigen::VectorXd::Zero(dim);
  e[i] = 1.0;
  if (noise_axis >= 0) e[static_cast<int>(noise_axis)] = noise;
  return e;
}

TEST(SearchParams, Bounds) {
  SearchParams p;
  EXPECT_EQ(p.max_keywords(), 20);
  EXPECT_EQ(p.max_blocks(), 60);
  p.s_t0 = -1;
  EXPECT_THROW(p.validate(), ParameterError);
}

TEST(QaBudget, Examples) {
  EXPECT_EQ(qa_token_budget(SearchParams{}, 200, 3), 12060);
  EXPECT_EQ(qa_token_budget(SearchParams{0, 0, 0, 0, 0}, 200, 3), 0);
  EXPECT_EQ(qa_token_budget(SearchParams{1, 1, 1, 1, 1}, 1, 1), 5);
}

TEST(HybridSearch, ThreeKeywordWalk) {
  const auto corpus = testing::numbered_corpus(12);
  const auto blocks = testing::random_vectors(12, 6, 3);
  // ka and kb share blocks; kc shares nothing with ka.
  const auto kg = kg_for(corpus, {assoc("ka", basis(6, 0), {0, 1, 2}), assoc("kb", basis(6, 1), {2, 3}),
                                  assoc("kc", basis(6, 2), {3, 4})});
  HybridSearcher s(kg, corpus, blocks);
  SearchParams p{2, 1, 1, 1, 1};
  const auto r = s.search(basis(6, 0, 5, 0.1), p);
  EXPECT_EQ(r.keyword_ids(), (std::vector<int>{0, 1}));
  ASSERT_EQ(r.keywords.size(), 2u);
  EXPECT_EQ(r.keywords[0].stage, KeywordStage::similar);
  EXPECT_EQ(r.keywords[1].stage, KeywordStage::adjacent);
  EXPECT_EQ(r.keywords[1].via_keyword, 0);
  EXPECT_EQ(r.keywords[1].weight, 1);
  for (const auto& b : r.blocks) {
    if (b.stage == BlockStage::via_keyword) EXPECT_EQ(b.via_keyword, 0);
    if (b.stage == BlockStage::via_adjacency) EXPECT_EQ(b.via_keyword, 1);
  }
}

TEST(HybridSearch, ZeroKeywordsIsVectorSearch) {
  const auto corpus = testing::numbered_corpus(40);
  const auto kg = testing::random_kg(corpus, 10, 8, 1);
  const auto blocks = testing::random_vectors(40, 8, 2);
  HybridSearcher s(kg, corpus, blocks);
  const Eigen::VectorXd q = testing::random_vectors(1, 8, 9).row(0).transpose();
  SearchParams p;
  p.s_k1 = 0;
  const auto r = s.search(q, p);
  EXPECT_TRUE(r.keywords.empty());
  std::vector<int> direct;
  for (const auto& h : s.vector_search(q, p.s_t0)) direct.push_back(h.id);
  EXPECT_EQ(r.block_ids(), direct);
}

TEST(HybridSearch, BoundsNoDuplicatesAndStageOrder) {
  const auto corpus = testing::numbered_corpus(80);
  const auto blocks = testing::random_vectors(80, 10, 4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto kg = testing::random_kg(corpus, 30, 10, seed);
    HybridSearcher s(kg, corpus, blocks);
    const Eigen::VectorXd q = testing::random_vectors(1, 10, 100 + seed).row(0).transpose();
    const auto r = s.search(q, SearchParams{});
    const auto ids = r.block_ids();
    EXPECT_EQ(std::set<int>(ids.begin(), ids.end()).size(), ids.size());
    EXPECT_LE(static_cast<long long>(ids.size()), SearchParams{}.max_blocks());
    EXPECT_LE(static_cast<long long>(r.keywords.size()), SearchParams{}.max_keywords());
    for (std::size_t i = 1; i < r.blocks.size(); ++i) EXPECT_LE(r.blocks[i - 1].stage, r.blocks[i].stage);
  }
}

TEST(HybridSearch, LargerParametersNeverLoseBlocks) {
  const auto corpus = testing::numbered_corpus(60);
  const auto blocks = testing::random_vectors(60, 8, 5);
  const auto kg = testing::random_kg(corpus, 20, 8, 6);
  HybridSearcher s(kg, corpus, blocks);
  const Eigen::VectorXd q = testing::random_vectors(1, 8, 7).row(0).transpose();
  const auto small = s.search(q, SearchParams{5, 2, 2, 1, 1}).block_ids();
  const auto large = s.search(q, SearchParams{10, 4, 3, 3, 2}).block_ids();
  const std::set<int> big(large.begin(), large.end());
  for (int id : small) EXPECT_TRUE(big.contains(id)) << id;
}

TEST(HybridSearch, KeywordBlocksBeyondCache) {
  const auto corpus = testing::numbered_corpus(30);
  const auto blocks = testing::random_vectors(30, 6, 8);
  const auto kg = testing::random_kg(corpus, 4, 6, 9);
  HybridSearcher s(kg, corpus, blocks, SearcherOptions{2, 1});
  const Eigen::VectorXd angles =
      angles_to(normalized_rows(blocks), kg.keyword_embeddings.row(1).transpose().normalized());
  EXPECT_EQ(s.keyword_blocks(1, 12), nearest_by_angle(angles, 12));
  EXPECT_EQ(s.keyword_blocks(1, 2), nearest_by_angle(angles, 2));
}

TEST(HybridSearch, EmptyGraphDegradesWithWarning) {
  const auto corpus = testing::numbered_corpus(10);
  const auto kg = kg_for(corpus, {});
  HybridSearcher s(kg, corpus, testing::random_vectors(10, 4, 1));
  const auto r = s.search(basis(4, 0), SearchParams{});
  EXPECT_EQ(r.blocks.size(), 10u);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(HybridSearch, CorpusMismatchRejected) {
  const auto corpus = testing::numbered_corpus(10);
  const auto other = testing::numbered_corpus(10, 99);
  const auto kg = testing::random_kg(corpus, 3, 4, 0);
  EXPECT_THROW(HybridSearcher(kg, other, testing::random_vectors(10, 4, 1)), ConsistencyError);
}

TEST(PromptAssembly, GreedyCutoff) {
  const auto corpus = testing::numbered_corpus(10);
  SearchResult all;
  for (int id : {4, 2, 7, 1}) all.blocks.push_back({id, BlockStage::direct, 0.1, -1});
  SearchResult two = all;
  two.blocks.resize(2);
  const auto exact = assemble_response_prompt("what?", two, corpus, 1u << 20);
  const auto cut = assemble_response_prompt("what?", all, corpus, exact.token_count);
  EXPECT_EQ(cut.included_blocks, (std::vector<int>{4, 2}));
  EXPECT_EQ(cut.omitted_blocks, 2u);
  EXPECT_LE(cut.token_count, exact.token_count);
  EXPECT_EQ(cut.token_count, count_tokens(cut.text));

  const auto everything = assemble_response_prompt("what?", all, corpus, 1u << 20);
  EXPECT_EQ(everything.included_blocks.size(), 4u);
  EXPECT_THROW(assemble_response_prompt("what?", all, corpus, 1), ParameterError);
}

TEST(PromptAssembly, KeywordSlot) {
  const auto corpus = testing::numbered_corpus(3);
  SearchResult r;
  EXPECT_NE(assemble_response_prompt("q?", r, corpus, 100000).text.find("(none)"), std::string::npos);
  r.keywords.push_back({0, "alpha", KeywordStage::similar, 0.1, -1, 0});
  r.keywords.push_back({1, "beta", KeywordStage::adjacent, 0.2, 0, 1});
  const auto text = assemble_response_prompt("q?", r, corpus, 100000).text;
  EXPECT_NE(text.find("alpha, beta"), std::string::npos);
  EXPECT_NE(text.find("I want you to do a task"), std::string::npos);
}

TEST(AnswerQuery, ReplayAndDryRun) {
  const auto corpus = testing::numbered_corpus(20);
  const auto kg = testing::random_kg(corpus, 5, 32, 2);
  EmbeddingProviderConfig cfg;
  cfg.dimension = 32;
  Embedder embedder(cfg);
  const auto blocks = embedder.embed_matrix(corpus.texts());
  HybridSearcher searcher(kg, corpus, blocks);

  auto mock = std::make_shared<ScriptedMock>();
  mock->on("I want you to do a task", "forty-two");
  LlmClient llm(mock);
  AnswerOptions opt;
  const auto a = answer_query("what is block 3?", searcher, embedder, opt, &llm);
  EXPECT_TRUE(a.answered);
  EXPECT_EQ(a.answer, "forty-two");
  ASSERT_EQ(llm.transcript().size(), 1u);
  EXPECT_EQ(llm.transcript().records()[0].prompt, a.prompt.text);

  opt.dry_run = true;
  const auto d = answer_query("what is block 3?", searcher, embedder, opt, &llm);
  EXPECT_FALSE(d.answered);
  EXPECT_EQ(llm.transcript().size(), 1u);

  opt.dry_run = false;
  opt.mode = SearchMode::vector_only;
  const auto v = answer_query("what is block 3?", searcher, embedder, opt, &llm);
  EXPECT_TRUE(v.result.keywords.empty());
  EXPECT_TRUE(to_json(v)["keywords"].empty());
}

TEST(Latency, RandomQueriesAndReport) {
  EXPECT_EQ(random_query(1).size(), 50u);
  EXPECT_EQ(random_query(1), random_query(1));
  EXPECT_NE(random_query(1), random_query(2));

  const auto corpus = testing::numbered_corpus(50);
  const auto kg = testing::random_kg(corpus, 8, 16, 3);
  EmbeddingProviderConfig cfg;
  cfg.dimension = 16;
  OfflineHashProvider provider(cfg);
  HybridSearcher searcher(kg, corpus, testing::random_vectors(50, 16, 4));
  const auto report = compare_latency(searcher, provider, SearchParams{}, 1);
  EXPECT_EQ(report.repetitions, 1);
  EXPECT_EQ(report.vector_count, 30);
  EXPECT_EQ(report.hybrid_samples.size(), 1u);
  EXPECT_GT(report.ratio(), 0.0);
}

}  // namespace
}  // namespace autokg
