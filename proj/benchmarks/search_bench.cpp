#include <autokg/hybrid.hpp>
#include <autokg_tools/pipeline.hpp>
#include <benchmark/benchmark.h>

#include <memory>

namespace {

struct Index {
  autokg::cli::SyntheticBuild build;
  std::unique_ptr<autokg::HybridSearcher> searcher;
  std::unique_ptr<autokg::OfflineHashProvider> provider;
};

Index& index() {
  static Index idx = [] {
    Index i;
    autokg::EmbeddingProviderConfig cfg;
    cfg.dimension = 512;
    i.build = autokg::cli::synthetic_build(2000, 200, 7, cfg);
    i.searcher = std::make_unique<autokg::HybridSearcher>(i.build.kg, i.build.corpus, i.build.vectors);
    i.provider = std::make_unique<autokg::OfflineHashProvider>(cfg);
    return i;
  }();
  return idx;
}

void BM_HybridSearch(benchmark::State& state) {
  auto& idx = index();
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const std::vector<std::string> q = {autokg::random_query(seed++)};
    const auto v = idx.provider->embed(q).front();
    benchmark::DoNotOptimize(idx.searcher->search(v, autokg::SearchParams{}));
  }
}
BENCHMARK(BM_HybridSearch)->Unit(benchmark::kMicrosecond);

void BM_VectorSearch30(benchmark::State& state) {
  auto& idx = index();
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const std::vector<std::string> q = {autokg::random_query(seed++)};
    const auto v = idx.provider->embed(q).front();
    benchmark::DoNotOptimize(idx.searcher->vector_search(v, 30));
  }
}
BENCHMARK(BM_VectorSearch30)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
