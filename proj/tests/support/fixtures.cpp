#include "fixtures.hpp"

#include <unistd.h>

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <autokg/rng.hpp>
#include <cctype>
#include <cmath>
#include <random>

namespace autokg::testing {

EmbeddingMatrix random_vectors(int rows, int dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  EmbeddingMatrix m(rows, dim);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < dim; ++j) m(i, j) = normal(gen);
  }
  return m;
}

EmbeddingMatrix clustered_vectors(int rows, int dim, int centers, double spread, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  const EmbeddingMatrix dirs = normalized_rows(random_vectors(centers, dim, seed ^ 0xabcdef));
  EmbeddingMatrix m(rows, dim);
  for (int i = 0; i < rows; ++i) {
    m.row(i) = dirs.row(i % centers);
    for (int j = 0; j < dim; ++j) m(i, j) += spread * normal(gen);
  }
  return m;
}

SimilarityGraph graph_from_edges(int n, const std::vector<std::tuple<int, int, double>>& edges) {
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& [i, j, w] : edges) {
    t.emplace_back(i, j, w);
    t.emplace_back(j, i, w);
  }
  SparseMatrix w(n, n);
  w.setFromTriplets(t.begin(), t.end());
  return SimilarityGraph::from_weights(std::move(w));
}

SimilarityGraph path_graph(int n, double weight) {
  std::vector<std::tuple<int, int, double>> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1, weight);
  return graph_from_edges(n, edges);
}

Eigen::VectorXd dense_harmonic(const SimilarityGraph& graph, const LabelAssignment& labels) {
  const int n = graph.n_nodes;
  const Eigen::MatrixXd w = Eigen::MatrixXd(graph.weights);
  const Eigen::VectorXd d = w.rowwise().sum();
  Eigen::MatrixXd l = -w;
  l.diagonal() += d;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  std::vector<bool> fixed(static_cast<std::size_t>(n), false);
  for (const auto& [node, y] : labels.labeled) {
    fixed[static_cast<std::size_t>(node)] = true;
    u(node) = y;
  }
  std::vector<int> free;
  for (int i = 0; i < n; ++i) {
    if (!fixed[static_cast<std::size_t>(i)]) free.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(free.size());
  if (m == 0) return u;
  Eigen::MatrixXd a(m, m);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) a(r, c) = l(free[r], free[c]);
    for (int j = 0; j < n; ++j) {
      if (fixed[static_cast<std::size_t>(j)]) b(r) += w(free[r], j) * u(j);
    }
  }
  const Eigen::VectorXd x = a.ldlt().solve(b);
  for (Eigen::Index r = 0; r < m; ++r) u(free[r]) = x(r);
  return u;
}

Corpus numbered_corpus(int n, std::uint64_t seed) {
  Corpus c;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const std::string text = "block " + std::to_string(i) + " token" + std::to_string(rng.below(1000));
    c.blocks.push_back({i, text, count_tokens(text), "fixture"});
  }
  return c;
}

KnowledgeGraph random_kg(const Corpus& corpus, int n_keywords, int dim, std::uint64_t seed) {
  Rng rng(seed);
  const int n_blocks = static_cast<int>(corpus.size());
  const EmbeddingMatrix emb = random_vectors(n_keywords, dim, mix_seed(seed, 1));
  std::vector<KeywordAssociation> assoc;
  for (int k = 0; k < n_keywords; ++k) {
    KeywordAssociation a;
    a.keyword = "kw" + std::to_string(k);
    a.embedding = emb.row(k).transpose();
    const auto size = 1 + rng.below(static_cast<std::size_t>(std::min(n_blocks, 12)));
    for (auto id : rng.sample_indices(static_cast<std::size_t>(n_blocks), size)) a.block_ids.push_back(static_cast<int>(id));
    std::sort(a.block_ids.begin(), a.block_ids.end());
    a.iterations = static_cast<int>(rng.below(50));
    a.residual = rng.uniform() * 1e-9;
    assoc.push_back(std::move(a));
  }
  KgManifest manifest;
  manifest.corpus_hash = corpus.content_hash();
  manifest.n_blocks = n_blocks;
  manifest.params = {{"fixture", "random"}, {"seed", seed}};
  manifest.engine_version = std::string(engine_version());
  return assemble_kg(std::move(assoc), std::move(manifest));
}

ConceptProvider::ConceptProvider(std::map<std::string, int> lexicon, int concepts, int residue_dim, double residue)
    : lexicon_(std::move(lexicon)), concepts_(concepts), residue_dim_(residue_dim), residue_(residue) {
  config_.model_name = "concept-lexicon";
  config_.dimension = concepts + residue_dim;
}

std::vector<Embedding> ConceptProvider::embed(std::span<const std::string> texts) {
  std::vector<Embedding> out;
  for (const auto& text : texts) {
    Embedding v = Embedding::Zero(config_.dimension);
    std::string word;
    auto flush = [&] {
      if (word.empty()) return;
      if (auto it = lexicon_.find(word); it != lexicon_.end()) v(it->second) += 1.0;
      word.clear();
    };
    for (char ch : text) {
      if (std::isalnum(static_cast<unsigned char>(ch)) != 0) {
        word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      } else {
        flush();
      }
    }
    flush();
    v.tail(residue_dim_) = residue_ * offline_hash_embed(text, residue_dim_);
    out.push_back(std::move(v));
  }
  return out;
}

ScaledProvider::ScaledProvider(std::unique_ptr<EmbeddingProvider> inner, double factor)
    : inner_(std::move(inner)), factor_(factor) {}

std::vector<Embedding> ScaledProvider::embed(std::span<const std::string> texts) {
  auto v = inner_->embed(texts);
  for (auto& e : v) e *= factor_;
  return v;
}

namespace {

enum Concept { kAlex, kHome, kMorning, kRain, kCafe, kCoffee, kCompany, kOffice, kBus, kChat, kConceptCount };

std::map<std::string, int> alex_lexicon() {
  std::map<std::string, int> m;
  auto put = [&](int c, std::initializer_list<const char*> words) {
    for (const char* w : words) m[w] = c;
  };
  put(kAlex, {"alex"});
  put(kHome, {"home", "house", "apartment", "left", "leaves", "door"});
  put(kMorning, {"morning", "breakfast", "early", "woke", "wakes", "alarm", "routine"});
  put(kRain, {"raining", "rain", "rained", "rainy", "weather", "umbrella", "forecast", "wet", "cloudy"});
  put(kCafe, {"cafe", "square", "plaza", "outdoor", "tables", "people"});
  put(kCoffee, {"coffee", "latte", "espresso", "barista", "drinking", "cup"});
  put(kCompany, {"company", "car", "wash", "cars", "bustling", "business", "customers"});
  put(kOffice, {"office", "manager", "meeting", "report", "desk", "colleagues", "project"});
  put(kBus, {"bus", "driver", "ride", "passengers", "stop", "seat"});
  put(kChat, {"chatting", "chatted", "talk", "talks", "chats", "conversation", "said", "asked", "replied"});
  return m;
}

}  // namespace

std::unique_ptr<ConceptProvider> AlexFixture::provider() const {
  return std::make_unique<ConceptProvider>(alex_lexicon(), kConceptCount);
}

std::shared_ptr<ScriptedMock> AlexFixture::mock() const {
  std::string list;
  for (const auto& k : keywords) list += (list.empty() ? "" : ", ") + k;
  auto mock = std::make_shared<ScriptedMock>();
  mock->on("determine the core theme", list);
  mock->on("organizing keyword lists", list);
  return mock;
}

AlexFixture alex_fixture() {
  AlexFixture f;
  f.query = "Was it raining this morning when Alex left his home?";
  f.keywords = {"Alex", "Cafe A", "Company B", "morning routine", "home", "breakfast", "leaving home"};
  const std::vector<std::string> routine = {
      "Alex wakes up early at home and makes breakfast in the apartment.",
      "Alex left home after breakfast, locking the apartment door behind him.",
      "Every morning Alex follows the same routine before he leaves the house.",
      "Alex checked the alarm at home; the morning started early.",
      "Alex said goodbye to his neighbor at the door of the house this morning.",
      "At home Alex ironed a shirt and packed a bag for the morning.",
      "Alex leaves home at eight, right after breakfast.",
      "The morning light filled the apartment while Alex got ready.",
      "Alex watered the plants at home before he left in the morning.",
      "Alex read the news at breakfast and then left the house.",
  };
  const std::vector<std::string> cafe = {
      "At Cafe A the barista asked Alex if he wanted his usual latte.",
      "Alex chatted with the barista at Cafe A about the new espresso.",
      "Cafe A serves coffee to Alex every day; the barista knows his order.",
      "Alex and a friend talk over coffee at Cafe A.",
      "The barista at Cafe A replied that the latte would take a minute.",
      "Alex paid for a cup of coffee at Cafe A and thanked the barista.",
      "Alex asked the barista at Cafe A for an extra espresso shot.",
      "At Cafe A, Alex had a conversation about coffee beans with the barista.",
      "Cafe A was where Alex drank his latte and chatted with regulars.",
      "The barista said Cafe A had a new coffee blend and Alex tried a cup.",
      "Alex likes Cafe A.",
      "Cafe A is a favorite of Alex.",
  };
  const std::vector<std::string> bus = {
      "Alex takes the bus to work; the driver nods as he finds a seat.",
      "On the bus Alex talks with the driver about the traffic.",
      "The bus stop near Cafe A is where Alex waits for his ride.",
      "Passengers on the bus chatted while Alex read a book in his seat.",
      "The bus driver said the ride would be short today.",
      "Alex gave his seat on the bus to an older passenger.",
      "The bus was full of passengers and Alex stood near the driver.",
      "Alex got off the bus at the stop next to Company B.",
  };
  const std::vector<std::string> office = {
      "At Company B, Alex presented the project report to his manager.",
      "Alex and his colleagues held a meeting at Company B about the project.",
      "The manager at Company B asked Alex to finish the report by noon.",
      "Alex sat at his desk at Company B and answered emails.",
      "Colleagues at Company B talk with Alex about the meeting schedule.",
      "Company B gave Alex a new desk near the manager's office.",
      "Alex replied to his manager at Company B about the report.",
      "In the office at Company B, Alex chatted with colleagues over lunch.",
      "Alex works for Company B.",
      "Company B hired Alex last year.",
  };
  const std::string clue_square = "Many people were chatting and drinking coffee at outdoor tables in the square by Cafe A.";
  const std::string clue_carwash = "The car wash next to Company B was bustling with business, cars lined up with customers.";

  auto add = [&](const std::vector<std::string>& texts, const std::string& source) {
    for (const auto& t : texts) f.documents.push_back({source, t});
  };
  add(routine, "alex/routine");
  add(cafe, "alex/cafe");
  add({clue_square}, "alex/clue-square");
  add(bus, "alex/bus");
  add(office, "alex/office");
  add({clue_carwash}, "alex/clue-carwash");
  for (int i = 0; i < static_cast<int>(f.documents.size()); ++i) {
    if (f.documents[static_cast<std::size_t>(i)].source.starts_with("alex/clue")) f.clue_blocks.push_back(i);
  }
  return f;
}

AlexBuild build_alex(const AlexFixture& fixture) {
  AlexBuild b;
  b.corpus = chunk(fixture.documents, 200);
  b.embedder = std::make_unique<Embedder>(fixture.provider());
  b.vectors = b.embedder->embed_matrix(b.corpus.texts());
  GraphBuildOptions graph_options;
  graph_options.k = 8;
  b.graph = build_similarity_graph(b.vectors, graph_options);

  ExtractionParams params;
  params.n = 4;
  params.c = 5;
  params.main_topic = "Alex's day";
  LlmClient llm(fixture.mock());
  const auto raw = extract_keywords(b.corpus, b.vectors, b.graph, params, llm);
  b.keywords = refine_keywords(raw, params, llm);

  AssociationParams assoc;
  assoc.n1 = 5;
  assoc.n2 = 20;
  KgManifest manifest;
  manifest.corpus_hash = b.corpus.content_hash();
  manifest.n_blocks = static_cast<int>(b.corpus.size());
  manifest.engine_version = std::string(engine_version());
  const EmbeddingMatrix kv = b.embedder->embed_matrix(b.keywords.keywords());
  b.kg = build_kg(b.keywords.keywords(), kv, b.vectors, b.graph, assoc, std::move(manifest));
  return b;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("autokg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace autokg::testing
