#include "autokg/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "autokg/parallel.hpp"
#include "autokg/rng.hpp"

namespace autokg {
namespace {

constexpr std::string_view kTask1Intro =
    "You are an advanced AI assistant, specializing in analyzing various pieces of information and providing "
    "precise summaries. Your task is to determine the core theme in the following series of *-separated "
    "information fragments, which are delimited by triple backticks. Ensure your answer focuses on the topic and "
    "avoids including unrelated content. DO NOT write complete sentences.";

constexpr std::string_view kTask2Intro =
    "You are an advanced AI assistant, specializing in organizing keyword lists. The following comma-separated "
    "keywords, delimited by triple backticks, were extracted from a knowledge base. Refine the list: concentrate "
    "keywords with the same meaning into one, remove duplicates, split keywords that combine several concepts, and "
    "delete keywords that are vague or unrelated to the topic.";

std::string join(std::span<const std::string> items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += sep;
    out += items[i];
  }
  return out;
}

std::size_t fixed_part(const std::string& prompt, std::span<const std::string> slots, std::string_view tokenizer_id) {
  std::size_t variable = 0;
  for (const auto& s : slots) variable += count_tokens(s, tokenizer_id);
  const std::size_t total = count_tokens(prompt, tokenizer_id);
  return total > variable ? total - variable : 0;
}

bool is_space(unsigned char ch) { return std::isspace(ch) != 0; }

std::string trim_keyword(std::string_view s) {
  static constexpr std::string_view kStray = ".;:!?\"'`*<>[]{}|";
  static constexpr std::string_view kBrackets[] = {"⟨", "⟩", "•"};
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    while (!s.empty() && (is_space(s.front()) || kStray.find(s.front()) != std::string_view::npos ||
                          s.front() == '-')) {
      s.remove_prefix(1);
      changed = true;
    }
    while (!s.empty() && (is_space(s.back()) || kStray.find(s.back()) != std::string_view::npos)) {
      s.remove_suffix(1);
      changed = true;
    }
    for (auto b : kBrackets) {
      if (s.starts_with(b)) {
        s.remove_prefix(b.size());
        changed = true;
      }
      if (s.ends_with(b)) {
        s.remove_suffix(b.size());
        changed = true;
      }
    }
    if (!s.empty() && s.back() == ')' && s.find('(') == std::string_view::npos) {
      s.remove_suffix(1);
      changed = true;
    }
    if (!s.empty() && s.front() == '(' && s.find(')') == std::string_view::npos) {
      s.remove_prefix(1);
      changed = true;
    }
  }
  // Collapse internal whitespace runs to one space.
  std::string out;
  bool gap = false;
  for (char ch : s) {
    if (is_space(static_cast<unsigned char>(ch))) {
      gap = true;
      continue;
    }
    if (gap && !out.empty()) out.push_back(' ');
    gap = false;
    out.push_back(ch);
  }
  return out;
}

ProviderError with_context(const ProviderError& e, const std::string& context) {
  ProviderError out(context + ": " + e.what(), e.failed_indices(), e.transient());
  out.attach_prompt(e.prompt());
  return out;
}

struct Job {
  ClusterRef ref;
  std::vector<std::string> texts;
};

}  // namespace

void ExtractionParams::validate() const {
  if (n < 1) throw ConfigError("extraction: n must be >= 1");
  if (c < 1) throw ConfigError("extraction: c must be >= 1");
  if (l1 < 1) throw ConfigError("extraction: l1 must be >= 1");
  if (l2 < 1) throw ConfigError("extraction: l2 must be >= 1");
  if (m < 1) throw ConfigError("extraction: m must be >= 1");
  if (kmeans_iterations < 1) throw ConfigError("extraction: kmeans_iterations must be >= 1");
  if (in_flight < 1) throw ConfigError("extraction: in_flight must be >= 1");
  if (context_tokens < 1) throw ConfigError("extraction: context_tokens must be >= 1");
  if (dense_eigen_limit < 1) throw ConfigError("extraction: dense_eigen_limit must be >= 1");
  if (language.empty()) throw ConfigError("extraction: language must be set");
}

nlohmann::ordered_json to_json(const ExtractionParams& p) {
  nlohmann::ordered_json j;
  j["n"] = p.n;
  j["c"] = p.c;
  j["l1"] = p.l1;
  j["l2"] = p.l2;
  j["m"] = p.m;
  j["main_topic"] = p.main_topic;
  j["language"] = p.language;
  j["seed"] = p.seed;
  j["kmeans_iterations"] = p.kmeans_iterations;
  j["kmeans_metric"] = to_string(p.kmeans_metric);
  j["dense_eigen_limit"] = p.dense_eigen_limit;
  j["sequential"] = p.sequential;
  j["in_flight"] = p.in_flight;
  j["context_tokens"] = p.context_tokens;
  return j;
}

ExtractionParams extraction_params_from_json(const nlohmann::json& j) {
  ExtractionParams p;
  try {
    p.n = j.value("n", p.n);
    p.c = j.value("c", p.c);
    p.l1 = j.value("l1", p.l1);
    p.l2 = j.value("l2", p.l2);
    p.m = j.value("m", p.m);
    p.main_topic = j.value("main_topic", p.main_topic);
    p.language = j.value("language", p.language);
    p.seed = j.value("seed", p.seed);
    p.kmeans_iterations = j.value("kmeans_iterations", p.kmeans_iterations);
    p.kmeans_metric = parse_kmeans_metric(j.value("kmeans_metric", std::string(to_string(p.kmeans_metric))));
    p.dense_eigen_limit = j.value("dense_eigen_limit", p.dense_eigen_limit);
    p.sequential = j.value("sequential", p.sequential);
    p.in_flight = j.value("in_flight", p.in_flight);
    p.context_tokens = j.value("context_tokens", p.context_tokens);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("extraction params: ") + e.what());
  }
  return p;
}

std::string normalize_keyword(std::string_view keyword) {
  std::string out = trim_keyword(keyword);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

int KeywordSet::find(std::string_view keyword) const {
  const auto key = normalize_keyword(keyword);
  const auto it = std::find(keys_.begin(), keys_.end(), key);
  return it == keys_.end() ? -1 : static_cast<int>(it - keys_.begin());
}

bool KeywordSet::add(std::string_view keyword, std::span<const ClusterRef> refs) {
  auto key = normalize_keyword(keyword);
  if (key.empty()) throw ParameterError("KeywordSet: empty keyword");
  auto merge = [&](std::vector<ClusterRef>& into) {
    for (const auto& r : refs) {
      if (std::find(into.begin(), into.end(), r) == into.end()) into.push_back(r);
    }
    std::sort(into.begin(), into.end());
  };
  const auto it = std::find(keys_.begin(), keys_.end(), key);
  if (it != keys_.end()) {
    merge(provenance_[static_cast<std::size_t>(it - keys_.begin())]);
    return false;
  }
  keywords_.push_back(trim_keyword(keyword));
  keys_.push_back(std::move(key));
  provenance_.emplace_back();
  merge(provenance_.back());
  return true;
}

nlohmann::ordered_json KeywordSet::to_json(const ExtractionParams* params) const {
  nlohmann::ordered_json j;
  j["keywords"] = keywords_;
  nlohmann::ordered_json prov = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < keywords_.size(); ++i) {
    auto refs = nlohmann::ordered_json::array();
    for (const auto& r : provenance_[i]) refs.push_back({to_string(r.algorithm), r.cluster});
    prov[keywords_[i]] = std::move(refs);
  }
  j["provenance"] = std::move(prov);
  j["params"] = params != nullptr ? autokg::to_json(*params) : nlohmann::ordered_json::object();
  return j;
}

KeywordSet KeywordSet::from_json(const nlohmann::json& j) {
  KeywordSet out;
  try {
    const auto& prov = j.at("provenance");
    for (const auto& kw : j.at("keywords")) {
      const auto text = kw.get<std::string>();
      std::vector<ClusterRef> refs;
      if (prov.contains(text)) {
        for (const auto& r : prov.at(text)) {
          const auto alg = r.at(0).get<std::string>();
          if (alg != "kmeans" && alg != "spectral") throw CorruptionError("keyword set: bad algorithm " + alg);
          refs.push_back({alg == "kmeans" ? ClusterAlgorithm::kmeans : ClusterAlgorithm::spectral,
                          r.at(1).get<int>()});
        }
      }
      out.add(text, refs);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("keyword set: ") + e.what());
  }
  return out;
}

std::string sanitize_block_text(std::string_view text) {
  std::string out(text);
  std::replace(out.begin(), out.end(), '`', '\'');
  return out;
}

Prompt build_task1_prompt(std::span<const std::string> blocks, std::span<const std::string> previous,
                          const ExtractionParams& params, std::string_view tokenizer_id) {
  if (blocks.empty()) throw ParameterError("task 1 prompt: no text blocks");
  std::vector<std::string> clean;
  clean.reserve(blocks.size());
  for (const auto& b : blocks) clean.push_back(sanitize_block_text(b));

  std::string p;
  p += kTask1Intro;
  p += "\nYou should obey the following rules when doing this task:\n";
  p += "1, Keywords in your answer should related to the topic " + params.main_topic + ";\n";
  p += "2, Your answer should include at most " + std::to_string(params.l1) + " keywords;\n";
  p += "3, Each keyword should be at most " + std::to_string(params.l2) + " words long;\n";
  p += "4, avoid already appeared theme keywords, marked inside ⟨⟩;\n";
  p += "5, Write your answer in " + params.language + ";\n";
  p += "6, Separate your output keywords with commas (,);\n";
  p += "7, Don't include any symbols other than keywords.\n\n";
  p += "Information: ```\n" + join(clean, "\n*\n") + "\n```\n\n";
  p += "Please avoid the following already appeared theme terms:\n";
  p += "⟨" + join(previous, ", ") + "⟩\n";
  p += "Your response: ";

  std::vector<std::string> slots = clean;
  slots.insert(slots.end(), previous.begin(), previous.end());
  return {p, fixed_part(p, slots, tokenizer_id)};
}

Prompt build_task2_prompt(std::span<const std::string> keywords, const ExtractionParams& params,
                          std::string_view tokenizer_id) {
  if (keywords.empty()) throw ParameterError("task 2 prompt: no keywords");
  std::string p;
  p += kTask2Intro;
  p += "\nYou should obey the following rules when doing this task:\n";
  p += "1, Keywords in your answer should related to the topic " + params.main_topic + ";\n";
  p += "2, Each keyword should be at most " + std::to_string(params.l2) + " words long;\n";
  p += "3, Write your answer in " + params.language + ";\n";
  p += "4, Separate your output keywords with commas (,);\n";
  p += "5, Don't include any symbols other than keywords.\n\n";
  p += "Keywords: ```\n" + join(keywords, ", ") + "\n```\n\n";
  p += "Your response: ";
  return {p, fixed_part(p, keywords, tokenizer_id)};
}

std::vector<std::string> parse_keywords(std::string_view response, int l2, std::string_view tokenizer_id,
                                        Warnings* warnings) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::size_t start = 0;
  while (start <= response.size()) {
    auto end = response.find_first_of(",\n", start);
    if (end == std::string_view::npos) end = response.size();
    auto kw = trim_keyword(response.substr(start, end - start));
    start = end + 1;
    if (kw.empty()) continue;
    const auto tokens = count_tokens(kw, tokenizer_id);
    if (tokens > static_cast<std::size_t>(l2)) {
      warn(warnings, "dropped keyword '" + kw + "': " + std::to_string(tokens) + " tokens > l2=" + std::to_string(l2));
      continue;
    }
    if (seen.insert(normalize_keyword(kw)).second) out.push_back(std::move(kw));
  }
  return out;
}

ExtractionRun run_extraction(const Corpus& corpus, const EmbeddingMatrix& vectors, const SimilarityGraph& graph,
                             const ExtractionParams& params, LlmClient& llm, Warnings* warnings) {
  params.validate();
  const int n_blocks = static_cast<int>(corpus.size());
  if (vectors.rows() != n_blocks) throw ParameterError("extraction: vector count differs from corpus size");
  if (graph.n_nodes != n_blocks) throw ParameterError("extraction: graph size differs from corpus size");
  if (params.n > n_blocks) {
    throw ParameterError("extraction: n=" + std::to_string(params.n) + " exceeds " + std::to_string(n_blocks) + " blocks");
  }

  ExtractionRun run;
  run.kmeans = kmeans(vectors, params.n, params.kmeans_iterations, mix_seed(params.seed, 1), params.kmeans_metric);
  run.spectral = spectral(graph, params.n, params.kmeans_iterations, mix_seed(params.seed, 2), params.dense_eigen_limit);

  std::vector<Job> jobs;
  for (const ClusterResult* result : {&run.kmeans, &run.spectral}) {
    const EmbeddingMatrix& points = result->algorithm == ClusterAlgorithm::kmeans ? vectors : result->space;
    for (int i = 0; i < params.n; ++i) {
      const auto members = result->members(i);
      const auto job_index = jobs.size();
      const auto sample = sample_cluster(i, members, points, result->centers.row(i).transpose(), params.c,
                                         mix_seed(params.seed, 100 + job_index));
      Job job{{result->algorithm, i}, {}};
      for (int id : sample.all()) job.texts.push_back(corpus.blocks[id].text);
      jobs.push_back(std::move(job));
    }
  }

  const std::size_t wave = params.sequential ? 1 : static_cast<std::size_t>(params.in_flight);
  for (std::size_t begin = 0; begin < jobs.size(); begin += wave) {
    const std::size_t end = std::min(jobs.size(), begin + wave);
    const auto& known = run.raw.keywords();
    std::vector<ChatRequest> requests(end - begin);
    for (std::size_t j = begin; j < end; ++j) {
      std::vector<std::string> previous;
      if (known.size() <= static_cast<std::size_t>(params.m)) {
        previous = known;
      } else {
        Rng rng(mix_seed(params.seed, 10000 + j));
        auto picks = rng.sample_indices(known.size(), static_cast<std::size_t>(params.m));
        std::sort(picks.begin(), picks.end());
        for (auto idx : picks) previous.push_back(known[idx]);
      }
      auto prompt = build_task1_prompt(jobs[j].texts, previous, params, corpus.tokenizer_id);
      auto& req = requests[j - begin];
      req.prompt = std::move(prompt.text);
      req.fixed_tokens = prompt.fixed_tokens;
      req.max_output_tokens = params.l1 * (params.l2 + 1);
      req.task = TaskId::keyword_extraction;
    }
    std::vector<std::string> responses(requests.size());
    parallel_for(
        requests.size(),
        [&](std::size_t r) {
          const auto& ref = jobs[begin + r].ref;
          try {
            responses[r] = llm.complete(requests[r]);
          } catch (const ProviderError& e) {
            throw with_context(e, std::string(to_string(ref.algorithm)) + " cluster " + std::to_string(ref.cluster));
          }
        },
        static_cast<unsigned>(requests.size()));
    for (std::size_t r = 0; r < responses.size(); ++r) {
      const auto& ref = jobs[begin + r].ref;
      auto parsed = parse_keywords(responses[r], params.l2, corpus.tokenizer_id, warnings);
      if (parsed.size() > static_cast<std::size_t>(params.l1)) {
        warn(warnings, std::string(to_string(ref.algorithm)) + " cluster " + std::to_string(ref.cluster) +
                           ": kept the first " + std::to_string(params.l1) + " of " + std::to_string(parsed.size()) +
                           " keywords");
        parsed.resize(static_cast<std::size_t>(params.l1));
      }
      const ClusterRef refs[] = {ref};
      for (const auto& kw : parsed) run.raw.add(kw, refs);
    }
  }
  run.calls = static_cast<int>(jobs.size());
  return run;
}

KeywordSet extract_keywords(const Corpus& corpus, const EmbeddingMatrix& vectors, const SimilarityGraph& graph,
                            const ExtractionParams& params, LlmClient& llm, Warnings* warnings) {
  return run_extraction(corpus, vectors, graph, params, llm, warnings).raw;
}

KeywordSet refine_keywords(const KeywordSet& raw, const ExtractionParams& params, LlmClient& llm,
                           Warnings* warnings) {
  params.validate();
  if (raw.empty()) throw ParameterError("refine_keywords: raw keyword set is empty");
  const auto& tokenizer_id = llm.options().tokenizer_id;
  const auto& all = raw.keywords();

  std::vector<std::pair<std::size_t, std::size_t>> batches;
  if (count_tokens(build_task2_prompt(all, params, tokenizer_id).text, tokenizer_id) <=
      static_cast<std::size_t>(params.context_tokens)) {
    batches.emplace_back(0, all.size());
  } else {
    const std::size_t limit =
        std::max<std::size_t>(1, static_cast<std::size_t>(params.n) * params.l1 * (params.l2 + 1));
    std::size_t begin = 0, used = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto cost = count_tokens(all[i], tokenizer_id) + 1;
      if (i > begin && used + cost > limit) {
        batches.emplace_back(begin, i);
        begin = i;
        used = 0;
      }
      used += cost;
    }
    batches.emplace_back(begin, all.size());
    warn(warnings, "refinement split into " + std::to_string(batches.size()) + " batches");
  }

  KeywordSet refined;
  const int max_out = 2 * params.n * params.l1 * (params.l2 + 1);
  for (const auto& [begin, end] : batches) {
    const std::span<const std::string> batch(all.data() + begin, end - begin);
    auto prompt = build_task2_prompt(batch, params, tokenizer_id);
    ChatRequest req;
    req.prompt = std::move(prompt.text);
    req.fixed_tokens = prompt.fixed_tokens;
    req.max_output_tokens = std::max(1, max_out);
    req.task = TaskId::keyword_refinement;
    std::string response;
    try {
      response = llm.complete(std::move(req));
    } catch (const ProviderError& e) {
      throw with_context(e, "keyword refinement");
    }
    for (const auto& kw : parse_keywords(response, params.l2, tokenizer_id, warnings)) {
      const auto key = normalize_keyword(kw);
      std::vector<ClusterRef> refs;
      for (std::size_t i = begin; i < end; ++i) {
        if (normalize_keyword(all[i]) == key) refs = raw.provenance_of(i);
      }
      if (refs.empty()) {
        for (std::size_t i = begin; i < end; ++i) {
          const auto other = normalize_keyword(all[i]);
          if (other.find(key) != std::string::npos || key.find(other) != std::string::npos) {
            refs.insert(refs.end(), raw.provenance_of(i).begin(), raw.provenance_of(i).end());
          }
        }
      }
      if (refs.empty()) {
        for (std::size_t i = begin; i < end; ++i) {
          refs.insert(refs.end(), raw.provenance_of(i).begin(), raw.provenance_of(i).end());
        }
      }
      refined.add(kw, refs);
    }
  }
  if (refined.empty()) {
    warn(warnings, "refinement returned no keywords; keeping the raw set");
    return raw;
  }
  return refined;
}

long long kg_token_budget(long long n, long long c, long long T, long long m, long long l1, long long l2,
                          long long L_F) {
  return 2 * n * (2 * c * T + (m + 2 * l1) * (l2 + 1)) + L_F;
}

nlohmann::ordered_json TokenBudget::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["c"] = c;
  j["T"] = T;
  j["m"] = m;
  j["l1"] = l1;
  j["l2"] = l2;
  j["L_F"] = L_F;
  j["computed_max"] = computed_max;
  j["computed_max_without_L_F"] = computed_max - L_F;
  j["reported_max"] = reported_max;
  j["actual_used"] = actual_used;
  j["calls"] = calls;
  j["within_budget"] = within();
  return j;
}

TokenBudget audit_token_budget(const ExtractionParams& params, int T, std::span<const TranscriptRecord> records) {
  TokenBudget b;
  b.n = params.n;
  b.c = params.c;
  b.T = T;
  b.m = params.m;
  b.l1 = params.l1;
  b.l2 = params.l2;
  for (const auto& r : records) {
    if (r.task != TaskId::keyword_extraction && r.task != TaskId::keyword_refinement) continue;
    b.actual_used += static_cast<long long>(r.prompt_tokens + r.response_tokens);
    b.L_F += static_cast<long long>(r.fixed_tokens);
    ++b.calls;
  }
  b.computed_max = kg_token_budget(b.n, b.c, b.T, b.m, b.l1, b.l2, b.L_F);
  return b;
}

}  // namespace autokg
