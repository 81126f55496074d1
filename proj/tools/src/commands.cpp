#include "autokg_tools/commands.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <autokg/hybrid.hpp>
#include <fstream>
#include <iostream>

#include "autokg_tools/pipeline.hpp"

namespace autokg::cli {
namespace {

EngineConfig load_config(const std::filesystem::path& path) {
  if (path.empty()) {
    EngineConfig c;
    c.validate();
    return c;
  }
  return EngineConfig::load(path);
}

std::string excerpt(const std::string& text, std::size_t width) {
  std::string flat;
  for (char ch : text) flat += (ch == '\n' || ch == '\t') ? ' ' : ch;
  if (flat.size() <= width) return flat;
  return flat.substr(0, width) + "...";
}

void write_output(const std::filesystem::path& path, const std::string& bytes, std::ostream& out) {
  if (path.empty()) {
    out << bytes;
    return;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, bytes);
  out << "wrote " << path.string() << "\n";
}

bool has_kg_magic(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  in.read(magic, sizeof magic);
  return in.gcount() == 8 && std::string_view(magic, 8) == "AUTOKGKG";
}

}  // namespace

int cmd_build(const BuildCommand& cmd, std::ostream& out) {
  auto config = EngineConfig::load(cmd.config);
  if (cmd.output_dir) config.output_dir = *cmd.output_dir;
  if (cmd.seed) {
    config.seed = *cmd.seed;
    config.extraction.seed = *cmd.seed;
  }
  const auto result = run_build(config);
  const auto& r = result.report;
  out << fmt::format("built {} ({} blocks, {} keywords, {} edges)\n", result.paths.kg().string(), r.blocks,
                     r.refined_keywords, r.kg.edges);
  for (const auto& p : r.phases) out << fmt::format("  {:<17} {:>9.3f} s\n", p.phase, p.seconds);
  out << fmt::format("  raw keywords {} (bound {}), tokens used {} of {} computed (reference {})\n",
                     r.raw_keywords, r.raw_keyword_bound, r.budget.actual_used, r.budget.computed_max,
                     r.budget.reported_max);
  out << "  report " << result.paths.report().string() << "\n";
  return kExitOk;
}

int cmd_query(const QueryCommand& cmd, std::ostream& out) {
  const auto config = load_config(cmd.config);
  if (cmd.output != "text" && cmd.output != "json") throw ConfigError("--output must be text or json");
  auto build = load_build(config, cmd.kg);
  HybridSearcher searcher(build.kg, build.corpus, build.vectors, {.threads = config.threads});

  AnswerOptions options;
  options.params = config.search;
  options.mode = parse_search_mode(cmd.search_mode);
  options.token_limit = config.token_limit;
  options.max_response_tokens = config.max_response_tokens;
  options.language = config.extraction.language;
  options.dry_run = cmd.dry_run;

  std::unique_ptr<LlmClient> llm;
  if (!cmd.dry_run) {
    LlmClientOptions llm_options;
    llm_options.max_retries = config.llm.max_retries;
    llm_options.in_flight_limit = config.llm.in_flight_limit;
    llm_options.tokenizer_id = config.tokenizer;
    llm_options.model_name = config.llm.model_name;
    llm = std::make_unique<LlmClient>(std::shared_ptr<ChatProvider>(make_chat_provider(config.llm, config.tokenizer)),
                                      llm_options);
  }
  const auto answer = answer_query(cmd.query, searcher, *build.embedder, options, llm.get());

  if (cmd.output == "json") {
    auto j = to_json(answer);
    if (cmd.dry_run) j["prompt"] = answer.prompt.text;
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  if (cmd.dry_run) {
    out << answer.prompt.text << "\n";
  } else {
    out << answer.answer << "\n";
  }
  out << fmt::format("\nsearch mode: {}  prompt tokens: {}  blocks in prompt: {} (omitted {})\n",
                     to_string(answer.mode), answer.prompt.token_count, answer.prompt.included_blocks.size(),
                     answer.prompt.omitted_blocks);
  out << "keywords:\n";
  if (answer.result.keywords.empty()) out << "  (none)\n";
  for (const auto& k : answer.result.keywords) {
    if (k.stage == KeywordStage::similar) {
      out << fmt::format("  [{}] {}  angle {:.4f}\n", to_string(k.stage), k.text, k.angle);
    } else {
      out << fmt::format("  [{}] {}  via '{}' weight {}\n", to_string(k.stage), k.text,
                         build.kg.keywords[static_cast<std::size_t>(k.via_keyword)], k.weight);
    }
  }
  out << "blocks:\n";
  for (const auto& b : answer.result.blocks) {
    const auto& block = build.corpus[static_cast<std::size_t>(b.id)];
    std::string via;
    if (b.via_keyword >= 0) via = " via '" + build.kg.keywords[static_cast<std::size_t>(b.via_keyword)] + "'";
    out << fmt::format("  #{} [{}{}] angle {:.4f} {}: {}\n", b.id, to_string(b.stage), via, b.angle, block.source,
                       excerpt(block.text, 60));
  }
  for (const auto& w : answer.result.warnings) spdlog::warn("{}", w);
  return kExitOk;
}

int cmd_bench(const BenchCommand& cmd, std::ostream& out) {
  if (cmd.repetitions < 1) throw ConfigError("--repetitions must be >= 1");
  if (cmd.vector_count < 1) throw ConfigError("--vector-count must be >= 1");
  const auto config = load_config(cmd.config);
  // Timing always uses the offline embedder so runs are comparable.
  EmbeddingProviderConfig embed_config;
  embed_config.dimension = config.embedding.dimension;
  OfflineHashProvider provider(embed_config);

  LatencyReport report;
  std::size_t blocks = 0;
  if (cmd.synthetic_blocks > 0) {
    const auto build = synthetic_build(cmd.synthetic_blocks, cmd.synthetic_keywords, cmd.seed, embed_config,
                                       config.threads);
    out << fmt::format("synthetic corpus: {} blocks, {} keywords, KG built in {:.2f} s\n", build.corpus.size(),
                       build.kg.size(), build.kg_seconds);
    HybridSearcher searcher(build.kg, build.corpus, build.vectors, {.threads = config.threads});
    blocks = build.corpus.size();
    report = compare_latency(searcher, provider, config.search, cmd.repetitions, cmd.vector_count, cmd.seed);
  } else {
    if (config.embedding.kind != ProviderKind::offline_hash) {
      throw ConfigError("bench on a built KG needs the offline embedding provider");
    }
    auto build = load_build(config, cmd.kg);
    HybridSearcher searcher(build.kg, build.corpus, build.vectors, {.threads = config.threads});
    blocks = build.corpus.size();
    report = compare_latency(searcher, provider, config.search, cmd.repetitions, cmd.vector_count, cmd.seed);
  }
  out << fmt::format("{:<28}{:>14}\n", "search", "mean (s)");
  out << fmt::format("{:<28}{:>14.6f}\n", "hybrid (defaults)", report.hybrid_mean);
  out << fmt::format("{:<28}{:>14.6f}\n", fmt::format("vector-only top-{}", report.vector_count), report.vector_mean);
  out << fmt::format("blocks {}  repetitions {}  hybrid/vector ratio {:.4f}\n", blocks, report.repetitions,
                     report.ratio());
  return kExitOk;
}

int cmd_export(const ExportCommand& cmd, std::ostream& out) {
  const auto format = parse_export_format(cmd.format);
  if (cmd.query.empty()) {
    const auto kg = load_kg(cmd.kg);
    write_output(cmd.out, export_full(kg, format), out);
    return kExitOk;
  }
  const auto config = load_config(cmd.config);
  auto build = load_build(config, cmd.kg);
  HybridSearcher searcher(build.kg, build.corpus, build.vectors, {.threads = config.threads});
  const auto result = searcher.search(cmd.query, *build.embedder, config.search);

  SubgraphSpec spec;
  spec.query_label = cmd.query;
  for (const auto& k : result.keywords) {
    if (k.stage == KeywordStage::similar) {
      spec.inner.push_back(k.id);
      spec.inner_scores.push_back(std::cos(k.angle));
    } else if (std::find(spec.outer.begin(), spec.outer.end(), k.id) == spec.outer.end()) {
      spec.outer.push_back(k.id);
    }
  }
  for (const auto& b : result.blocks) {
    spec.blocks.push_back({b.id, excerpt(build.corpus[static_cast<std::size_t>(b.id)].text, 40), b.via_keyword});
  }
  write_output(cmd.out, export_subgraph(build.kg, spec, format), out);
  return kExitOk;
}

int cmd_inspect(const InspectCommand& cmd, std::ostream& out) {
  const auto& path = cmd.path;
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  if (has_kg_magic(path)) {
    const auto kg = load_kg(path);
    nlohmann::ordered_json j;
    j["kind"] = "knowledge_graph";
    j["manifest"] = read_kg_manifest(path);
    j["diagnostics"] = diagnose(kg).to_json();
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  const auto name = path.filename().string();
  if (name.ends_with("transcript.jsonl")) {
    const auto records = Transcript::read(path);
    nlohmann::ordered_json j;
    j["kind"] = "transcript";
    j["calls"] = records.size();
    for (int t = 1; t <= 3; ++t) {
      std::size_t calls = 0, tokens = 0;
      for (const auto& r : records) {
        if (static_cast<int>(r.task) != t) continue;
        ++calls;
        tokens += r.prompt_tokens + r.response_tokens;
      }
      j["task" + std::to_string(t)] = {{"calls", calls}, {"tokens", tokens}};
    }
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  if (path.extension() == ".jsonl") {
    const auto corpus = load_corpus(path);
    std::size_t tokens = 0, largest = 0;
    for (const auto& b : corpus.blocks) {
      tokens += b.token_count;
      largest = std::max(largest, b.token_count);
    }
    nlohmann::ordered_json j{{"kind", "corpus"},
                             {"blocks", corpus.size()},
                             {"tokens", tokens},
                             {"largest_block", largest},
                             {"content_hash", corpus.content_hash()}};
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot inspect " + path.string() + ": " + e.what());
  }
  nlohmann::ordered_json j;
  if (doc.contains("keywords") && doc.contains("provenance")) {
    j["kind"] = "keywords";
    j["count"] = doc["keywords"].size();
    j["keywords"] = doc["keywords"];
  } else if (doc.contains("weights") || doc.contains("n_nodes")) {
    const auto g = parse_graph(read_file(path));
    j = {{"kind", "similarity_graph"}, {"nodes", g.n_nodes}, {"K", g.k},     {"K_requested", g.k_requested},
         {"nnz", g.nnz()},             {"connected", g.connected}};
  } else {
    j["kind"] = "json";
    auto keys = nlohmann::ordered_json::array();
    if (doc.is_object()) {
      for (const auto& [k, v] : doc.items()) keys.push_back(k);
    }
    j["keys"] = std::move(keys);
  }
  out << j.dump(2) << "\n";
  return kExitOk;
}

int report_failure(const std::exception& e, std::ostream& err) {
  err << "error: " << e.what() << "\n";
  if (const auto* p = dynamic_cast<const ProviderError*>(&e); p != nullptr && !p->prompt().empty()) {
    err << "prompt (" << p->prompt().size() << " bytes):\n" << excerpt(p->prompt(), 400) << "\n";
  }
  if (const auto* b = dynamic_cast<const BuildError*>(&e)) return b->config_error() ? kExitUsage : kExitRuntime;
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return kExitUsage;
  return kExitRuntime;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"autokg: keyword knowledge graphs for retrieval-augmented generation", "autokg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(engine_version()));
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  BuildCommand build;
  std::string build_out;
  std::uint64_t build_seed = 0;
  auto* b = app.add_subcommand("build", "Build a knowledge graph from a corpus");
  b->add_option("-c,--config", build.config, "JSON config file")->required()->check(CLI::ExistingFile);
  auto* b_out = b->add_option("-o,--output-dir", build_out, "Override output_dir");
  auto* b_seed = b->add_option("--seed", build_seed, "Override seed");

  QueryCommand query;
  auto* q = app.add_subcommand("query", "Answer a question from a built knowledge graph");
  q->add_option("-c,--config", query.config, "JSON config file")->check(CLI::ExistingFile);
  q->add_option("--kg", query.kg, "knowledge_graph.akg")->required();
  q->add_option("query", query.query, "Question")->required();
  q->add_option("--search-mode", query.search_mode)->check(CLI::IsMember({"hybrid", "vector-only"}));
  q->add_option("--output", query.output)->check(CLI::IsMember({"text", "json"}));
  q->add_flag("--dry-run", query.dry_run, "Print the assembled prompt, skip the LLM");

  BenchCommand bench;
  auto* be = app.add_subcommand("bench", "Hybrid vs vector-only search latency");
  be->add_option("-c,--config", bench.config, "JSON config file")->check(CLI::ExistingFile);
  auto* be_kg = be->add_option("--kg", bench.kg, "knowledge_graph.akg");
  auto* be_syn = be->add_option("--synthetic", bench.synthetic_blocks, "Use a synthetic corpus of N blocks")
                     ->check(CLI::PositiveNumber);
  be_kg->excludes(be_syn);
  be->add_option("--synthetic-keywords", bench.synthetic_keywords)->check(CLI::PositiveNumber);
  be->add_option("--repetitions", bench.repetitions)->check(CLI::PositiveNumber);
  be->add_option("--vector-count", bench.vector_count)->check(CLI::PositiveNumber);
  be->add_option("--seed", bench.seed);

  ExportCommand exp;
  auto* ex = app.add_subcommand("export", "Export the keyword graph or a query subgraph");
  ex->add_option("-c,--config", exp.config, "JSON config file")->check(CLI::ExistingFile);
  ex->add_option("--kg", exp.kg, "knowledge_graph.akg")->required();
  ex->add_option("--query", exp.query, "Export the subgraph around this query");
  ex->add_option("--format", exp.format)->check(CLI::IsMember({"dot", "json"}));
  ex->add_option("--out", exp.out, "Output file (default stdout)");

  InspectCommand inspect;
  auto* in = app.add_subcommand("inspect", "Summarize an artifact");
  in->add_option("path", inspect.path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_default_logger(spdlog::default_logger());
  try {
    if (b->parsed()) {
      if (*b_out) build.output_dir = build_out;
      if (*b_seed) build.seed = build_seed;
      return cmd_build(build, std::cout);
    }
    if (q->parsed()) return cmd_query(query, std::cout);
    if (be->parsed()) {
      if (!*be_kg && !*be_syn) throw ConfigError("bench needs --kg or --synthetic");
      return cmd_bench(bench, std::cout);
    }
    if (ex->parsed()) return cmd_export(exp, std::cout);
    if (in->parsed()) return cmd_inspect(inspect, std::cout);
  } catch (const std::exception& e) {
    return report_failure(e, std::cerr);
  }
  return kExitUsage;
}

}  // namespace autokg::cli
