#include <algorithm>
#include <set>
#include <sstream>

#include "autokg/kgraph.hpp"

namespace autokg {
namespace {

struct Node {
  std::string id;
  std::string label;
  std::string role;
};

struct Edge {
  std::string source;
  std::string target;
  std::string kind;
  double weight = 0.0;
};

struct Document {
  std::string name;
  std::vector<Node> nodes;
  std::vector<Edge> edges;
};

std::string keyword_node(int k) { return "k" + std::to_string(k); }

std::string dot_quote(std::string_view s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') {
      out.push_back('\\');
      out.push_back(ch);
    } else if (ch == '\n') {
      out += "\\n";
    } else {
      out.push_back(ch);
    }
  }
  out.push_back('"');
  return out;
}

std::string format_weight(double w) {
  std::ostringstream os;
  os.precision(6);
  os << w;
  return os.str();
}

std::string render(const Document& doc, ExportFormat format) {
  if (format == ExportFormat::json) {
    nlohmann::ordered_json j;
    j["graph"] = doc.name;
    auto nodes = nlohmann::ordered_json::array();
    for (const auto& n : doc.nodes) nodes.push_back({{"id", n.id}, {"label", n.label}, {"role", n.role}});
    auto edges = nlohmann::ordered_json::array();
    for (const auto& e : doc.edges) {
      edges.push_back({{"source", e.source}, {"target", e.target}, {"kind", e.kind}, {"weight", e.weight}});
    }
    j["nodes"] = std::move(nodes);
    j["edges"] = std::move(edges);
    return j.dump(2) + "\n";
  }
  std::string out = "graph " + dot_quote(doc.name) + " {\n";
  for (const auto& n : doc.nodes) {
    const char* shape = n.role == "query" ? "doublecircle" : n.role == "block" ? "box" : "ellipse";
    out += "  " + dot_quote(n.id) + " [label=" + dot_quote(n.label) + ", role=" + dot_quote(n.role) +
           ", shape=" + shape + "];\n";
  }
  for (const auto& e : doc.edges) {
    out += "  " + dot_quote(e.source) + " -- " + dot_quote(e.target) + " [kind=" + dot_quote(e.kind) +
           ", weight=" + format_weight(e.weight) + "];\n";
  }
  out += "}\n";
  return out;
}

void check_keyword(const KnowledgeGraph& kg, int k) {
  if (k < 0 || k >= kg.size()) throw ParameterError("export: unknown keyword id " + std::to_string(k));
}

}  // namespace

ExportFormat parse_export_format(std::string_view name) {
  if (name == "dot") return ExportFormat::dot;
  if (name == "json") return ExportFormat::json;
  throw ParameterError("unknown export format '" + std::string(name) + "' (expected dot or json)");
}

std::string export_subgraph(const KnowledgeGraph& kg, const SubgraphSpec& spec, ExportFormat format) {
  if (!spec.inner_scores.empty() && spec.inner_scores.size() != spec.inner.size()) {
    throw ParameterError("export: inner_scores must align with inner keywords");
  }
  Document doc;
  doc.name = "query";
  doc.nodes.push_back({"q", spec.query_label, "query"});
  std::set<int> inner;
  for (std::size_t t = 0; t < spec.inner.size(); ++t) {
    const int k = spec.inner[t];
    check_keyword(kg, k);
    if (!inner.insert(k).second) continue;
    doc.nodes.push_back({keyword_node(k), kg.keywords[k], "inner"});
    doc.edges.push_back({"q", keyword_node(k), "similarity", spec.inner_scores.empty() ? 1.0 : spec.inner_scores[t]});
  }
  std::set<int> outer;
  for (int k : spec.outer) {
    check_keyword(kg, k);
    if (inner.contains(k) || !outer.insert(k).second) continue;
    doc.nodes.push_back({keyword_node(k), kg.keywords[k], "outer"});
    for (int i : inner) {
      const int w = kg.weight(i, k);
      if (w > 0) doc.edges.push_back({keyword_node(i), keyword_node(k), "adjacency", static_cast<double>(w)});
    }
  }
  std::set<int> blocks;
  for (const auto& b : spec.blocks) {
    if (!blocks.insert(b.id).second) continue;
    const std::string id = "b" + std::to_string(b.id);
    doc.nodes.push_back({id, b.label.empty() ? "block " + std::to_string(b.id) : b.label, "block"});
    const bool linked = inner.contains(b.via_keyword) || outer.contains(b.via_keyword);
    doc.edges.push_back({linked ? keyword_node(b.via_keyword) : "q", id, "retrieval", 1.0});
  }
  return render(doc, format);
}

std::string export_subgraph(const KnowledgeGraph& kg, const SubgraphSpec& spec, std::string_view format) {
  return export_subgraph(kg, spec, parse_export_format(format));
}

std::string export_full(const KnowledgeGraph& kg, ExportFormat format) {
  Document doc;
  doc.name = "keywords";
  for (int k = 0; k < kg.size(); ++k) doc.nodes.push_back({keyword_node(k), kg.keywords[k], "keyword"});
  for (int i = 0; i < kg.weights.outerSize(); ++i) {
    for (WeightMatrix::InnerIterator it(kg.weights, i); it; ++it) {
      if (it.col() > i) {
        doc.edges.push_back({keyword_node(i), keyword_node(static_cast<int>(it.col())), "adjacency",
                             static_cast<double>(it.value())});
      }
    }
  }
  return render(doc, format);
}

}  // namespace autokg
