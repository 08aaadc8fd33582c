#include "depthwise/graph_io.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "depthwise/hashing.hpp"
#include "depthwise/io_util.hpp"

namespace depthwise {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json graph_to_json(const KnowledgeGraph& graph) {
  std::vector<const QuestionNode*> nodes;
  for (const auto& n : graph.nodes()) nodes.push_back(&n);
  std::stable_sort(nodes.begin(), nodes.end(),
                   [](const QuestionNode* a, const QuestionNode* b) { return a->id < b->id; });
  std::vector<KnowledgeEdge> edges = graph.edges();
  std::stable_sort(edges.begin(), edges.end());

  ordered_json doc;
  doc["nodes"] = ordered_json::array();
  for (const auto* n : nodes) {
    ordered_json rec;
    rec["id"] = n->id;
    rec["depth"] = n->depth.value();
    rec["domain"] = n->domain;
    rec["question"] = n->text;
    rec["reference_answer"] = n->reference_answer;
    rec["flags"] = n->flags.names();
    rec["reasoning_types"] = n->reasoning_types;
    doc["nodes"].push_back(std::move(rec));
  }
  doc["edges"] = ordered_json::array();
  for (const auto& e : edges) {
    ordered_json rec;
    rec["predecessor"] = e.predecessor_id;
    rec["successor"] = e.successor_id;
    doc["edges"].push_back(std::move(rec));
  }
  return doc;
}

KnowledgeGraph graph_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges")) {
    throw DataError("dataset document needs top-level \"nodes\" and \"edges\"");
  }
  std::vector<QuestionNode> nodes;
  for (const auto& rec : doc.at("nodes")) {
    try {
      QuestionNode n;
      n.id = rec.at("id").get<std::string>();
      n.depth = DepthLevel(rec.at("depth").get<int>());
      n.domain = rec.value("domain", "");
      n.text = rec.at("question").get<std::string>();
      n.reference_answer = rec.value("reference_answer", "");
      for (const auto& f : rec.value("flags", json::array())) {
        n.flags.set(NodeFlags::parse(f.get<std::string>()));
      }
      n.reasoning_types = rec.value("reasoning_types", std::vector<std::string>{});
      nodes.push_back(std::move(n));
    } catch (const json::exception& e) {
      throw DataError(fmt::format("malformed node record {}: {}", rec.dump(), e.what()));
    } catch (const DomainError& e) {
      throw DataError(fmt::format("malformed node record {}: {}", rec.dump(), e.what()));
    }
  }
  std::vector<KnowledgeEdge> edges;
  for (const auto& rec : doc.at("edges")) {
    try {
      edges.push_back({rec.at("predecessor").get<std::string>(), rec.at("successor").get<std::string>()});
    } catch (const json::exception& e) {
      throw DataError(fmt::format("malformed edge record {}: {}", rec.dump(), e.what()));
    }
  }
  return KnowledgeGraph(std::move(nodes), std::move(edges));
}

void save_graph(const KnowledgeGraph& graph, const std::filesystem::path& path) {
  write_text_file(path, graph_to_json(graph).dump(2) + "\n");
}

KnowledgeGraph load_graph(const std::filesystem::path& path) {
  return graph_from_json(read_json_file(path));
}

std::string graph_fingerprint(const KnowledgeGraph& graph) {
  return sha256_hex(graph_to_json(graph).dump());
}

}  // namespace depthwise
