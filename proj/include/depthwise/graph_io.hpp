#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "depthwise/graph.hpp"

namespace depthwise {

/// Dataset document: {"nodes": [...], "edges": [...]} with nodes and edges in sorted order.
nlohmann::ordered_json graph_to_json(const KnowledgeGraph& graph);
KnowledgeGraph graph_from_json(const nlohmann::json& doc);

void save_graph(const KnowledgeGraph& graph, const std::filesystem::path& path);
KnowledgeGraph load_graph(const std::filesystem::path& path);

/// SHA-256 over the serialized dataset document; identifies a graph version in manifests.
std::string graph_fingerprint(const KnowledgeGraph& graph);

}  // namespace depthwise
