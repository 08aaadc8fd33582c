#include "depthwise/graph.hpp"

#include <algorithm>
#include <cctype>
#include <fmt/format.h>
#include <set>

#include "depthwise/hashing.hpp"

namespace depthwise {

DepthLevel::DepthLevel(int value) : value_(value) {
  if (value < kMin || value > kMax) {
    throw DomainError(fmt::format("depth level must be 1, 2 or 3, got {}", value));
  }
}

std::vector<std::string> NodeFlags::names() const {
  std::vector<std::string> out;
  if (has(NodeFlag::augmented)) out.emplace_back("augmented");
  if (has(NodeFlag::debias_rewritten)) out.emplace_back("debias_rewritten");
  if (has(NodeFlag::binary_flagged)) out.emplace_back("binary_flagged");
  return out;
}

NodeFlag NodeFlags::parse(std::string_view name) {
  if (name == "augmented") return NodeFlag::augmented;
  if (name == "debias_rewritten") return NodeFlag::debias_rewritten;
  if (name == "binary_flagged") return NodeFlag::binary_flagged;
  throw DataError(fmt::format("unknown node flag '{}'", name));
}

std::string normalize_question_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out;
}

std::string make_node_id(int depth, std::string_view text) {
  DepthLevel level(depth);
  std::string key = std::to_string(level.value());
  key.push_back('\x1f');
  key += normalize_question_text(text);
  return fmt::format("d{}-{}", level.value(), sha256_hex(key).substr(0, 12));
}

KnowledgeGraph::KnowledgeGraph(std::vector<QuestionNode> nodes, std::vector<KnowledgeEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    index_.try_emplace(nodes_[i].id, i);
  }
  for (const auto& e : edges_) {
    auto p = index_.find(e.predecessor_id);
    auto s = index_.find(e.successor_id);
    if (p == index_.end() || s == index_.end()) continue;
    // Only adjacent-depth links count as neighbours.
    if (nodes_[s->second].depth.value() != nodes_[p->second].depth.value() + 1) continue;
    adjacency_[e.successor_id].predecessors.push_back(e.predecessor_id);
    adjacency_[e.predecessor_id].successors.push_back(e.successor_id);
  }
  for (auto& [id, adj] : adjacency_) {
    for (auto* list : {&adj.predecessors, &adj.successors}) {
      std::sort(list->begin(), list->end());
      list->erase(std::unique(list->begin(), list->end()), list->end());
    }
  }
}

bool KnowledgeGraph::contains(std::string_view id) const {
  return index_.find(std::string(id)) != index_.end();
}

const QuestionNode& KnowledgeGraph::node(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) {
    throw LookupError(fmt::format("unknown node id '{}'", id));
  }
  return nodes_[it->second];
}

const std::vector<std::string>& KnowledgeGraph::neighbor_ids(std::string_view id,
                                                             Direction direction) const {
  static const std::vector<std::string> kEmpty;
  if (!contains(id)) {
    throw LookupError(fmt::format("unknown node id '{}'", id));
  }
  auto it = adjacency_.find(std::string(id));
  if (it == adjacency_.end()) return kEmpty;
  return direction == Direction::predecessors ? it->second.predecessors : it->second.successors;
}

std::vector<std::string> KnowledgeGraph::sorted_ids() const {
  std::vector<std::string> ids;
  ids.reserve(index_.size());
  for (const auto& [id, _] : index_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> KnowledgeGraph::ids_at_depth(int depth) const {
  std::vector<std::string> ids;
  for (const auto& [id, i] : index_) {
    if (nodes_[i].depth.value() == depth) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::duplicate_node_id: return "duplicate node id";
    case ViolationKind::empty_question_text: return "empty question text";
    case ViolationKind::empty_reference_answer: return "empty reference answer";
    case ViolationKind::conflicting_flags: return "conflicting flags";
    case ViolationKind::dangling_edge: return "dangling edge endpoint";
    case ViolationKind::self_loop: return "self loop";
    case ViolationKind::duplicate_edge: return "duplicate edge";
    case ViolationKind::non_adjacent_edge: return "non-adjacent depth edge";
    case ViolationKind::missing_predecessors: return "missing predecessors";
    case ViolationKind::predecessor_cap_exceeded: return "predecessor cap exceeded";
    case ViolationKind::orphan_node: return "orphan node";
    case ViolationKind::single_predecessor: return "single predecessor";
  }
  return "unknown";
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                [&](const Violation& v) { return v.kind == kind; }));
}

namespace {

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

void sort_violations(std::vector<Violation>& list) {
  std::sort(list.begin(), list.end(), [](const Violation& a, const Violation& b) {
    return std::tie(a.node_id, a.kind, a.other_id) < std::tie(b.node_id, b.kind, b.other_id);
  });
}

}  // namespace

ValidationReport validate_graph(const KnowledgeGraph& graph, const ValidationPolicy& policy) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, std::string node, std::string other, std::string message) {
    report.violations.push_back({kind, std::move(node), std::move(other), std::move(message)});
  };

  std::set<std::string> seen;
  for (const auto& n : graph.nodes()) {
    if (!seen.insert(n.id).second) {
      add(ViolationKind::duplicate_node_id, n.id, "", "node id appears more than once");
    }
    if (is_blank(n.text)) add(ViolationKind::empty_question_text, n.id, "", "question text is empty");
    if (is_blank(n.reference_answer)) {
      add(ViolationKind::empty_reference_answer, n.id, "", "reference answer is empty");
    }
    if (n.flags.has(NodeFlag::binary_flagged) && n.flags.has(NodeFlag::debias_rewritten)) {
      add(ViolationKind::conflicting_flags, n.id, "",
          "binary_flagged and debias_rewritten are mutually exclusive");
    }
  }

  std::set<std::pair<std::string, std::string>> edge_pairs;
  for (const auto& e : graph.edges()) {
    if (!edge_pairs.emplace(e.predecessor_id, e.successor_id).second) {
      add(ViolationKind::duplicate_edge, e.predecessor_id, e.successor_id, "edge listed more than once");
      continue;
    }
    if (e.predecessor_id == e.successor_id) {
      add(ViolationKind::self_loop, e.predecessor_id, e.successor_id, "edge connects a node to itself");
      continue;
    }
    const bool has_pred = graph.contains(e.predecessor_id);
    const bool has_succ = graph.contains(e.successor_id);
    if (!has_pred || !has_succ) {
      add(ViolationKind::dangling_edge, has_pred ? e.successor_id : e.predecessor_id,
          has_pred ? e.predecessor_id : e.successor_id, "edge endpoint is not a node");
      continue;
    }
    const int dp = graph.node(e.predecessor_id).depth.value();
    const int ds = graph.node(e.successor_id).depth.value();
    if (ds != dp + 1) {
      add(ViolationKind::non_adjacent_edge, e.predecessor_id, e.successor_id,
          fmt::format("edge goes from depth {} to depth {}", dp, ds));
    }
  }

  for (const auto& id : graph.sorted_ids()) {
    const auto& n = graph.node(id);
    const int depth = n.depth.value();
    const auto& preds = graph.predecessor_ids(id);
    if (depth >= 2) {
      if (preds.size() < policy.min_predecessors) {
        add(ViolationKind::missing_predecessors, id, "",
            fmt::format("depth-{} node has {} predecessors", depth, preds.size()));
      } else if (preds.size() > policy.max_predecessors) {
        add(ViolationKind::predecessor_cap_exceeded, id, "",
            fmt::format("{} predecessors, cap is {}", preds.size(), policy.max_predecessors));
      } else if (preds.size() < policy.preferred_min_predecessors) {
        report.warnings.push_back({ViolationKind::single_predecessor, id, "",
                                   fmt::format("only {} direct predecessor(s)", preds.size())});
      }
    }
    if (depth <= 2 && graph.successor_ids(id).empty()) {
      add(ViolationKind::orphan_node, id, "", fmt::format("depth-{} node has no successor", depth));
    }
  }

  sort_violations(report.violations);
  sort_violations(report.warnings);
  return report;
}

std::vector<QuestionNode> neighbors(const KnowledgeGraph& graph, std::string_view node_id,
                                    Direction direction) {
  std::vector<QuestionNode> out;
  for (const auto& id : graph.neighbor_ids(node_id, direction)) {
    out.push_back(graph.node(id));
  }
  return out;
}

std::size_t DepthCensus::total_nodes() const { return nodes[0] + nodes[1] + nodes[2]; }

std::size_t DepthCensus::total_edges() const {
  std::size_t total = 0;
  for (const auto& [_, n] : edges) total += n;
  return total;
}

std::size_t DepthCensus::edges_between(int from, int to) const {
  auto it = edges.find({from, to});
  return it == edges.end() ? 0 : it->second;
}

DepthCensus depth_census(const KnowledgeGraph& graph) {
  DepthCensus census;
  census.edges[{1, 2}] = 0;
  census.edges[{2, 3}] = 0;
  for (const auto& n : graph.nodes()) ++census.nodes[n.depth.index()];
  for (const auto& e : graph.edges()) {
    if (!graph.contains(e.predecessor_id) || !graph.contains(e.successor_id)) continue;
    ++census.edges[{graph.node(e.predecessor_id).depth.value(), graph.node(e.successor_id).depth.value()}];
  }
  return census;
}

}  // namespace depthwise
