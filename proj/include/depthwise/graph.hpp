#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "depthwise/errors.hpp"

namespace depthwise {

/// Depth-of-knowledge level of a question: 1 (recall), 2 (application), 3 (strategic).
class DepthLevel {
public:
  static constexpr int kMin = 1;
  static constexpr int kMax = 3;

  explicit DepthLevel(int value);

  int value() const noexcept { return value_; }
  std::size_t index() const noexcept { return static_cast<std::size_t>(value_ - 1); }

  friend auto operator<=>(const DepthLevel&, const DepthLevel&) = default;

private:
  int value_;
};

enum class NodeFlag : std::uint8_t {
  augmented = 1U << 0U,
  debias_rewritten = 1U << 1U,
  binary_flagged = 1U << 2U,
};

class NodeFlags {
public:
  NodeFlags() = default;

  bool has(NodeFlag f) const noexcept { return (bits_ & static_cast<std::uint8_t>(f)) != 0; }
  NodeFlags& set(NodeFlag f) noexcept {
    bits_ |= static_cast<std::uint8_t>(f);
    return *this;
  }
  NodeFlags& clear(NodeFlag f) noexcept {
    bits_ &= static_cast<std::uint8_t>(~static_cast<std::uint8_t>(f));
    return *this;
  }
  bool empty() const noexcept { return bits_ == 0; }

  /// Flag names in a fixed order: augmented, debias_rewritten, binary_flagged.
  std::vector<std::string> names() const;
  static NodeFlag parse(std::string_view name);

  friend bool operator==(const NodeFlags&, const NodeFlags&) = default;

private:
  std::uint8_t bits_ = 0;
};

struct QuestionNode {
  std::string id;
  DepthLevel depth{1};
  std::string domain;
  std::string text;
  std::string reference_answer;
  NodeFlags flags;
  std::vector<std::string> reasoning_types;
};

struct KnowledgeEdge {
  std::string predecessor_id;
  std::string successor_id;

  friend auto operator<=>(const KnowledgeEdge&, const KnowledgeEdge&) = default;
};

/// Content-stable node id: short hash of the depth and the whitespace/case-normalized text.
std::string make_node_id(int depth, std::string_view text);

/// Lowercase ASCII, collapse whitespace runs to one space, trim.
std::string normalize_question_text(std::string_view text);

enum class Direction { predecessors, successors };

/// Immutable layered question graph.
///
/// Construction never rejects input: duplicate ids, dangling edges and other invariant
/// breaches are kept so that validate_graph() can report them. Lookups resolve a duplicated
/// id to its first occurrence.
class KnowledgeGraph {
public:
  KnowledgeGraph() = default;
  KnowledgeGraph(std::vector<QuestionNode> nodes, std::vector<KnowledgeEdge> edges);

  const std::vector<QuestionNode>& nodes() const noexcept { return nodes_; }
  const std::vector<KnowledgeEdge>& edges() const noexcept { return edges_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }

  bool contains(std::string_view id) const;
  /// Throws LookupError for unknown ids.
  const QuestionNode& node(std::string_view id) const;

  /// Ids of direct neighbours at the adjacent depth, sorted, without duplicates.
  const std::vector<std::string>& neighbor_ids(std::string_view id, Direction direction) const;
  const std::vector<std::string>& predecessor_ids(std::string_view id) const {
    return neighbor_ids(id, Direction::predecessors);
  }
  const std::vector<std::string>& successor_ids(std::string_view id) const {
    return neighbor_ids(id, Direction::successors);
  }

  /// Node ids sorted ascending.
  std::vector<std::string> sorted_ids() const;
  /// Node ids at `depth`, sorted ascending.
  std::vector<std::string> ids_at_depth(int depth) const;

private:
  struct Adjacency {
    std::vector<std::string> predecessors;
    std::vector<std::string> successors;
  };

  std::vector<QuestionNode> nodes_;
  std::vector<KnowledgeEdge> edges_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, Adjacency> adjacency_;
};

enum class ViolationKind {
  duplicate_node_id,
  empty_question_text,
  empty_reference_answer,
  conflicting_flags,
  dangling_edge,
  self_loop,
  duplicate_edge,
  non_adjacent_edge,
  missing_predecessors,
  predecessor_cap_exceeded,
  orphan_node,
  single_predecessor,  // soft: only ever reported as a warning
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string node_id;
  std::string other_id;  // second endpoint for edge violations, empty otherwise
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<Violation> warnings;

  bool ok() const noexcept { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
};

struct ValidationPolicy {
  std::size_t max_predecessors = 4;
  std::size_t min_predecessors = 1;
  /// Nodes with fewer predecessors than this (but at least min_predecessors) get a warning.
  std::size_t preferred_min_predecessors = 2;
};

/// Checks every structural invariant. Violations are sorted by (node id, kind, other id).
ValidationReport validate_graph(const KnowledgeGraph& graph, const ValidationPolicy& policy = {});

/// Direct neighbours of `node_id`, sorted by id. Throws LookupError for unknown ids.
std::vector<QuestionNode> neighbors(const KnowledgeGraph& graph, std::string_view node_id,
                                    Direction direction);

struct DepthCensus {
  std::array<std::size_t, 3> nodes{};
  /// Keyed by (predecessor depth, successor depth).
  std::map<std::pair<int, int>, std::size_t> edges;

  std::size_t total_nodes() const;
  std::size_t total_edges() const;
  std::size_t edges_between(int from, int to) const;
};

DepthCensus depth_census(const KnowledgeGraph& graph);

}  // namespace depthwise
