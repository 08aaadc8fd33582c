#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthwise/gateway.hpp"
#include "depthwise/graph.hpp"
#include "depthwise/prompts.hpp"

namespace depthwise {

/// Model and sampling settings shared by every construction call.
struct ConstructionOptions {
  std::string model_id;
  std::string embedding_model_id;
  double temperature = 0.7;
  double top_p = 1.0;
  int max_tokens = 1024;
  /// Re-generations after a malformed output before the parse error surfaces.
  int parse_retries = 3;
};

struct ClassificationResult {
  std::string question_id;
  std::string explanation;
  int dok_level = 0;  // 1..4
};

ClassificationResult classify_depth(Gateway& gateway, const PromptLibrary& prompts, const ConstructionOptions& options,
                                    const std::string& question, const std::string& key_points,
                                    const std::string& question_id = {});

/// Source material for answering a depth-3 question.
struct D3Context {
  std::string chapter;
  std::string key_points;
  std::string complexity;
};

/// Depth 3 requires `context`. Throws GenerationError on an empty completion.
std::string generate_reference_answer(Gateway& gateway, const PromptLibrary& prompts,
                                      const ConstructionOptions& options, const QuestionNode& node,
                                      const std::optional<D3Context>& context);

struct Decomposition {
  std::vector<std::string> questions;  // 1..4 entries
  std::size_t dropped = 0;             // entries cut by the cap of four
};

/// Asks for the shallower sub-questions of a depth-2 or depth-3 node.
Decomposition deconstruct_question(Gateway& gateway, const PromptLibrary& prompts, const ConstructionOptions& options,
                                   const QuestionNode& node, const std::string& answer);

struct DedupPolicy {
  double same_depth_threshold = 0.9;
  double cross_remove_d2_threshold = 0.9;
  double cross_remove_d1_low = 0.8;
  double cross_remove_d1_high = 0.9;  // exclusive

  /// Throws DomainError when a threshold lies outside [0, 1] or the band is malformed.
  void validate() const;
};

enum class RemovalRule { same_depth, d2_near_d1, d1_near_d2, orphaned };

std::string_view to_string(RemovalRule rule);

struct RemovalRecord {
  std::string removed_id;
  std::optional<std::string> survivor_id;
  RemovalRule rule;
  double similarity = 0.0;
  /// Deeper nodes that lost this node as a direct predecessor.
  std::vector<std::string> affected_parents;
  /// Predecessor edges of a merged depth-2 node that did not fit under the survivor's cap.
  std::vector<std::string> dropped_predecessors;

  nlohmann::ordered_json to_json() const;
};

struct DedupResult {
  KnowledgeGraph graph;
  std::vector<RemovalRecord> removals;
};

/// Embedding-based near-duplicate removal over depths 1 and 2. Embeddings come from
/// `embedding_model_id` through the gateway.
DedupResult deduplicate(const KnowledgeGraph& graph, const DedupPolicy& policy, Gateway& gateway,
                        const std::string& embedding_model_id);

/// Requests `count` complementary sub-questions for `parent_id`. Candidates too similar to an
/// existing node at the child depth, a current child, or an earlier candidate are dropped;
/// when none survive the request is re-generated, then AugmentationError is raised.
std::vector<std::string> augment_subquestions(Gateway& gateway, const PromptLibrary& prompts,
                                              const ConstructionOptions& options, const DedupPolicy& policy,
                                              const KnowledgeGraph& graph, const std::string& parent_id,
                                              const std::vector<std::string>& current_children, std::size_t count);

/// True when the question sentence opens with a yes/no interrogative.
bool is_binary_question(std::string_view text);

/// Ids of nodes whose text looks like a yes/no question, sorted. Nodes already rewritten by a
/// human are skipped.
std::vector<std::string> flag_binary_questions(const KnowledgeGraph& graph);

/// Copy of `graph` with `flag` set on every listed node.
KnowledgeGraph with_flag(const KnowledgeGraph& graph, const std::vector<std::string>& ids, NodeFlag flag);

/// Replaces question texts (id -> new text). Rewritten nodes get fresh content ids, lose
/// binary_flagged and gain debias_rewritten; edges follow the new ids.
KnowledgeGraph apply_rewrites(const KnowledgeGraph& graph, const std::map<std::string, std::string>& rewrites);

struct SeedQuestion {
  std::string question;
  std::string domain;
  std::string chapter;
  std::string key_points;
  std::string complexity;
  std::vector<std::string> reasoning_types;
};

/// Seed file: {"seeds": [{"question", "domain", "chapter", "key_points", "complexity",
/// "reasoning_types"}]}.
std::vector<SeedQuestion> load_seeds(const std::filesystem::path& path);

struct BuildReport {
  std::vector<ClassificationResult> classifications;
  std::vector<std::string> rejected_seeds;  // classified at a level other than 3
  std::size_t truncated_decompositions = 0;
  std::vector<RemovalRecord> removals;
  std::map<std::string, std::vector<std::string>> augmentations;  // parent id -> new child ids
  std::vector<std::string> binary_flagged;

  nlohmann::ordered_json to_json() const;
};

struct BuildResult {
  KnowledgeGraph graph;
  BuildReport report;
};

/// Full pipeline: classify seeds, answer, deconstruct to depth 1, deduplicate, restore
/// sub-question sets by augmentation, and flag binary questions.
BuildResult build_graph(const std::vector<SeedQuestion>& seeds, Gateway& gateway, const PromptLibrary& prompts,
                        const ConstructionOptions& options, const DedupPolicy& policy = {});

}  // namespace depthwise
