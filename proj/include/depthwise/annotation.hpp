#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthwise/graph.hpp"
#include "depthwise/inference.hpp"
#include "depthwise/judging.hpp"

namespace depthwise {

enum class AnnotationKind { relation_c1, question_c2, question_c3, response_rating, question_rewrite };

std::string_view to_string(AnnotationKind kind);
/// Throws ValidationError for unknown names.
AnnotationKind parse_annotation_kind(std::string_view name);

/// Legal labels for categorical kinds, in ascending ordinal order; "1".."5" for ratings. Empty
/// for rewrites, whose label is the replacement question text.
const std::vector<std::string>& label_set(AnnotationKind kind);

/// Ordinal code of a label (1-based position in label_set), used for agreement.
int label_code(AnnotationKind kind, const std::string& label);

struct Annotation {
  std::string batch_id;
  std::string task_id;
  std::string rater_id;
  AnnotationKind kind = AnnotationKind::response_rating;
  std::string label;
  std::string timestamp;

  /// Ratings serialize the label as an integer.
  nlohmann::ordered_json to_json() const;
  /// Accepts an integer or string label. Throws ValidationError.
  static Annotation from_json(const nlohmann::json& j);
};

/// Throws ValidationError when `label` is not legal for `kind`.
void validate_label(AnnotationKind kind, const std::string& label);

struct TaskItem {
  std::string task_id;
  /// What the rater sees.
  nlohmann::ordered_json payload;
  /// Bookkeeping hidden from raters: question id, depth, model, mode, judge score.
  nlohmann::ordered_json source;
  std::vector<std::string> raters;
  bool overlap = false;
};

struct TaskBatch {
  std::string batch_id;
  AnnotationKind kind = AnnotationKind::response_rating;
  std::uint64_t seed = 0;
  double overlap_fraction = 0.0;
  std::vector<std::string> raters;
  std::vector<TaskItem> items;

  const TaskItem* find(const std::string& task_id) const;

  nlohmann::ordered_json to_json() const;
  static TaskBatch from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TaskBatch load(const std::filesystem::path& path);
};

/// Candidate items for relation and rewrite tasks: every depth-2 and depth-3 node with its
/// sub-questions (relation kinds), or every binary-flagged node (rewrites).
std::vector<TaskItem> relation_candidates(const KnowledgeGraph& graph, AnnotationKind kind);

/// Candidate items for rating tasks: one per stored response. The model identity stays in
/// `source`; the reference answer enters the payload only when `show_reference` is set.
std::vector<TaskItem> rating_candidates(const KnowledgeGraph& graph, const ResponseStore& responses,
                                        const VerdictStore* verdicts, const std::string& rubric_summary,
                                        bool show_reference = false);

struct BatchSpec {
  std::string batch_id;  // derived from the content when empty
  AnnotationKind kind = AnnotationKind::response_rating;
  std::vector<std::string> raters;
  double overlap_fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t limit = 0;  // 0 keeps every candidate
};

/// Seeded shuffle of the candidates, then the first round(overlap * n) items go to every
/// rater and the rest are dealt round-robin. Throws DomainError for no raters or an overlap
/// fraction outside [0, 1].
TaskBatch create_task_batch(std::vector<TaskItem> candidates, const BatchSpec& spec);

/// Append-only annotation log with last-write-wins state per (rater, task). Thread-safe.
class AnnotationStore {
public:
  /// Replays an existing log; a missing file starts empty.
  explicit AnnotationStore(std::filesystem::path log_path);

  /// Validates against `batch` and appends. Resubmitting an identical label stores nothing new.
  /// Throws LookupError (unknown task), AuthorizationError (rater not assigned) or
  /// ValidationError (kind or label mismatch).
  Annotation submit(const TaskBatch& batch, Annotation annotation);

  /// Current annotations of a batch, ordered by (task, rater).
  std::vector<Annotation> for_batch(const std::string& batch_id) const;
  std::optional<Annotation> get(const std::string& batch_id, const std::string& task_id,
                                const std::string& rater_id) const;
  std::size_t log_size() const;

private:
  using Key = std::tuple<std::string, std::string, std::string>;  // batch, task, rater

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<Key, Annotation> state_;
  std::size_t log_lines_ = 0;
};

/// The next task assigned to `rater_id` that the rater has not annotated, in batch order.
/// Throws AuthorizationError when the rater has no tasks in the batch.
const TaskItem* next_task(const TaskBatch& batch, const AnnotationStore& store, const std::string& rater_id);

/// Krippendorff's alpha over the overlap items, overall and per depth, plus human-mean vs
/// judge alpha for rating batches whose items carry judge scores. Undefined values are null
/// with a reason.
nlohmann::ordered_json agreement_summary(const TaskBatch& batch, const AnnotationStore& store);

/// Question rewrites from a rewrite batch: node id -> replacement text.
std::map<std::string, std::string> collect_rewrites(const TaskBatch& batch, const AnnotationStore& store);

}  // namespace depthwise
