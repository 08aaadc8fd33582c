#include "depthwise/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "depthwise/hashing.hpp"
#include "depthwise/io_util.hpp"
#include "depthwise/metrics.hpp"

namespace depthwise {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(AnnotationKind kind) {
  switch (kind) {
    case AnnotationKind::relation_c1: return "relation_c1";
    case AnnotationKind::question_c2: return "question_c2";
    case AnnotationKind::question_c3: return "question_c3";
    case AnnotationKind::response_rating: return "response_rating";
    case AnnotationKind::question_rewrite: return "question_rewrite";
  }
  return "unknown";
}

AnnotationKind parse_annotation_kind(std::string_view name) {
  for (auto k : {AnnotationKind::relation_c1, AnnotationKind::question_c2, AnnotationKind::question_c3,
                 AnnotationKind::response_rating, AnnotationKind::question_rewrite}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError(fmt::format("unknown annotation kind '{}'", name));
}

const std::vector<std::string>& label_set(AnnotationKind kind) {
  static const std::vector<std::string> c1 = {"insufficient", "partial", "comprehensive"};
  static const std::vector<std::string> c2 = {"insufficient", "partial", "fully_implicit"};
  static const std::vector<std::string> c3 = {"binary", "open_ended"};
  static const std::vector<std::string> rating = {"1", "2", "3", "4", "5"};
  static const std::vector<std::string> none;
  switch (kind) {
    case AnnotationKind::relation_c1: return c1;
    case AnnotationKind::question_c2: return c2;
    case AnnotationKind::question_c3: return c3;
    case AnnotationKind::response_rating: return rating;
    case AnnotationKind::question_rewrite: return none;
  }
  return none;
}

void validate_label(AnnotationKind kind, const std::string& label) {
  if (kind == AnnotationKind::question_rewrite) {
    if (normalize_question_text(label).empty()) throw ValidationError("rewrite text must be non-empty");
    return;
  }
  const auto& labels = label_set(kind);
  if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
    throw ValidationError(fmt::format("label '{}' is not valid for {} (expected one of: {})", label, to_string(kind),
                                      fmt::join(labels, ", ")));
  }
}

int label_code(AnnotationKind kind, const std::string& label) {
  validate_label(kind, label);
  const auto& labels = label_set(kind);
  if (labels.empty()) throw ValidationError(fmt::format("{} labels have no ordinal code", to_string(kind)));
  return static_cast<int>(std::find(labels.begin(), labels.end(), label) - labels.begin()) + 1;
}

ordered_json Annotation::to_json() const {
  ordered_json j;
  j["batch_id"] = batch_id;
  j["task_id"] = task_id;
  j["rater_id"] = rater_id;
  j["kind"] = std::string(to_string(kind));
  if (kind == AnnotationKind::response_rating) {
    j["label"] = std::stoi(label);
  } else {
    j["label"] = label;
  }
  j["timestamp"] = timestamp;
  return j;
}

Annotation Annotation::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("annotation must be a JSON object");
  Annotation a;
  try {
    a.batch_id = j.at("batch_id").get<std::string>();
    a.task_id = j.at("task_id").get<std::string>();
    a.rater_id = j.at("rater_id").get<std::string>();
    a.kind = parse_annotation_kind(j.at("kind").get<std::string>());
    const auto& label = j.at("label");
    if (label.is_number_integer()) {
      a.label = std::to_string(label.get<long long>());
    } else {
      a.label = label.get<std::string>();
    }
    if (j.contains("timestamp")) a.timestamp = j.at("timestamp").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed annotation: {}", e.what()));
  }
  if (a.rater_id.empty()) throw ValidationError("rater_id must be non-empty");
  validate_label(a.kind, a.label);
  return a;
}

// ---------------------------------------------------------------------------
// Batches

const TaskItem* TaskBatch::find(const std::string& task_id) const {
  auto it = std::find_if(items.begin(), items.end(), [&](const TaskItem& t) { return t.task_id == task_id; });
  return it == items.end() ? nullptr : &*it;
}

ordered_json TaskBatch::to_json() const {
  ordered_json j;
  j["batch_id"] = batch_id;
  j["kind"] = std::string(to_string(kind));
  j["seed"] = seed;
  j["overlap_fraction"] = overlap_fraction;
  j["raters"] = raters;
  j["items"] = ordered_json::array();
  for (const auto& item : items) {
    ordered_json t;
    t["task_id"] = item.task_id;
    t["raters"] = item.raters;
    t["overlap"] = item.overlap;
    t["payload"] = item.payload;
    t["source"] = item.source;
    j["items"].push_back(std::move(t));
  }
  return j;
}

TaskBatch TaskBatch::from_json(const json& j) {
  try {
    TaskBatch b;
    b.batch_id = j.at("batch_id").get<std::string>();
    b.kind = parse_annotation_kind(j.at("kind").get<std::string>());
    b.seed = j.at("seed").get<std::uint64_t>();
    b.overlap_fraction = j.at("overlap_fraction").get<double>();
    b.raters = j.at("raters").get<std::vector<std::string>>();
    for (const auto& t : j.at("items")) {
      TaskItem item;
      item.task_id = t.at("task_id").get<std::string>();
      item.raters = t.at("raters").get<std::vector<std::string>>();
      item.overlap = t.at("overlap").get<bool>();
      item.payload = t.at("payload");
      item.source = t.at("source");
      if (item.raters.empty()) throw DataError(fmt::format("task {} has no raters", item.task_id));
      b.items.push_back(std::move(item));
    }
    return b;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed task batch: {}", e.what()));
  } catch (const ValidationError& e) {
    throw DataError(fmt::format("malformed task batch: {}", e.what()));
  }
}

void TaskBatch::save(const std::filesystem::path& path) const { write_text_file(path, to_json().dump(2) + "\n"); }

TaskBatch TaskBatch::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

namespace {

ordered_json qa(const QuestionNode& n) { return {{"text", n.text}, {"answer", n.reference_answer}}; }

ordered_json qa_list(const KnowledgeGraph& graph, const std::vector<std::string>& ids) {
  ordered_json out = ordered_json::array();
  for (const auto& id : ids) out.push_back(qa(graph.node(id)));
  return out;
}

ordered_json node_source(const QuestionNode& n) {
  return {{"question_id", n.id}, {"depth", n.depth.value()}, {"domain", n.domain}};
}

}  // namespace

std::vector<TaskItem> relation_candidates(const KnowledgeGraph& graph, AnnotationKind kind) {
  std::vector<TaskItem> out;
  for (const auto& id : graph.sorted_ids()) {
    const auto& n = graph.node(id);
    TaskItem item;
    switch (kind) {
      case AnnotationKind::relation_c1: {
        const auto& subs = graph.predecessor_ids(id);
        if (n.depth.value() < 2 || subs.empty()) continue;
        item.payload = {{"question", qa(n)}, {"sub_questions", qa_list(graph, subs)}};
        break;
      }
      case AnnotationKind::question_c2: {
        const auto& mains = graph.successor_ids(id);
        if (n.depth.value() > 2 || mains.empty()) continue;
        item.payload = {{"sub_question", qa(n)}, {"main_questions", qa_list(graph, mains)}};
        break;
      }
      case AnnotationKind::question_c3:
        item.payload = {{"question", qa(n)}};
        break;
      case AnnotationKind::question_rewrite:
        if (!n.flags.has(NodeFlag::binary_flagged)) continue;
        item.payload = {{"question", qa(n)}};
        break;
      case AnnotationKind::response_rating:
        throw PreconditionError("rating tasks are built from responses, not from the graph alone");
    }
    item.source = node_source(n);
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<TaskItem> rating_candidates(const KnowledgeGraph& graph, const ResponseStore& responses,
                                        const VerdictStore* verdicts, const std::string& rubric_summary,
                                        bool show_reference) {
  std::vector<TaskItem> out;
  for (const auto& r : responses.sorted()) {
    const auto& n = graph.node(r.question_id);
    TaskItem item;
    item.payload = {{"question", n.text}, {"response", r.text}, {"scale", {1, 2, 3, 4, 5}}, {"rubric", rubric_summary}};
    if (show_reference) item.payload["reference_answer"] = n.reference_answer;
    item.source = node_source(n);
    item.source["model_id"] = r.model_id;
    item.source["mode"] = std::string(to_string(r.mode));
    const JudgeVerdict* v = verdicts ? verdicts->find(r.question_id) : nullptr;
    item.source["judge_score"] = v ? ordered_json(v->score) : ordered_json(nullptr);
    out.push_back(std::move(item));
  }
  return out;
}

TaskBatch create_task_batch(std::vector<TaskItem> candidates, const BatchSpec& spec) {
  if (spec.raters.empty()) throw DomainError("a task batch needs at least one rater");
  if (!(spec.overlap_fraction >= 0.0 && spec.overlap_fraction <= 1.0)) {
    throw DomainError(fmt::format("overlap fraction {} outside [0, 1]", spec.overlap_fraction));
  }
  std::set<std::string> distinct(spec.raters.begin(), spec.raters.end());
  if (distinct.size() != spec.raters.size() || distinct.contains("")) {
    throw DomainError("rater ids must be distinct and non-empty");
  }

  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = candidates.size(); i > 1; --i) {
    std::swap(candidates[i - 1], candidates[rng() % i]);
  }
  if (spec.limit > 0 && candidates.size() > spec.limit) candidates.resize(spec.limit);

  TaskBatch batch;
  batch.kind = spec.kind;
  batch.seed = spec.seed;
  batch.overlap_fraction = spec.overlap_fraction;
  batch.raters = spec.raters;
  batch.batch_id = spec.batch_id;
  if (batch.batch_id.empty()) {
    ordered_json basis = {{"kind", std::string(to_string(spec.kind))}, {"seed", spec.seed},
                          {"overlap", spec.overlap_fraction}, {"raters", spec.raters}};
    for (const auto& c : candidates) basis["items"].push_back(c.source);
    batch.batch_id = fmt::format("{}-{}", to_string(spec.kind), sha256_hex(basis.dump()).substr(0, 10));
  }

  const auto n = candidates.size();
  const auto n_overlap = static_cast<std::size_t>(std::llround(spec.overlap_fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) {
    auto& item = candidates[i];
    item.task_id = fmt::format("{}-{:04}", batch.batch_id, i);
    item.overlap = i < n_overlap;
    if (item.overlap) {
      item.raters = spec.raters;
    } else {
      item.raters = {spec.raters[(i - n_overlap) % spec.raters.size()]};
    }
    batch.items.push_back(std::move(item));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Store

AnnotationStore::AnnotationStore(std::filesystem::path log_path) : path_(std::move(log_path)) {
  if (!std::filesystem::exists(path_)) return;
  for (const auto& line : read_jsonl_file(path_)) {
    auto a = Annotation::from_json(line);
    state_[{a.batch_id, a.task_id, a.rater_id}] = std::move(a);
    ++log_lines_;
  }
}

Annotation AnnotationStore::submit(const TaskBatch& batch, Annotation annotation) {
  if (annotation.batch_id != batch.batch_id) {
    throw LookupError(fmt::format("annotation targets batch '{}', not '{}'", annotation.batch_id, batch.batch_id));
  }
  const TaskItem* item = batch.find(annotation.task_id);
  if (!item) throw LookupError(fmt::format("unknown task '{}' in batch '{}'", annotation.task_id, batch.batch_id));
  if (std::find(item->raters.begin(), item->raters.end(), annotation.rater_id) == item->raters.end()) {
    throw AuthorizationError(fmt::format("rater '{}' is not assigned to task '{}'", annotation.rater_id, item->task_id));
  }
  if (annotation.kind != batch.kind) {
    throw ValidationError(fmt::format("batch '{}' collects {} labels, got {}", batch.batch_id, to_string(batch.kind),
                                      to_string(annotation.kind)));
  }
  validate_label(annotation.kind, annotation.label);
  if (annotation.timestamp.empty()) annotation.timestamp = utc_timestamp();

  std::lock_guard lock(mutex_);
  Key key{annotation.batch_id, annotation.task_id, annotation.rater_id};
  if (auto it = state_.find(key); it != state_.end() && it->second.label == annotation.label) return it->second;

  std::filesystem::create_directories(path_.parent_path().empty() ? "." : path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << annotation.to_json().dump() << '\n';
  out.flush();
  if (!out) throw Error(fmt::format("cannot append to annotation log {}", path_.string()));
  ++log_lines_;
  state_[key] = annotation;
  return annotation;
}

std::vector<Annotation> AnnotationStore::for_batch(const std::string& batch_id) const {
  std::lock_guard lock(mutex_);
  std::vector<Annotation> out;
  for (auto it = state_.lower_bound({batch_id, "", ""}); it != state_.end() && std::get<0>(it->first) == batch_id;
       ++it) {
    out.push_back(it->second);
  }
  return out;
}

std::optional<Annotation> AnnotationStore::get(const std::string& batch_id, const std::string& task_id,
                                               const std::string& rater_id) const {
  std::lock_guard lock(mutex_);
  auto it = state_.find({batch_id, task_id, rater_id});
  if (it == state_.end()) return std::nullopt;
  return it->second;
}

std::size_t AnnotationStore::log_size() const {
  std::lock_guard lock(mutex_);
  return log_lines_;
}

const TaskItem* next_task(const TaskBatch& batch, const AnnotationStore& store, const std::string& rater_id) {
  bool assigned = false;
  for (const auto& item : batch.items) {
    if (std::find(item.raters.begin(), item.raters.end(), rater_id) == item.raters.end()) continue;
    assigned = true;
    if (!store.get(batch.batch_id, item.task_id, rater_id)) return &item;
  }
  if (!assigned) throw AuthorizationError(fmt::format("rater '{}' has no tasks in batch '{}'", rater_id, batch.batch_id));
  return nullptr;
}

// ---------------------------------------------------------------------------
// Agreement

namespace {

ordered_json alpha_entry(const RatingMatrix& m, std::size_t n_items) {
  ordered_json j;
  j["n_items"] = n_items;
  try {
    j["alpha"] = krippendorff_alpha_ordinal(m);
  } catch (const DomainError& e) {
    j["alpha"] = nullptr;
    j["reason"] = e.what();
  }
  return j;
}

}  // namespace

ordered_json agreement_summary(const TaskBatch& batch, const AnnotationStore& store) {
  ordered_json out;
  out["batch_id"] = batch.batch_id;
  out["kind"] = std::string(to_string(batch.kind));
  const auto annotations = store.for_batch(batch.batch_id);
  out["n_annotations"] = annotations.size();
  if (batch.kind == AnnotationKind::question_rewrite) {
    out["human_human"] = {{"overall", {{"alpha", nullptr}, {"reason", "rewrites are free text"}}}};
    out["human_judge"] = nullptr;
    return out;
  }

  std::map<std::string, std::map<std::string, double>> by_task;  // task -> rater -> code
  for (const auto& a : annotations) by_task[a.task_id][a.rater_id] = label_code(a.kind, a.label);

  // Human-human over the overlap items, overall and per depth.
  std::map<int, std::vector<const TaskItem*>> overlap_by_depth;
  std::vector<const TaskItem*> overlap;
  for (const auto& item : batch.items) {
    if (!item.overlap) continue;
    overlap.push_back(&item);
    overlap_by_depth[item.source.value("depth", 0)].push_back(&item);
  }
  auto matrix = [&](const std::vector<const TaskItem*>& items) {
    RatingMatrix m(batch.raters.size(), std::vector<std::optional<double>>(items.size()));
    for (std::size_t c = 0; c < items.size(); ++c) {
      auto t = by_task.find(items[c]->task_id);
      if (t == by_task.end()) continue;
      for (std::size_t r = 0; r < batch.raters.size(); ++r) {
        if (auto v = t->second.find(batch.raters[r]); v != t->second.end()) m[r][c] = v->second;
      }
    }
    return m;
  };
  ordered_json hh;
  hh["overall"] = alpha_entry(matrix(overlap), overlap.size());
  hh["per_depth"] = ordered_json::object();
  for (const auto& [depth, items] : overlap_by_depth) hh["per_depth"][fmt::format("D{}", depth)] = alpha_entry(matrix(items), items.size());
  out["human_human"] = std::move(hh);

  // Human mean against the judge, over every rated item that carries a judge score.
  if (batch.kind != AnnotationKind::response_rating) {
    out["human_judge"] = nullptr;
    return out;
  }
  std::map<int, RatingMatrix> hj_by_depth;
  RatingMatrix hj(2);
  for (const auto& item : batch.items) {
    auto t = by_task.find(item.task_id);
    const auto judge = item.source.find("judge_score");
    if (t == by_task.end() || judge == item.source.end() || judge->is_null()) continue;
    double sum = 0.0;
    for (const auto& [rater, v] : t->second) sum += v;
    const double human = sum / static_cast<double>(t->second.size());
    const double judged = judge->get<double>();
    hj[0].emplace_back(human);
    hj[1].emplace_back(judged);
    auto& d = hj_by_depth[item.source.value("depth", 0)];
    d.resize(2);
    d[0].emplace_back(human);
    d[1].emplace_back(judged);
  }
  if (hj[0].empty()) {
    out["human_judge"] = {{"overall", {{"n_items", 0}, {"alpha", nullptr}, {"reason", "no judged items rated"}}}};
    return out;
  }
  ordered_json hjj;
  hjj["overall"] = alpha_entry(hj, hj[0].size());
  hjj["per_depth"] = ordered_json::object();
  for (const auto& [depth, m] : hj_by_depth) hjj["per_depth"][fmt::format("D{}", depth)] = alpha_entry(m, m[0].size());
  out["human_judge"] = std::move(hjj);
  return out;
}

std::map<std::string, std::string> collect_rewrites(const TaskBatch& batch, const AnnotationStore& store) {
  if (batch.kind != AnnotationKind::question_rewrite) {
    throw PreconditionError(fmt::format("batch '{}' is not a rewrite batch", batch.batch_id));
  }
  std::map<std::string, std::string> out;
  for (const auto& a : store.for_batch(batch.batch_id)) {
    const TaskItem* item = batch.find(a.task_id);
    if (!item) continue;
    const auto id = item->source.at("question_id").get<std::string>();
    if (auto it = out.find(id); it != out.end() && it->second != a.label) {
      spdlog::warn("task {} has conflicting rewrites; keeping the first by rater id", a.task_id);
      continue;
    }
    out[id] = a.label;
  }
  return out;
}

}  // namespace depthwise
