#include "depthwise/construction.hpp"

#include <algorithm>
#include <cctype>
#include <fmt/format.h>
#include <set>
#include <spdlog/spdlog.h>

#include "depthwise/io_util.hpp"
#include "depthwise/parallel.hpp"
#include "depthwise/parsing.hpp"

namespace depthwise {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

GenerationRequest make_request(const ConstructionOptions& options, std::string system, std::string user) {
  GenerationRequest req;
  req.model_id = options.model_id;
  req.messages = {{Role::system, std::move(system)}, {Role::user, std::move(user)}};
  req.temperature = options.temperature;
  req.top_p = options.top_p;
  req.max_tokens = options.max_tokens;
  return req;
}

/// Non-empty, trimmed strings under `key` (or the `fallback_key`) of the embedded JSON object.
std::vector<std::string> parse_question_list(const std::string& raw, const std::string& key,
                                             const std::string& fallback_key) {
  const json obj = parse_embedded_object(raw);
  const json* list = nullptr;
  if (obj.contains(key)) {
    list = &obj.at(key);
  } else if (obj.contains(fallback_key)) {
    list = &obj.at(fallback_key);
  }
  if (list == nullptr || !list->is_array()) {
    throw ParseError(fmt::format("model output has no \"{}\" list", key), raw);
  }
  std::vector<std::string> out;
  for (const auto& item : *list) {
    if (!item.is_string()) continue;
    std::string text = trim_copy(item.get<std::string>());
    if (!text.empty()) out.push_back(std::move(text));
  }
  return out;
}

std::vector<std::vector<double>> embed_texts(Gateway& gateway, const std::string& model_id,
                                             const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  if (texts.empty()) return out;
  auto vectors = gateway.embed(texts, model_id);
  out.reserve(vectors.size());
  for (auto& v : vectors) out.push_back(std::move(v.values));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Single-question operations

ClassificationResult classify_depth(Gateway& gateway, const PromptLibrary& prompts, const ConstructionOptions& options,
                                    const std::string& question, const std::string& key_points,
                                    const std::string& question_id) {
  const auto req = make_request(options, prompts.text(PromptId::classify_system),
                                prompts.render(PromptId::classify_user, {{"question", question}, {"key_points", key_points}}));
  return generate_parsed(gateway, req, options.parse_retries, [&](const GenerationResult& r) {
    const auto marked = parse_result_marker(r.text, 1, 4);
    return ClassificationResult{question_id, marked.preamble, marked.value};
  });
}

std::string generate_reference_answer(Gateway& gateway, const PromptLibrary& prompts,
                                      const ConstructionOptions& options, const QuestionNode& node,
                                      const std::optional<D3Context>& context) {
  GenerationRequest req;
  if (node.depth.value() == 3) {
    if (!context) throw PreconditionError(fmt::format("depth-3 node {} needs chapter context", node.id));
    req = make_request(options, prompts.text(PromptId::answer_d3_system),
                       prompts.render(PromptId::answer_d3_user, {{"chapter", context->chapter},
                                                                 {"question", node.text},
                                                                 {"key_points", context->key_points},
                                                                 {"explanation", context->complexity}}));
  } else {
    req = make_request(options, prompts.text(PromptId::answer_system),
                       prompts.render(PromptId::answer_user, {{"question", node.text}}));
  }
  std::string answer = trim_copy(gateway.complete(req).text);
  if (answer.empty()) throw GenerationError(fmt::format("empty reference answer for {}", node.id));
  return answer;
}

Decomposition deconstruct_question(Gateway& gateway, const PromptLibrary& prompts, const ConstructionOptions& options,
                                   const QuestionNode& node, const std::string& answer) {
  const int depth = node.depth.value();
  if (depth < 2) throw PreconditionError(fmt::format("depth-1 node {} cannot be deconstructed", node.id));
  const int child = depth - 1;
  const auto req = make_request(
      options, prompts.text(PromptId::decompose_system),
      prompts.render(child == 2 ? PromptId::decompose_d2_user : PromptId::decompose_d1_user,
                     {{"question", node.text}, {"answer", answer}}));
  const std::string key = fmt::format("Depth-{}_questions", child);
  const std::string parent_norm = normalize_question_text(node.text);

  Decomposition out = generate_parsed(gateway, req, options.parse_retries, [&](const GenerationResult& r) {
    Decomposition d;
    std::set<std::string> seen{parent_norm};
    for (auto& q : parse_question_list(r.text, key, "complementary_" + key)) {
      if (seen.insert(normalize_question_text(q)).second) d.questions.push_back(std::move(q));
    }
    if (d.questions.empty()) throw ParseError(fmt::format("no usable {} in model output", key), r.text);
    return d;
  });
  if (out.questions.size() > 4) {
    out.dropped = out.questions.size() - 4;
    out.questions.resize(4);
    spdlog::info("decomposition of {} returned {} extra sub-questions; kept the first 4", node.id, out.dropped);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deduplication

void DedupPolicy::validate() const {
  for (double t : {same_depth_threshold, cross_remove_d2_threshold, cross_remove_d1_low, cross_remove_d1_high}) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError(fmt::format("similarity threshold {} outside [0, 1]", t));
  }
  if (cross_remove_d1_low > cross_remove_d1_high) throw DomainError("depth-1 removal band is empty");
  if (cross_remove_d1_high > cross_remove_d2_threshold) {
    throw DomainError("depth-1 removal band must end at or below the depth-2 removal threshold");
  }
}

std::string_view to_string(RemovalRule rule) {
  switch (rule) {
    case RemovalRule::same_depth: return "same_depth";
    case RemovalRule::d2_near_d1: return "d2_near_d1";
    case RemovalRule::d1_near_d2: return "d1_near_d2";
    case RemovalRule::orphaned: return "orphaned";
  }
  return "unknown";
}

ordered_json RemovalRecord::to_json() const {
  ordered_json j;
  j["removed_id"] = removed_id;
  j["survivor_id"] = survivor_id ? ordered_json(*survivor_id) : ordered_json(nullptr);
  j["rule"] = std::string(to_string(rule));
  j["similarity"] = similarity;
  j["affected_parents"] = affected_parents;
  if (!dropped_predecessors.empty()) j["dropped_predecessors"] = dropped_predecessors;
  return j;
}

DedupResult deduplicate(const KnowledgeGraph& graph, const DedupPolicy& policy, Gateway& gateway,
                        const std::string& embedding_model_id) {
  policy.validate();
  const auto ids1 = graph.ids_at_depth(1);
  const auto ids2 = graph.ids_at_depth(2);

  std::vector<std::string> texts;
  for (const auto* ids : {&ids1, &ids2}) {
    for (const auto& id : *ids) texts.push_back(graph.node(id).text);
  }
  const auto vectors = embed_texts(gateway, embedding_model_id, texts);
  std::map<std::string, const std::vector<double>*> vec;
  for (std::size_t i = 0; i < ids1.size(); ++i) vec[ids1[i]] = &vectors[i];
  for (std::size_t i = 0; i < ids2.size(); ++i) vec[ids2[i]] = &vectors[ids1.size() + i];
  auto cos = [&](const std::string& a, const std::string& b) { return cosine_similarity(*vec.at(a), *vec.at(b)); };

  std::vector<RemovalRecord> removals;
  std::map<std::string, std::string> merged_into;
  std::set<std::string> removed;

  // Same-depth merges: each node folds into the smallest-id earlier survivor it matches.
  std::array<std::vector<std::string>, 2> survivors;
  for (int d = 0; d < 2; ++d) {
    for (const auto& id : d == 0 ? ids1 : ids2) {
      const std::string* match = nullptr;
      double sim = 0.0;
      for (const auto& s : survivors[d]) {
        sim = cos(id, s);
        if (sim >= policy.same_depth_threshold) {
          match = &s;
          break;
        }
      }
      if (match == nullptr) {
        survivors[d].push_back(id);
        continue;
      }
      merged_into[id] = *match;
      removed.insert(id);
      removals.push_back({id, *match, RemovalRule::same_depth, sim, graph.successor_ids(id), {}});
    }
  }
  auto resolve = [&](const std::string& id) {
    auto it = merged_into.find(id);
    return it == merged_into.end() ? id : it->second;
  };

  // Depth-2 questions that restate a depth-1 question.
  std::vector<std::string> kept2;
  for (const auto& id2 : survivors[1]) {
    double best = -1.0;
    for (const auto& id1 : survivors[0]) best = std::max(best, cos(id2, id1));
    if (best >= policy.cross_remove_d2_threshold) {
      removed.insert(id2);
      removals.push_back({id2, std::nullopt, RemovalRule::d2_near_d1, best, graph.successor_ids(id2), {}});
    } else {
      kept2.push_back(id2);
    }
  }

  // Depth-1 questions that sit in the similarity band of a depth-2 question.
  for (const auto& id1 : survivors[0]) {
    double best = -1.0;
    for (const auto& id2 : kept2) {
      const double c = cos(id1, id2);
      if (c >= policy.cross_remove_d1_low && c < policy.cross_remove_d1_high) best = std::max(best, c);
    }
    if (best < 0.0) continue;
    std::vector<std::string> parents;
    for (const auto& s : graph.successor_ids(id1)) {
      const auto r = resolve(s);
      if (!removed.contains(r) && std::find(parents.begin(), parents.end(), r) == parents.end()) parents.push_back(r);
    }
    std::sort(parents.begin(), parents.end());
    removed.insert(id1);
    removals.push_back({id1, std::nullopt, RemovalRule::d1_near_d2, best, std::move(parents), {}});
  }

  // Rebuild edges. A depth-2 survivor keeps its own predecessors first and takes merged ones
  // in id order while it stays within the cap.
  constexpr std::size_t kCap = 4;
  std::set<std::pair<std::string, std::string>> edges;
  std::map<std::string, std::set<std::string>> preds_of;
  auto live = [&](const std::string& id) { return !removed.contains(id) || merged_into.contains(id); };
  for (const auto& e : graph.edges()) {
    if (!live(e.predecessor_id) || !live(e.successor_id)) continue;
    const auto p = resolve(e.predecessor_id);
    const auto s = resolve(e.successor_id);
    if (removed.contains(p) || removed.contains(s) || p == s) continue;
    if (e.successor_id != s) continue;  // merged predecessors are handled below
    edges.emplace(p, s);
    preds_of[s].insert(p);
  }
  for (auto& rec : removals) {
    if (rec.rule != RemovalRule::same_depth) continue;
    const auto& survivor = *rec.survivor_id;
    if (removed.contains(survivor)) continue;
    const bool capped = graph.node(survivor).depth.value() >= 2;
    for (const auto& p_raw : graph.predecessor_ids(rec.removed_id)) {
      const auto p = resolve(p_raw);
      if (removed.contains(p) || preds_of[survivor].contains(p)) continue;
      if (capped && preds_of[survivor].size() >= kCap) {
        rec.dropped_predecessors.push_back(p);
        spdlog::info("merge of {} into {} drops predecessor edge from {} (cap {})", rec.removed_id, survivor, p, kCap);
        continue;
      }
      edges.emplace(p, survivor);
      preds_of[survivor].insert(p);
    }
  }

  // Prune sub-questions left without any deeper question.
  for (int depth : {2, 1}) {
    std::set<std::string> has_successor;
    for (const auto& [p, s] : edges) has_successor.insert(p);
    for (const auto& id : graph.ids_at_depth(depth)) {
      if (removed.contains(id) || has_successor.contains(id)) continue;
      removed.insert(id);
      removals.push_back({id, std::nullopt, RemovalRule::orphaned, 0.0, {}, {}});
      for (auto it = edges.begin(); it != edges.end();) {
        it = it->second == id ? edges.erase(it) : std::next(it);
      }
    }
  }

  std::vector<QuestionNode> nodes;
  std::set<std::string> emitted;
  for (const auto& n : graph.nodes()) {
    if (removed.contains(n.id) || !emitted.insert(n.id).second) continue;
    nodes.push_back(n);
  }
  std::vector<KnowledgeEdge> edge_list;
  for (const auto& [p, s] : edges) edge_list.push_back({p, s});
  return {KnowledgeGraph(std::move(nodes), std::move(edge_list)), std::move(removals)};
}

// ---------------------------------------------------------------------------
// Augmentation

std::vector<std::string> augment_subquestions(Gateway& gateway, const PromptLibrary& prompts,
                                              const ConstructionOptions& options, const DedupPolicy& policy,
                                              const KnowledgeGraph& graph, const std::string& parent_id,
                                              const std::vector<std::string>& current_children, std::size_t count) {
  const auto& parent = graph.node(parent_id);
  const int depth = parent.depth.value();
  if (depth < 2) throw PreconditionError(fmt::format("depth-1 node {} has no sub-questions", parent_id));
  if (count == 0 || current_children.size() + count > 4) {
    throw PreconditionError(fmt::format("cannot add {} sub-questions to {} which already has {} (cap 4)", count,
                                        parent_id, current_children.size()));
  }
  const int child = depth - 1;
  const auto req = make_request(
      options, prompts.text(PromptId::decompose_system),
      prompts.render(child == 2 ? PromptId::augment_d2_user : PromptId::augment_d1_user,
                     {{"count", std::to_string(count)},
                      {"question", parent.text},
                      {"answer", parent.reference_answer},
                      {"current_questions", json(current_children).dump()}}));
  const std::string key = fmt::format("complementary_Depth-{}_questions", child);

  std::vector<std::string> reference_texts = current_children;
  for (const auto& id : graph.ids_at_depth(child)) reference_texts.push_back(graph.node(id).text);
  const auto reference = embed_texts(gateway, options.embedding_model_id, reference_texts);

  std::optional<ParseError> last_parse_error;
  CachePolicy cache_policy = CachePolicy::use;
  for (int attempt = 0; attempt <= options.parse_retries; ++attempt, cache_policy = CachePolicy::refresh) {
    const auto result = gateway.complete(req, cache_policy);
    std::vector<std::string> candidates;
    try {
      candidates = parse_question_list(result.text, key, fmt::format("Depth-{}_questions", child));
      if (candidates.empty()) throw ParseError("augmentation returned no questions", result.text);
    } catch (const ParseError& e) {
      last_parse_error = e;
      continue;
    }
    last_parse_error.reset();
    const auto cand_vecs = embed_texts(gateway, options.embedding_model_id, candidates);
    std::vector<std::string> accepted;
    std::vector<const std::vector<double>*> accepted_vecs;
    for (std::size_t i = 0; i < candidates.size() && accepted.size() < count; ++i) {
      bool close = false;
      for (const auto& r : reference) close = close || cosine_similarity(cand_vecs[i], r) >= policy.same_depth_threshold;
      for (const auto* a : accepted_vecs) close = close || cosine_similarity(cand_vecs[i], *a) >= policy.same_depth_threshold;
      if (close) continue;
      accepted.push_back(candidates[i]);
      accepted_vecs.push_back(&cand_vecs[i]);
    }
    if (!accepted.empty()) return accepted;
    spdlog::info("augmentation of {} produced only near-duplicates (attempt {})", parent_id, attempt + 1);
  }
  if (last_parse_error) throw *last_parse_error;
  throw AugmentationError(
      fmt::format("augmentation of {} kept producing near-duplicates of existing questions", parent_id));
}

// ---------------------------------------------------------------------------
// Binary questions and rewrites

bool is_binary_question(std::string_view text) {
  auto is_end = [](char c) { return c == '.' || c == '!' || c == '?' || c == '\n'; };
  std::string_view sentence;
  const auto q = text.find('?');
  if (q != std::string_view::npos) {
    std::size_t start = q;
    while (start > 0 && !is_end(text[start - 1])) --start;
    sentence = text.substr(start, q - start + 1);
  } else {
    std::size_t end = 0;
    while (end < text.size() && !is_end(text[end])) ++end;
    sentence = text.substr(0, end);
  }
  std::string lower = normalize_question_text(sentence);
  if (lower.starts_with("if i understand")) return true;
  std::size_t n = 0;
  while (n < lower.size() && std::isalpha(static_cast<unsigned char>(lower[n]))) ++n;
  static const std::set<std::string, std::less<>> kAuxiliaries = {
      "is", "are", "can", "does", "do", "did", "will", "would", "could", "should", "has", "have", "had"};
  return kAuxiliaries.contains(std::string_view(lower).substr(0, n));
}

std::vector<std::string> flag_binary_questions(const KnowledgeGraph& graph) {
  std::vector<std::string> out;
  for (const auto& id : graph.sorted_ids()) {
    const auto& n = graph.node(id);
    if (n.flags.has(NodeFlag::debias_rewritten)) continue;
    if (is_binary_question(n.text)) out.push_back(id);
  }
  return out;
}

KnowledgeGraph with_flag(const KnowledgeGraph& graph, const std::vector<std::string>& ids, NodeFlag flag) {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  auto nodes = graph.nodes();
  for (auto& n : nodes) {
    if (wanted.contains(n.id)) n.flags.set(flag);
  }
  return {std::move(nodes), graph.edges()};
}

KnowledgeGraph apply_rewrites(const KnowledgeGraph& graph, const std::map<std::string, std::string>& rewrites) {
  std::map<std::string, std::string> renamed;
  auto nodes = graph.nodes();
  for (const auto& [id, text] : rewrites) {
    if (!graph.contains(id)) throw LookupError(fmt::format("rewrite targets unknown node '{}'", id));
    if (trim_copy(text).empty()) throw ValidationError(fmt::format("rewrite of '{}' is empty", id));
  }
  for (auto& n : nodes) {
    auto it = rewrites.find(n.id);
    if (it == rewrites.end()) continue;
    const std::string new_id = make_node_id(n.depth.value(), it->second);
    if (new_id != n.id && graph.contains(new_id)) {
      throw DataError(fmt::format("rewrite of '{}' collides with existing node '{}'", n.id, new_id));
    }
    renamed[n.id] = new_id;
    n.id = new_id;
    n.text = trim_copy(it->second);
    n.flags.clear(NodeFlag::binary_flagged).set(NodeFlag::debias_rewritten);
  }
  auto edges = graph.edges();
  for (auto& e : edges) {
    if (auto it = renamed.find(e.predecessor_id); it != renamed.end()) e.predecessor_id = it->second;
    if (auto it = renamed.find(e.successor_id); it != renamed.end()) e.successor_id = it->second;
  }
  return {std::move(nodes), std::move(edges)};
}

// ---------------------------------------------------------------------------
// Pipeline

std::vector<SeedQuestion> load_seeds(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  const json& list = doc.is_array() ? doc : doc.value("seeds", json());
  if (!list.is_array()) throw DataError(fmt::format("{}: expected a \"seeds\" array", path.string()));
  std::vector<SeedQuestion> out;
  try {
    for (const auto& s : list) {
      SeedQuestion seed;
      seed.question = s.at("question").get<std::string>();
      seed.domain = s.value("domain", "");
      seed.chapter = s.value("chapter", "");
      seed.key_points = s.value("key_points", "");
      seed.complexity = s.value("complexity", "");
      seed.reasoning_types = s.value("reasoning_types", std::vector<std::string>{});
      if (trim_copy(seed.question).empty()) throw DataError("seed question is empty");
      out.push_back(std::move(seed));
    }
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: malformed seed record: {}", path.string(), e.what()));
  }
  return out;
}

ordered_json BuildReport::to_json() const {
  ordered_json j;
  j["classifications"] = ordered_json::array();
  for (const auto& c : classifications) {
    j["classifications"].push_back({{"question_id", c.question_id}, {"dok_level", c.dok_level}});
  }
  j["rejected_seeds"] = rejected_seeds;
  j["truncated_decompositions"] = truncated_decompositions;
  j["removals"] = ordered_json::array();
  for (const auto& r : removals) j["removals"].push_back(r.to_json());
  j["augmentations"] = ordered_json::object();
  for (const auto& [parent, children] : augmentations) j["augmentations"][parent] = children;
  j["binary_flagged"] = binary_flagged;
  return j;
}

namespace {

/// Mutable working copy of the graph during construction.
class GraphBuilder {
public:
  GraphBuilder(Gateway& gateway, const PromptLibrary& prompts, const ConstructionOptions& options, BuildReport& report)
      : gateway_(gateway), prompts_(prompts), options_(options), report_(report) {}

  /// Adds the node when its id is new; returns the id.
  std::string add_node(int depth, const std::string& text, const std::string& domain, bool augmented) {
    const std::string id = make_node_id(depth, text);
    if (!nodes_.contains(id)) {
      QuestionNode n;
      n.id = id;
      n.depth = DepthLevel(depth);
      n.domain = domain;
      n.text = text;
      if (augmented) n.flags.set(NodeFlag::augmented);
      nodes_.emplace(id, std::move(n));
      unanswered_.push_back(id);
    }
    return id;
  }

  QuestionNode& node(const std::string& id) { return nodes_.at(id); }

  void add_edge(const std::string& pred, const std::string& succ) { edges_.insert({pred, succ}); }

  /// Generates reference answers for every node added since the last call.
  void answer_pending() {
    std::sort(unanswered_.begin(), unanswered_.end());
    const auto ids = std::exchange(unanswered_, {});
    std::vector<std::string> todo;
    for (const auto& id : ids) {
      if (nodes_.at(id).reference_answer.empty()) todo.push_back(id);
    }
    auto answers = parallel_map(todo.size(), gateway_.parallelism(), [&](std::size_t i) {
      const auto& n = nodes_.at(todo[i]);
      std::optional<D3Context> ctx;
      if (auto it = contexts_.find(n.id); it != contexts_.end()) ctx = it->second;
      return generate_reference_answer(gateway_, prompts_, options_, n, ctx);
    });
    for (std::size_t i = 0; i < todo.size(); ++i) nodes_.at(todo[i]).reference_answer = std::move(answers[i]);
  }

  void set_context(const std::string& id, D3Context ctx) { contexts_[id] = std::move(ctx); }

  /// Deconstructs each listed node and links the new children. Returns the new child ids.
  std::vector<std::string> expand(const std::vector<std::string>& parents) {
    auto results = parallel_map(parents.size(), gateway_.parallelism(), [&](std::size_t i) {
      const auto& n = nodes_.at(parents[i]);
      return deconstruct_question(gateway_, prompts_, options_, n, n.reference_answer);
    });
    std::set<std::string> children;
    for (std::size_t i = 0; i < parents.size(); ++i) {
      auto& parent = nodes_.at(parents[i]);
      if (results[i].dropped > 0) ++report_.truncated_decompositions;
      for (const auto& text : results[i].questions) {
        const auto id = add_node(parent.depth.value() - 1, text, parent.domain, parent.flags.has(NodeFlag::augmented));
        add_edge(id, parent.id);
        children.insert(id);
      }
      target_[parent.id] = std::min<std::size_t>(4, predecessor_count(parent.id));
    }
    return {children.begin(), children.end()};
  }

  std::size_t predecessor_count(const std::string& id) const {
    return static_cast<std::size_t>(
        std::count_if(edges_.begin(), edges_.end(), [&](const KnowledgeEdge& e) { return e.successor_id == id; }));
  }

  std::vector<std::string> predecessor_texts(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& e : edges_) {
      if (e.successor_id == id) out.push_back(nodes_.at(e.predecessor_id).text);
    }
    return out;
  }

  std::size_t target(const std::string& id) const {
    auto it = target_.find(id);
    return it == target_.end() ? 1 : it->second;
  }

  KnowledgeGraph graph() const {
    std::vector<QuestionNode> nodes;
    for (const auto& [_, n] : nodes_) nodes.push_back(n);
    return {std::move(nodes), {edges_.begin(), edges_.end()}};
  }

  void reset(const KnowledgeGraph& g) {
    nodes_.clear();
    for (const auto& n : g.nodes()) nodes_.emplace(n.id, n);
    edges_ = {g.edges().begin(), g.edges().end()};
  }

private:
  Gateway& gateway_;
  const PromptLibrary& prompts_;
  const ConstructionOptions& options_;
  BuildReport& report_;
  std::map<std::string, QuestionNode> nodes_;
  std::set<KnowledgeEdge> edges_;
  std::vector<std::string> unanswered_;
  std::map<std::string, D3Context> contexts_;
  std::map<std::string, std::size_t> target_;
};

}  // namespace

BuildResult build_graph(const std::vector<SeedQuestion>& seeds, Gateway& gateway, const PromptLibrary& prompts,
                        const ConstructionOptions& options, const DedupPolicy& policy) {
  policy.validate();
  BuildResult result;
  BuildReport& report = result.report;
  GraphBuilder builder(gateway, prompts, options, report);

  auto classified = parallel_map(seeds.size(), gateway.parallelism(), [&](std::size_t i) {
    return classify_depth(gateway, prompts, options, seeds[i].question, seeds[i].key_points,
                          make_node_id(3, seeds[i].question));
  });
  std::vector<std::string> d3;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    report.classifications.push_back(classified[i]);
    if (classified[i].dok_level != 3) {
      report.rejected_seeds.push_back(classified[i].question_id);
      continue;
    }
    const auto id = builder.add_node(3, seeds[i].question, seeds[i].domain, false);
    builder.node(id).reasoning_types = seeds[i].reasoning_types;
    builder.set_context(id, {seeds[i].chapter, seeds[i].key_points, seeds[i].complexity});
    d3.push_back(id);
  }
  std::sort(d3.begin(), d3.end());
  d3.erase(std::unique(d3.begin(), d3.end()), d3.end());
  spdlog::info("{} of {} seeds classified at depth 3", d3.size(), seeds.size());

  builder.answer_pending();
  const auto d2 = builder.expand(d3);
  builder.answer_pending();
  builder.expand(d2);
  builder.answer_pending();

  std::set<std::string> exhausted;
  constexpr int kRounds = 3;
  bool augmented_last_round = false;
  for (int round = 0; round < kRounds; ++round) {
    auto dedup = deduplicate(builder.graph(), policy, gateway, options.embedding_model_id);
    for (auto& r : dedup.removals) report.removals.push_back(std::move(r));
    builder.reset(dedup.graph);
    augmented_last_round = false;

    for (int depth : {3, 2}) {
      std::vector<std::string> new_parents;
      const auto g = builder.graph();
      for (const auto& id : g.ids_at_depth(depth)) {
        if (exhausted.contains(id)) continue;
        const std::size_t have = g.predecessor_ids(id).size();
        const std::size_t want = std::max<std::size_t>(builder.target(id), 1);
        if (have >= want || have >= 4) continue;
        std::vector<std::string> added;
        try {
          const auto texts = augment_subquestions(gateway, prompts, options, policy, builder.graph(), id,
                                                  builder.predecessor_texts(id), std::min<std::size_t>(want, 4) - have);
          for (const auto& t : texts) {
            const auto child = builder.add_node(depth - 1, t, g.node(id).domain, true);
            builder.node(child).flags.set(NodeFlag::augmented);
            builder.add_edge(child, id);
            added.push_back(child);
          }
        } catch (const AugmentationError& e) {
          spdlog::warn("{}", e.what());
          exhausted.insert(id);
        } catch (const ParseError& e) {
          spdlog::warn("augmentation of {} failed: {}", id, e.what());
          exhausted.insert(id);
        }
        if (!added.empty()) {
          augmented_last_round = true;
          auto& list = report.augmentations[id];
          list.insert(list.end(), added.begin(), added.end());
          if (depth == 3) new_parents.insert(new_parents.end(), added.begin(), added.end());
        }
      }
      builder.answer_pending();
      if (!new_parents.empty()) {
        builder.expand(new_parents);
        builder.answer_pending();
      }
    }
    if (!augmented_last_round) break;
  }
  if (augmented_last_round) {
    auto dedup = deduplicate(builder.graph(), policy, gateway, options.embedding_model_id);
    for (auto& r : dedup.removals) report.removals.push_back(std::move(r));
    builder.reset(dedup.graph);
  }

  auto graph = builder.graph();
  report.binary_flagged = flag_binary_questions(graph);
  result.graph = with_flag(graph, report.binary_flagged, NodeFlag::binary_flagged);
  return result;
}

}  // namespace depthwise
