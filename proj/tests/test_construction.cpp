#include <gtest/gtest.h>

#include <cmath>
#include <mutex>

#include "depthwise/construction.hpp"
#include "depthwise/graph_io.hpp"
#include "depthwise/io_util.hpp"
#include "depthwise/providers.hpp"
#include "support.hpp"

namespace depthwise {
namespace {

using nlohmann::json;
using testing::make_node;

/// Embeddings with exact pairwise cosines. Every text owns a private axis; a text placed "near"
/// another gets cos * (anchor axis) + sin * (own axis), so its cosine to the anchor is exact and
/// its cosine to every unrelated text is zero.
class ScriptedEmbeddings {
public:
  static constexpr std::size_t kDims = 64;

  void place(const std::string& text) { axis_of(text); }
  void near(const std::string& text, const std::string& anchor, double cos) {
    std::lock_guard lock(mutex_);
    const auto a = axis_locked(anchor);
    const auto own = axis_locked(text);
    std::vector<double> v(kDims, 0.0);
    v[a] = cos;
    v[own] = std::sqrt(1.0 - cos * cos);
    fixed_[text] = v;
  }

  std::vector<double> operator()(const std::string& text) {
    std::lock_guard lock(mutex_);
    if (auto it = fixed_.find(text); it != fixed_.end()) return it->second;
    std::vector<double> v(kDims, 0.0);
    v[axis_locked(text)] = 1.0;
    return v;
  }

private:
  std::size_t axis_of(const std::string& text) {
    std::lock_guard lock(mutex_);
    return axis_locked(text);
  }
  std::size_t axis_locked(const std::string& text) {
    auto [it, inserted] = axes_.try_emplace(text, axes_.size());
    if (it->second >= kDims) throw std::runtime_error("out of axes");
    return it->second;
  }

  std::mutex mutex_;
  std::map<std::string, std::size_t> axes_;
  std::map<std::string, std::vector<double>> fixed_;
};

std::shared_ptr<StubProvider> scripted_provider(std::shared_ptr<ScriptedEmbeddings> emb,
                                                StubProvider::CompleteFn complete = {}) {
  if (!complete) {
    complete = [](const GenerationRequest&) { return GenerationResult{"unused", std::nullopt, json::object()}; };
  }
  return std::make_shared<StubProvider>("scripted", std::vector<std::string>{"gen", "emb"}, std::move(complete),
                                        [emb](const std::string& t) { return (*emb)(t); });
}

bool has_edge(const KnowledgeGraph& g, const std::string& p, const std::string& s) {
  const auto& e = g.edges();
  return std::find(e.begin(), e.end(), KnowledgeEdge{p, s}) != e.end();
}

const RemovalRecord* removal_of(const DedupResult& r, const std::string& id) {
  for (const auto& rec : r.removals) {
    if (rec.removed_id == id) return &rec;
  }
  return nullptr;
}

TEST(DedupPolicy, RejectsMalformedThresholds) {
  DedupPolicy p;
  EXPECT_NO_THROW(p.validate());
  p.same_depth_threshold = 1.5;
  EXPECT_THROW(p.validate(), DomainError);
  p = {};
  p.cross_remove_d1_low = 0.95;
  EXPECT_THROW(p.validate(), DomainError);
}

class DedupRules : public ::testing::Test {
protected:
  void SetUp() override {
    // p and q restate each other; s sits in the depth-1 band of u; t is just below it; w restates r.
    emb->place(p.text);
    emb->near(q.text, p.text, 0.95);
    emb->place(r.text);
    emb->place(u.text);
    emb->near(s.text, u.text, 0.85);
    emb->near(t.text, u.text, 0.79);
    emb->near(w.text, r.text, 0.93);
    emb->place(v.text);
    emb->place(z.text);
    graph = KnowledgeGraph({p, q, r, s, t, u, v, w, z}, {{p.id, u.id},
                                                         {q.id, v.id},
                                                         {r.id, w.id},
                                                         {r.id, u.id},
                                                         {s.id, u.id},
                                                         {t.id, v.id},
                                                         {u.id, z.id},
                                                         {v.id, z.id},
                                                         {w.id, z.id}});
  }

  QuestionNode p = make_node(1, "Define an eigenvalue.");
  QuestionNode q = make_node(1, "What is an eigenvalue of a matrix?");
  QuestionNode r = make_node(1, "Define the determinant.");
  QuestionNode s = make_node(1, "State the characteristic polynomial.");
  QuestionNode t = make_node(1, "Define a diagonal matrix.");
  QuestionNode u = make_node(2, "Compute the characteristic polynomial of a 2x2 matrix.");
  QuestionNode v = make_node(2, "Diagonalize a symmetric 2x2 matrix.");
  QuestionNode w = make_node(2, "Give the definition of the determinant.");
  QuestionNode z = make_node(3, "Analyse when a matrix is diagonalizable and justify the criterion.");

  std::shared_ptr<ScriptedEmbeddings> emb = std::make_shared<ScriptedEmbeddings>();
  KnowledgeGraph graph;
};

TEST_F(DedupRules, AppliesAllThreeRules) {
  Gateway gw({scripted_provider(emb)});
  const auto result = deduplicate(graph, DedupPolicy{}, gw, "emb");
  const std::string survivor = std::min(p.id, q.id);
  const std::string merged = std::max(p.id, q.id);

  const auto* same = removal_of(result, merged);
  ASSERT_NE(same, nullptr);
  EXPECT_EQ(same->rule, RemovalRule::same_depth);
  EXPECT_EQ(same->survivor_id, survivor);
  EXPECT_NEAR(same->similarity, 0.95, 1e-12);

  const auto* d2 = removal_of(result, w.id);
  ASSERT_NE(d2, nullptr);
  EXPECT_EQ(d2->rule, RemovalRule::d2_near_d1);
  EXPECT_NEAR(d2->similarity, 0.93, 1e-12);
  EXPECT_EQ(d2->affected_parents, std::vector<std::string>{z.id});

  const auto* d1 = removal_of(result, s.id);
  ASSERT_NE(d1, nullptr);
  EXPECT_EQ(d1->rule, RemovalRule::d1_near_d2);
  EXPECT_NEAR(d1->similarity, 0.85, 1e-12);
  EXPECT_EQ(d1->affected_parents, std::vector<std::string>{u.id});

  EXPECT_EQ(removal_of(result, t.id), nullptr);  // 0.79 is below the band
  EXPECT_EQ(result.removals.size(), 3U);

  const auto& g = result.graph;
  EXPECT_EQ(g.node_count(), 6U);
  EXPECT_TRUE(has_edge(g, survivor, u.id));
  EXPECT_TRUE(has_edge(g, survivor, v.id));  // inherited from the merged node
  EXPECT_TRUE(has_edge(g, r.id, u.id));
  EXPECT_TRUE(has_edge(g, t.id, v.id));
  EXPECT_TRUE(has_edge(g, u.id, z.id));
  EXPECT_TRUE(has_edge(g, v.id, z.id));
  EXPECT_EQ(g.edge_count(), 6U);
  EXPECT_TRUE(validate_graph(g).ok());
}

TEST_F(DedupRules, IsIdempotent) {
  Gateway gw({scripted_provider(emb)});
  const auto once = deduplicate(graph, DedupPolicy{}, gw, "emb");
  const auto twice = deduplicate(once.graph, DedupPolicy{}, gw, "emb");
  EXPECT_TRUE(twice.removals.empty());
  EXPECT_EQ(graph_fingerprint(twice.graph), graph_fingerprint(once.graph));
}

TEST_F(DedupRules, BandEdgesAreHalfOpen) {
  Gateway gw({scripted_provider(emb)});
  const auto cos_to_u = [&](const QuestionNode& n) { return cosine_similarity((*emb)(n.text), (*emb)(u.text)); };
  DedupPolicy policy;
  policy.cross_remove_d1_low = cos_to_u(t);  // t now sits exactly on the inclusive lower edge
  const auto result = deduplicate(graph, policy, gw, "emb");
  ASSERT_NE(removal_of(result, t.id), nullptr);
  EXPECT_EQ(removal_of(result, t.id)->rule, RemovalRule::d1_near_d2);

  policy = {};
  policy.cross_remove_d1_high = cos_to_u(s);  // s now sits on the exclusive upper edge
  EXPECT_EQ(removal_of(deduplicate(graph, policy, gw, "emb"), s.id), nullptr);
}

TEST(Dedup, MergedDepthTwoRespectsPredecessorCap) {
  auto emb = std::make_shared<ScriptedEmbeddings>();
  std::vector<QuestionNode> d1;
  for (int i = 0; i < 5; ++i) {
    d1.push_back(make_node(1, fmt::format("Recall definition number {}.", i)));
    emb->place(d1.back().text);
  }
  const auto m1 = make_node(2, "Apply the first procedure.");
  const auto m2 = make_node(2, "Carry out the first procedure.");
  const auto top = make_node(3, "Evaluate the procedure in a new setting.");
  emb->place(m1.text);
  emb->near(m2.text, m1.text, 0.97);
  emb->place(top.text);
  std::vector<KnowledgeEdge> edges;
  const auto& first = m1.id < m2.id ? m1 : m2;
  const auto& second = m1.id < m2.id ? m2 : m1;
  for (int i = 0; i < 3; ++i) edges.push_back({d1[i].id, first.id});
  for (int i = 3; i < 5; ++i) edges.push_back({d1[i].id, second.id});
  edges.push_back({first.id, top.id});
  edges.push_back({second.id, top.id});
  auto nodes = d1;
  nodes.insert(nodes.end(), {m1, m2, top});

  Gateway gw({scripted_provider(emb)});
  const auto result = deduplicate(KnowledgeGraph(nodes, edges), DedupPolicy{}, gw, "emb");
  const auto* merge = removal_of(result, second.id);
  ASSERT_NE(merge, nullptr);
  EXPECT_EQ(merge->survivor_id, first.id);
  // Five distinct predecessors, cap four: the larger-id newcomer is dropped and then pruned.
  const std::string dropped = std::max(d1[3].id, d1[4].id);
  EXPECT_EQ(merge->dropped_predecessors, std::vector<std::string>{dropped});
  EXPECT_EQ(result.graph.predecessor_ids(first.id).size(), 4U);
  const auto* orphan = removal_of(result, dropped);
  ASSERT_NE(orphan, nullptr);
  EXPECT_EQ(orphan->rule, RemovalRule::orphaned);
  EXPECT_TRUE(validate_graph(result.graph).ok());
}

ConstructionOptions options() {
  ConstructionOptions o;
  o.model_id = "gen";
  o.embedding_model_id = "emb";
  o.parse_retries = 2;
  return o;
}

TEST(Deconstruct, CapsAtFourAndRetriesMalformedOutput) {
  auto emb = std::make_shared<ScriptedEmbeddings>();
  int calls = 0;
  auto stub = scripted_provider(emb, [&](const GenerationRequest&) {
    if (++calls == 1) return GenerationResult{"I cannot produce JSON today.", std::nullopt, json::object()};
    json list = json::array();
    for (int i = 0; i < 6; ++i) list.push_back(fmt::format("Sub-question {}?", i));
    return GenerationResult{json{{"Depth-2_questions", list}}.dump(), std::nullopt, json::object()};
  });
  testing::TempDir dir;
  Gateway gw({stub}, std::make_shared<ResponseCache>(dir.path()), Gateway::Options{});
  const auto node = make_node(3, "Design an experiment to compare two fertilisers.");
  const auto d = deconstruct_question(gw, PromptLibrary::bundled(), options(), node, "An answer.");
  EXPECT_EQ(d.questions.size(), 4U);
  EXPECT_EQ(d.dropped, 2U);
  EXPECT_EQ(calls, 2);
  EXPECT_THROW(deconstruct_question(gw, PromptLibrary::bundled(), options(), make_node(1, "Define x."), "a"),
               PreconditionError);
}

TEST(Deconstruct, PersistentGarbageSurfacesAsParseError) {
  auto emb = std::make_shared<ScriptedEmbeddings>();
  auto stub = scripted_provider(emb, [](const GenerationRequest&) {
    return GenerationResult{"no json", std::nullopt, json::object()};
  });
  Gateway gw({stub});
  EXPECT_THROW(deconstruct_question(gw, PromptLibrary::bundled(), options(), make_node(2, "Solve x + 1 = 2."), "x = 1"),
               ParseError);
  EXPECT_EQ(stub->complete_calls(), 3U);
}

class Augmentation : public ::testing::Test {
protected:
  void SetUp() override {
    for (const auto* n : {&c1, &c2, &parent, &other}) emb->place(n->text);
    graph = KnowledgeGraph({c1, c2, other, parent}, {{c1.id, parent.id}, {c2.id, parent.id}});
  }

  QuestionNode c1 = make_node(1, "Define velocity.");
  QuestionNode c2 = make_node(1, "Define acceleration.");
  QuestionNode other = make_node(1, "Define momentum.");
  QuestionNode parent = make_node(2, "Find the acceleration of a car that speeds up from 0 to 20 m/s in 5 s.");
  std::shared_ptr<ScriptedEmbeddings> emb = std::make_shared<ScriptedEmbeddings>();
  KnowledgeGraph graph;
};

TEST_F(Augmentation, DropsNearDuplicateCandidates) {
  emb->near("What is velocity?", c1.text, 0.96);
  emb->near("What is momentum?", other.text, 0.92);
  emb->place("State the units of acceleration.");
  auto stub = scripted_provider(emb, [](const GenerationRequest&) {
    json list = {"What is velocity?", "What is momentum?", "State the units of acceleration."};
    return GenerationResult{json{{"complementary_Depth-1_questions", list}}.dump(), std::nullopt, json::object()};
  });
  Gateway gw({stub});
  const auto got = augment_subquestions(gw, PromptLibrary::bundled(), options(), DedupPolicy{}, graph, parent.id,
                                        {c1.text, c2.text}, 2);
  EXPECT_EQ(got, std::vector<std::string>{"State the units of acceleration."});
}

TEST_F(Augmentation, OnlyDuplicatesRaiseAfterRetries) {
  emb->near("What is velocity?", c1.text, 0.96);
  auto stub = scripted_provider(emb, [](const GenerationRequest&) {
    return GenerationResult{json{{"complementary_Depth-1_questions", {"What is velocity?"}}}.dump(), std::nullopt,
                            json::object()};
  });
  Gateway gw({stub});
  EXPECT_THROW(augment_subquestions(gw, PromptLibrary::bundled(), options(), DedupPolicy{}, graph, parent.id,
                                    {c1.text, c2.text}, 1),
               AugmentationError);
  EXPECT_EQ(stub->complete_calls(), 3U);
  EXPECT_THROW(augment_subquestions(gw, PromptLibrary::bundled(), options(), DedupPolicy{}, graph, parent.id,
                                    {c1.text, c2.text}, 3),
               PreconditionError);
}

TEST(BinaryQuestions, DetectsYesNoOpeners) {
  EXPECT_TRUE(is_binary_question("Is every prime number odd?"));
  EXPECT_TRUE(is_binary_question("Does the series converge?"));
  EXPECT_TRUE(is_binary_question("Consider the map f. Can f be inverted?"));
  EXPECT_TRUE(is_binary_question("If I understand correctly, the limit is zero?"));
  EXPECT_FALSE(is_binary_question("What is a prime number?"));
  EXPECT_FALSE(is_binary_question("Explain why the series converges."));
  EXPECT_FALSE(is_binary_question("Isolate x in 2x + 3 = 7."));
}

TEST(BinaryQuestions, FlagAndRewrite) {
  const auto a = make_node(1, "Is zero an even number?");
  const auto b = make_node(1, "Define an even number.");
  const auto c = make_node(2, "Show that the sum of two even numbers is even.");
  const auto d = make_node(3, "Analyse parity rules and justify when a sum of integers is even.");
  const KnowledgeGraph g({a, b, c, d}, {{a.id, c.id}, {b.id, c.id}, {c.id, d.id}});
  const auto flagged = flag_binary_questions(g);
  EXPECT_EQ(flagged, std::vector<std::string>{a.id});
  const auto marked = with_flag(g, flagged, NodeFlag::binary_flagged);
  EXPECT_TRUE(marked.node(a.id).flags.has(NodeFlag::binary_flagged));

  const auto rewritten = apply_rewrites(marked, {{a.id, "Explain whether zero is an even number."}});
  const auto new_id = make_node_id(1, "Explain whether zero is an even number.");
  ASSERT_TRUE(rewritten.contains(new_id));
  EXPECT_FALSE(rewritten.contains(a.id));
  const auto& n = rewritten.node(new_id);
  EXPECT_TRUE(n.flags.has(NodeFlag::debias_rewritten));
  EXPECT_FALSE(n.flags.has(NodeFlag::binary_flagged));
  EXPECT_EQ(rewritten.successor_ids(new_id), std::vector<std::string>{c.id});
  EXPECT_TRUE(validate_graph(rewritten).ok());
  EXPECT_TRUE(flag_binary_questions(rewritten).empty());

  EXPECT_THROW(apply_rewrites(g, {{"d1-000000000000", "x"}}), LookupError);
  EXPECT_THROW(apply_rewrites(g, {{a.id, "   "}}), ValidationError);
  EXPECT_THROW(apply_rewrites(g, {{a.id, b.text}}), DataError);
}

TEST(BuildGraph, SimulatedRunIsValidAndDeterministic) {
  const auto seeds = load_seeds(testing::source_dir() / "data" / "toy_seeds.json");
  ASSERT_FALSE(seeds.empty());
  auto run = [&] {
    auto provider = std::make_shared<StubProvider>("sim", std::vector<std::string>{"gen", "emb"},
                                                   simulated_responder(PromptLibrary::bundled()),
                                                   hashed_bag_of_words_embedder());
    Gateway gw({provider}, nullptr, Gateway::Options{});
    return build_graph(seeds, gw, PromptLibrary::bundled(), options());
  };
  const auto first = run();
  const auto second = run();
  EXPECT_EQ(graph_fingerprint(first.graph), graph_fingerprint(second.graph));
  EXPECT_EQ(first.report.to_json().dump(), second.report.to_json().dump());
  const auto report = validate_graph(first.graph);
  EXPECT_TRUE(report.ok()) << (report.violations.empty() ? "" : report.violations.front().message);
  const auto census = depth_census(first.graph);
  EXPECT_GT(census.nodes[0], 0U);
  EXPECT_GT(census.nodes[1], 0U);
  EXPECT_GT(census.nodes[2], 0U);
  for (const auto& id : first.report.binary_flagged) {
    EXPECT_TRUE(first.graph.node(id).flags.has(NodeFlag::binary_flagged));
  }
}

TEST(LoadSeeds, RejectsMalformedFiles) {
  testing::TempDir dir;
  write_text_file(dir / "a.json", R"({"seeds": [{"domain": "Math"}]})");
  EXPECT_THROW(load_seeds(dir / "a.json"), DataError);
  write_text_file(dir / "b.json", R"({"seeds": [{"question": "  "}]})");
  EXPECT_THROW(load_seeds(dir / "b.json"), DataError);
  write_text_file(dir / "c.json", R"({"other": 1})");
  EXPECT_THROW(load_seeds(dir / "c.json"), DataError);
}

}  // namespace
}  // namespace depthwise
