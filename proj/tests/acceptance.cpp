// Acceptance suite: one PASS/FAIL/SKIPPED line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/spdlog.h>

#include "depthwise/cli.hpp"
#include "depthwise/construction.hpp"
#include "depthwise/graph_io.hpp"
#include "depthwise/inference.hpp"
#include "depthwise/io_util.hpp"
#include "depthwise/judging.hpp"
#include "depthwise/metrics.hpp"
#include "depthwise/parsing.hpp"
#include "depthwise/prompts.hpp"
#include "depthwise/providers.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace depthwise {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

enum class Outcome { pass, fail, skipped };

struct Verdict {
  Outcome outcome = Outcome::pass;
  std::string detail;
};

/// Collects failure messages for one criterion.
class Checker {
public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  Verdict verdict(std::string detail) const {
    if (failed_ == 0) return {Outcome::pass, std::move(detail)};
    std::string msg = fmt::format("{} failed checks", failed_);
    for (const auto& f : failures_) msg += "; " + f;
    return {Outcome::fail, msg};
  }

private:
  std::size_t failed_ = 0;
  std::vector<std::string> failures_;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

Verdict metric_oracle() {
  const auto start = Clock::now();
  Checker c;
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = testing::random_graph(rng);
    const auto scores = testing::random_scores(rng, g);
    for (bool forward : {true, false}) {
      const auto direction = forward ? DiscrepancyDirection::forward : DiscrepancyDirection::backward;
      const auto records = discrepancy_records(g, scores, direction);
      const auto expected = oracle::discrepancies(g, scores, forward, 4.0, true);
      c.expect(records.size() == expected.size(), fmt::format("trial {} record count", trial));
      if (records.size() != expected.size()) continue;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto single = forward ? node_forward_discrepancy(records[i].question_id, scores, g)
                                    : node_backward_discrepancy(records[i].question_id, scores, g);
        c.expect(single.value == expected[i].value && single.gated_in == expected[i].gated &&
                     records[i].value == expected[i].value && records[i].neighbor_mean == expected[i].neighbor_mean,
                 fmt::format("trial {} node {}", trial, expected[i].id));
      }
      const auto summary = aggregate_discrepancies(records);
      for (int lower : {0, 1, 2}) {
        const auto want = oracle::aggregate(expected, lower);
        const auto& got = lower == 0 ? summary.overall
                                     : summary.per_transition.at(lower == 1 ? Transition::d1_d2 : Transition::d2_d3);
        c.expect(near(got.average, want.average, 1e-12) && near(got.intensity, want.intensity, 1e-12) &&
                     near(got.frequency, want.frequency, 1e-12) && got.n_gated == want.gated,
                 fmt::format("trial {} aggregate {}", trial, lower));
      }
    }
  }
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 5.0, fmt::format("runtime {:.2f} s", elapsed));
  return c.verdict(fmt::format("200 graphs, {:.3f} s", elapsed));
}

Verdict decomposition_identity() {
  // Average (D2->D3, D1->D2, overall), intensity (same order), frequency in percent.
  const double forward[8][9] = {
      {0.1304, 0.1814, 0.1756, 0.2708, 0.2683, 0.2685, 48.15, 67.62, 65.40},
      {0.1524, 0.1582, 0.1573, 0.2572, 0.2720, 0.2697, 59.26, 58.14, 58.31},
      {0.1259, 0.1361, 0.1344, 0.2633, 0.2490, 0.2512, 47.83, 54.68, 53.50},
      {0.0920, 0.1569, 0.1474, 0.2031, 0.2294, 0.2267, 45.28, 68.39, 65.01},
      {0.0868, 0.0791, 0.0806, 0.1844, 0.2058, 0.2009, 47.06, 38.46, 40.14},
      {0.0831, 0.0957, 0.0934, 0.2225, 0.2258, 0.2253, 37.33, 42.38, 41.44},
      {0.0653, 0.0497, 0.0528, 0.2176, 0.2211, 0.2202, 30.00, 22.47, 23.99},
      {0.1002, 0.0722, 0.0779, 0.1608, 0.1369, 0.1424, 62.35, 52.73, 54.70}};
  const double backward[8][9] = {
      {0.2193, 0.1104, 0.1342, 0.3827, 0.3589, 0.3671, 57.31, 30.77, 36.57},
      {0.1255, 0.0782, 0.0879, 0.3846, 0.3339, 0.3473, 32.64, 23.43, 25.32},
      {0.1363, 0.0632, 0.0787, 0.3811, 0.3258, 0.3442, 35.76, 19.40, 22.88},
      {0.1442, 0.0700, 0.0881, 0.3488, 0.3071, 0.3225, 41.33, 22.81, 27.31},
      {0.0627, 0.0635, 0.0633, 0.2979, 0.2728, 0.2781, 21.04, 23.27, 22.76},
      {0.0878, 0.0717, 0.0752, 0.3500, 0.3141, 0.3227, 25.08, 22.82, 23.32},
      {0.0427, 0.0442, 0.0438, 0.2778, 0.2692, 0.2710, 15.38, 16.41, 16.18},
      {0.0457, 0.0672, 0.0626, 0.2892, 0.2602, 0.2644, 15.79, 25.81, 23.68}};
  Checker c;
  double worst = 0.0;
  for (const auto* table : {&forward, &backward}) {
    for (const auto& row : *table) {
      for (int col = 0; col < 3; ++col) {
        const double err = std::fabs(row[col] - row[3 + col] * row[6 + col] / 100.0);
        worst = std::max(worst, err);
        c.expect(err <= 0.0005, fmt::format("{} vs {} x {}", row[col], row[3 + col], row[6 + col]));
      }
    }
  }
  std::mt19937_64 rng(99);
  double worst_synthetic = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = testing::random_graph(rng);
    const auto scores = testing::random_scores(rng, g);
    for (auto dir : {DiscrepancyDirection::forward, DiscrepancyDirection::backward}) {
      const auto s = aggregate_discrepancies(discrepancy_records(g, scores, dir));
      std::vector<const DiscrepancyStats*> stats{&s.overall};
      for (const auto& [t, st] : s.per_transition) stats.push_back(&st);
      for (const auto* st : stats) {
        const double err = std::fabs(st->average - st->intensity * st->frequency);
        worst_synthetic = std::max(worst_synthetic, err);
        c.expect(err <= 1e-9, fmt::format("synthetic trial {}", trial));
      }
    }
  }
  return c.verdict(fmt::format("48 published cells, max error {:.5f}; synthetic max error {:.1e}", worst,
                               worst_synthetic));
}

Verdict overall_accuracy() {
  const std::array<std::size_t, 3> counts{1121, 359, 91};
  const double rows[8][4] = {{3.828, 3.320, 3.165, 3.673}, {4.289, 3.872, 3.615, 4.155},
                             {4.495, 4.153, 4.022, 4.390}, {4.280, 3.897, 4.000, 4.176},
                             {4.599, 4.532, 4.429, 4.574}, {4.482, 4.351, 4.286, 4.440},
                             {4.764, 4.749, 4.648, 4.754}, {4.269, 4.251, 4.011, 4.250}};
  Checker c;
  double worst = 0.0;
  for (const auto& row : rows) {
    const std::array means{row[0], row[1], row[2]};
    const double got = weighted_overall(means, counts);
    worst = std::max(worst, std::fabs(got - row[3]));
    c.expect(near(got, row[3], 0.005), fmt::format("{:.4f} vs {}", got, row[3]));
  }
  return c.verdict(fmt::format("8 rows, max error {:.4f}", worst));
}

Verdict min_k_correctness() {
  Checker c;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lp(-12.0, 0.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 400;  // many sequences exceed the 128-token window
    std::vector<double> seq(n);
    for (auto& x : seq) x = lp(rng);
    const double k = trial % 10 == 0 ? 0.5 : 1.0 + static_cast<double>(rng() % 60);
    const double got = min_k_prob(seq, k, 128);
    const double want = oracle::min_k(seq, k, 128);
    worst = std::max(worst, std::fabs(got - want));
    c.expect(std::fabs(got - want) <= 1e-12, fmt::format("trial {}", trial));
  }
  // A tiny K on a short sequence still averages one token.
  c.expect(min_k_prob(std::vector<double>{-1.0, -5.0, -2.0}, 1.0, 128) == 5.0, "m >= 1 floor");
  // Only the first 128 tokens count.
  std::vector<double> windowed(128, -1.0);
  windowed.resize(300, -50.0);
  c.expect(min_k_prob(windowed, 20.0, 128) == 1.0, "window truncation");
  // Making any token less likely never lowers the score.
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> seq(1 + rng() % 200);
    for (auto& x : seq) x = lp(rng);
    const double before = min_k_prob(seq, 20.0, 128);
    seq[rng() % std::min<std::size_t>(seq.size(), 128)] -= 3.0;
    c.expect(min_k_prob(seq, 20.0, 128) >= before, fmt::format("monotonicity trial {}", trial));
  }
  return c.verdict(fmt::format("1000 sequences, max error {:.1e}", worst));
}

Verdict alpha() {
  Checker c;
  const std::vector<std::vector<std::optional<double>>> perfect = {{1, 2, 3, 4, 5, std::nullopt},
                                                                   {1, 2, 3, 4, 5, 2}};
  c.expect(krippendorff_alpha_ordinal(perfect) == 1.0, "perfect agreement");
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t raters = 2 + rng() % 4;
    const std::size_t items = 5 + rng() % 40;
    std::vector<std::vector<std::optional<double>>> m(raters, std::vector<std::optional<double>>(items));
    for (auto& row : m) {
      for (auto& cell : row) {
        if (rng() % 5 != 0) cell = static_cast<double>(1 + rng() % 5);
      }
    }
    try {
      const double got = krippendorff_alpha_ordinal(m);
      const double want = oracle::krippendorff_ordinal(m);
      worst = std::max(worst, std::fabs(got - want));
      c.expect(std::fabs(got - want) <= 1e-9, fmt::format("matrix {}", trial));
    } catch (const DomainError&) {
      c.expect(false, fmt::format("matrix {} not pairable", trial));
    }
  }
  return c.verdict(fmt::format("50 matrices, max error {:.1e}", worst));
}

/// Graph with the published census: 1121/359/91 nodes, 1437 D1->D2 and 363 D2->D3 edges.
KnowledgeGraph census_shaped_graph() {
  std::vector<QuestionNode> nodes;
  std::array<std::vector<std::string>, 3> ids;
  const std::array<std::size_t, 3> counts{1121, 359, 91};
  for (int d = 1; d <= 3; ++d) {
    for (std::size_t i = 0; i < counts[d - 1]; ++i) {
      nodes.push_back(testing::make_node(d, fmt::format("depth {} question {}", d, i)));
      ids[d - 1].push_back(nodes.back().id);
    }
  }
  std::vector<KnowledgeEdge> edges;
  // Every D1 node feeds at least one D2 node; the 1437 edges are dealt over D2 nodes in turn.
  for (std::size_t e = 0; e < 1437; ++e) edges.push_back({ids[0][e % 1121], ids[1][e % 359]});
  for (std::size_t e = 0; e < 363; ++e) edges.push_back({ids[1][e % 359], ids[2][e % 91]});
  return KnowledgeGraph(std::move(nodes), std::move(edges));
}

Verdict graph_invariants() {
  Checker c;
  const auto toy = load_graph(testing::source_dir() / "data" / "toy_graph.json");
  c.expect(validate_graph(toy).ok(), "toy graph rejected");

  const auto shaped = census_shaped_graph();
  const auto census = depth_census(shaped);
  c.expect(census.nodes == std::array<std::size_t, 3>{1121, 359, 91}, "census nodes");
  c.expect(census.edges_between(1, 2) == 1437 && census.edges_between(2, 3) == 363, "census edges");
  const auto shaped_report = validate_graph(shaped);
  // 1437 edges over 359 depth-2 nodes cannot all stay within four predecessors.
  c.expect(shaped_report.violations.size() == shaped_report.count(ViolationKind::predecessor_cap_exceeded) &&
               shaped_report.count(ViolationKind::predecessor_cap_exceeded) >= 1,
           "census-shaped graph has violations beyond the predecessor cap");

  const auto a = testing::make_node(1, "Define a vector space.");
  const auto b = testing::make_node(1, "Define a basis.");
  const auto cc = testing::make_node(2, "Find a basis of the plane x + y + z = 0.");
  const auto d = testing::make_node(3, "Explain why every finite-dimensional space has a basis.");
  const std::vector<KnowledgeEdge> base = {{a.id, cc.id}, {b.id, cc.id}, {cc.id, d.id}};
  const auto with_edge = [&](KnowledgeEdge e) {
    auto edges = base;
    edges.push_back(std::move(e));
    return KnowledgeGraph({a, b, cc, d}, edges);
  };
  std::vector<std::pair<ViolationKind, KnowledgeGraph>> seeded;
  seeded.emplace_back(ViolationKind::duplicate_node_id, KnowledgeGraph({a, a, b, cc, d}, base));
  {
    auto blank = a;
    blank.text = " ";
    seeded.emplace_back(ViolationKind::empty_question_text, KnowledgeGraph({blank, b, cc, d}, base));
    auto no_answer = cc;
    no_answer.reference_answer.clear();
    seeded.emplace_back(ViolationKind::empty_reference_answer, KnowledgeGraph({a, b, no_answer, d}, base));
    auto conflicted = cc;
    conflicted.flags.set(NodeFlag::binary_flagged).set(NodeFlag::debias_rewritten);
    seeded.emplace_back(ViolationKind::conflicting_flags, KnowledgeGraph({a, b, conflicted, d}, base));
  }
  seeded.emplace_back(ViolationKind::dangling_edge, with_edge({"d1-000000000000", cc.id}));
  seeded.emplace_back(ViolationKind::self_loop, with_edge({cc.id, cc.id}));
  seeded.emplace_back(ViolationKind::duplicate_edge, with_edge(base.front()));
  seeded.emplace_back(ViolationKind::non_adjacent_edge, with_edge({a.id, d.id}));
  seeded.emplace_back(ViolationKind::missing_predecessors,
                      KnowledgeGraph({a, b, cc, d, testing::make_node(3, "Evaluate an unsupported strategy.")}, base));
  {
    std::vector<QuestionNode> nodes{cc, d};
    std::vector<KnowledgeEdge> edges{{cc.id, d.id}};
    for (int i = 0; i < 5; ++i) {
      nodes.push_back(testing::make_node(1, fmt::format("Recall fact number {}.", i)));
      edges.push_back({nodes.back().id, cc.id});
    }
    seeded.emplace_back(ViolationKind::predecessor_cap_exceeded, KnowledgeGraph(nodes, edges));
  }
  seeded.emplace_back(ViolationKind::orphan_node,
                      KnowledgeGraph({a, b, cc, d, testing::make_node(1, "Define a scalar.")}, base));
  for (const auto& [kind, g] : seeded) {
    const auto r = validate_graph(g);
    c.expect(!r.ok() && r.count(kind) >= 1, fmt::format("{} not reported", to_string(kind)));
  }

  std::string detail = fmt::format("toy graph ok; census-shaped graph {} nodes / {} edges with {} cap violation(s); "
                                   "{} seeded classes rejected",
                                   census.total_nodes(), census.total_edges(),
                                   shaped_report.count(ViolationKind::predecessor_cap_exceeded), seeded.size());
  if (const char* path = std::getenv("DEPTHWISE_FULL_GRAPH"); path && *path) {
    const auto full = load_graph(path);
    const auto fc = depth_census(full);
    const auto fr = validate_graph(full);
    c.expect(fc.nodes == std::array<std::size_t, 3>{1121, 359, 91}, "full dataset node census");
    c.expect(fc.edges_between(1, 2) == 1437 && fc.edges_between(2, 3) == 363, "full dataset edge census");
    c.expect(fr.ok(), fmt::format("full dataset has {} violations", fr.violations.size()));
    detail += fmt::format("; full dataset {} nodes / {} edges", fc.total_nodes(), fc.total_edges());
  } else {
    detail += "; full dataset not provided (DEPTHWISE_FULL_GRAPH unset)";
  }
  return c.verdict(detail);
}

/// Embeddings with exact cosines: each text owns an axis, "near" texts lean toward an anchor.
class ScriptedEmbeddings {
public:
  void near(const std::string& text, const std::string& anchor, double cos) {
    std::lock_guard lock(mutex_);
    std::vector<double> v(64, 0.0);
    v[axis(anchor)] = cos;
    v[axis(text)] = std::sqrt(1.0 - cos * cos);
    fixed_[text] = v;
  }
  std::vector<double> operator()(const std::string& text) {
    std::lock_guard lock(mutex_);
    if (auto it = fixed_.find(text); it != fixed_.end()) return it->second;
    std::vector<double> v(64, 0.0);
    v[axis(text)] = 1.0;
    return v;
  }

private:
  std::size_t axis(const std::string& text) { return axes_.try_emplace(text, axes_.size()).first->second; }

  std::mutex mutex_;
  std::map<std::string, std::size_t> axes_;
  std::map<std::string, std::vector<double>> fixed_;
};

Verdict dedup_behavior() {
  using testing::make_node;
  const auto p = make_node(1, "Define an eigenvalue.");
  const auto q = make_node(1, "What is an eigenvalue of a matrix?");
  const auto r = make_node(1, "Define the determinant.");
  const auto s = make_node(1, "State the characteristic polynomial.");
  const auto t = make_node(1, "Define a diagonal matrix.");
  const auto u = make_node(2, "Compute the characteristic polynomial of a 2x2 matrix.");
  const auto v = make_node(2, "Diagonalize a symmetric 2x2 matrix.");
  const auto w = make_node(2, "Give the definition of the determinant.");
  const auto z = make_node(3, "Analyse when a matrix is diagonalizable and justify the criterion.");
  auto emb = std::make_shared<ScriptedEmbeddings>();
  emb->near(q.text, p.text, 0.95);
  emb->near(s.text, u.text, 0.85);
  emb->near(t.text, u.text, 0.79);
  emb->near(w.text, r.text, 0.93);
  const KnowledgeGraph graph({p, q, r, s, t, u, v, w, z},
                             {{p.id, u.id}, {q.id, v.id}, {r.id, w.id}, {r.id, u.id}, {s.id, u.id},
                              {t.id, v.id}, {u.id, z.id}, {v.id, z.id}, {w.id, z.id}});
  auto provider = std::make_shared<StubProvider>(
      "scripted", std::vector<std::string>{"emb"},
      [](const GenerationRequest&) { return GenerationResult{"unused", std::nullopt, json::object()}; },
      [emb](const std::string& text) { return (*emb)(text); });
  Gateway gw({provider});

  Checker c;
  const auto once = deduplicate(graph, DedupPolicy{}, gw, "emb");
  std::map<std::string, RemovalRule> removed;
  for (const auto& rec : once.removals) removed[rec.removed_id] = rec.rule;
  c.expect(removed.size() == 3, fmt::format("{} removals", removed.size()));
  c.expect(removed.count(std::max(p.id, q.id)) && removed[std::max(p.id, q.id)] == RemovalRule::same_depth,
           "same-depth rule at 0.95");
  c.expect(removed.count(w.id) && removed[w.id] == RemovalRule::d2_near_d1, "depth-2 vs depth-1 rule at 0.93");
  c.expect(removed.count(s.id) && removed[s.id] == RemovalRule::d1_near_d2, "depth-1 vs depth-2 band at 0.85");
  c.expect(!removed.count(t.id), "0.79 kept");
  c.expect(validate_graph(once.graph).ok(), "deduplicated graph invalid");

  const auto twice = deduplicate(once.graph, DedupPolicy{}, gw, "emb");
  c.expect(twice.removals.empty() && graph_fingerprint(twice.graph) == graph_fingerprint(once.graph),
           "second pass changed the graph");
  return c.verdict(fmt::format("3 rules fired, 1 below-band node kept, {} -> {} nodes, idempotent",
                               graph.node_count(), once.graph.node_count()));
}

std::vector<ChatMessage> messages_from(const json& arr) {
  std::vector<ChatMessage> out;
  for (const auto& m : arr) out.push_back({parse_role(m.at("role").get<std::string>()), m.at("content")});
  return out;
}

Verdict prompt_fidelity() {
  Checker c;
  const auto doc = read_json_file(testing::golden_dir() / "inference_prompts.json");
  const auto graph = graph_from_json(doc.at("graph"));
  ResponseStore prior;
  for (const auto& [id, text] : doc.at("zero_shot_predictions").items()) {
    ModelResponse r;
    r.question_id = id;
    r.model_id = "m";
    r.text = text;
    prior.put(r);
  }
  const auto& lib = PromptLibrary::bundled();
  const auto& target = graph.node(doc.at("target").get<std::string>());
  for (auto mode : kAllModes) {
    const auto got = build_prompt(target, mode, graph, &prior, lib);
    c.expect(got == messages_from(doc.at("expected").at(std::string(to_string(mode)))),
             fmt::format("{} prompt differs from golden", to_string(mode)));
  }
  const auto& d1 = graph.node(doc.at("depth1_target").get<std::string>());
  c.expect(build_prompt(d1, InferenceMode::zero_shot, graph, nullptr, lib) ==
               messages_from(doc.at("expected").at("zero_shot_depth1")),
           "depth-1 zero-shot prompt differs from golden");

  const auto judge = read_json_file(testing::golden_dir() / "judge_prompt.json");
  c.expect(judge_messages(lib, judge.at("instruction"), judge.at("reference_answer"), judge.at("response")) ==
               messages_from(judge.at("expected")),
           "judge prompt differs from golden");

  std::mt19937_64 rng(7);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz ABC.,;:!?()[]{}0123456789\n'\"-";
  int generated = 0;
  while (generated < 1000) {
    std::string f;
    const auto len = 1 + rng() % 200;
    for (std::size_t k = 0; k < len; ++k) f += alphabet[rng() % alphabet.size()];
    f = trim_copy(f);
    if (f.empty() || f.starts_with("Feedback:")) continue;
    ++generated;
    const int score = 1 + static_cast<int>(rng() % 5);
    try {
      const auto v = parse_verdict(fmt::format("Feedback: {} [RESULT] {}", f, score));
      c.expect(v.score == score && v.feedback == f, fmt::format("verdict {} mismatched", generated));
    } catch (const ParseError& e) {
      c.expect(false, fmt::format("verdict {} rejected: {}", generated, e.what()));
    }
  }
  return c.verdict("4 modes + depth-1 + judge byte-exact; 1000 verdicts round-tripped");
}

struct PipelineRun {
  std::string report;
  std::size_t provider_calls = 0;
  int status = 0;
  std::string error;
};

PipelineRun run_pipeline(const fs::path& root) {
  const auto data = testing::source_dir() / "data";
  auto config = read_json_file(data / "example_config.json");
  config["provider_config"] = (data / "example_providers.json").string();
  config["dataset"] = (root / "out" / "built_graph.json").string();
  config["seeds"] = (data / "toy_seeds.json").string();
  config["cache_root"] = (root / "cache").string();
  config["output_dir"] = (root / "out").string();
  write_text_file(root / "config.json", config.dump(2));

  PipelineRun run;
  for (const auto* cmd : {"build", "infer", "judge", "metrics", "report"}) {
    std::ostringstream out, err;
    run.status = run_cli({"--config", (root / "config.json").string(), "--quiet", cmd}, out, err);
    if (run.status != kExitOk) {
      run.error = fmt::format("{}: {}", cmd, err.str());
      return run;
    }
    const auto manifest = read_json_file(root / "out" / "manifests" / (std::string(cmd) + ".json"));
    if (manifest.contains("gateway")) run.provider_calls += manifest.at("gateway").at("provider_calls").get<std::size_t>();
  }
  run.report = read_text_file(root / "out" / "report" / "report.md") +
               read_text_file(root / "out" / "report" / "performance.csv") +
               read_text_file(root / "out" / "report" / "intensity_frequency.csv") +
               read_text_file(root / "out" / "report" / "mode_comparison.csv");
  return run;
}

Verdict end_to_end() {
  Checker c;
  testing::TempDir first_dir, second_dir;
  const auto start = Clock::now();
  const auto first = run_pipeline(first_dir.path());
  const double elapsed = seconds_since(start);
  c.expect(first.status == kExitOk, "first run failed: " + first.error);
  c.expect(elapsed < 60.0, fmt::format("first run took {:.1f} s", elapsed));
  const auto second = run_pipeline(second_dir.path());
  c.expect(second.status == kExitOk, "second run failed: " + second.error);
  c.expect(!first.report.empty() && first.report == second.report, "reports differ between runs");
  const auto warm = run_pipeline(first_dir.path());
  c.expect(warm.status == kExitOk, "warm run failed: " + warm.error);
  c.expect(warm.provider_calls == 0, fmt::format("warm rerun made {} provider calls", warm.provider_calls));
  c.expect(warm.report == first.report, "warm rerun changed the report");
  return c.verdict(fmt::format("cold run {:.2f} s with {} provider calls; identical reports; warm rerun 0 calls",
                               elapsed, first.provider_calls));
}

}  // namespace
}  // namespace depthwise

int main() {
  using namespace depthwise;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"metric oracle equivalence", metric_oracle},
      {"decomposition identity", decomposition_identity},
      {"overall accuracy consistency", overall_accuracy},
      {"min-k correctness", min_k_correctness},
      {"krippendorff alpha", alpha},
      {"graph invariants", graph_invariants},
      {"dedup behavior", dedup_behavior},
      {"prompt fidelity", prompt_fidelity},
      {"end-to-end determinism", end_to_end},
  };
  spdlog::set_level(spdlog::level::warn);
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {Outcome::fail, fmt::format("exception: {}", e.what())};
    }
    const char* label = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIPPED";
    if (v.outcome == Outcome::fail) ++failures;
    fmt::print("{} {}: {}\n", label, name, v.detail);
  }
  std::cout.flush();
  return failures == 0 ? 0 : 1;
}
