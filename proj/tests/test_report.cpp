#include <gtest/gtest.h>

#include <sstream>

#include "depthwise/io_util.hpp"
#include "depthwise/report.hpp"
#include "support.hpp"

namespace depthwise {
namespace {

using testing::make_node;

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

/// Two depth-1, one depth-2 and one depth-3 question.
struct Campaigns {
  QuestionNode a = make_node(1, "Define a force.");
  QuestionNode b = make_node(1, "State Newton's second law.");
  QuestionNode c = make_node(2, "Compute the force on a 2 kg mass accelerating at 3 m/s^2.");
  QuestionNode d = make_node(3, "Design a braking system and justify the forces involved.");
  KnowledgeGraph graph{{a, b, c, d}, {{a.id, c.id}, {b.id, c.id}, {c.id, d.id}}};

  ResponseStore responses(InferenceMode mode) const {
    ResponseStore store;
    for (const auto& n : graph.nodes()) {
      if (mode != InferenceMode::zero_shot && n.depth.value() == 1) continue;
      ModelResponse r;
      r.question_id = n.id;
      r.model_id = "m";
      r.mode = mode;
      r.text = "x";
      r.token_logprobs = std::vector<TokenLogprob>{{"x", -1.0}, {"y", -3.0}};
      store.put(r);
    }
    return store;
  }
};

TEST(ComputeMetrics, ZeroShotCoversEverything) {
  Campaigns f;
  const ScoreTable scores{{f.a.id, 5}, {f.b.id, 5}, {f.c.id, 5}, {f.d.id, 5}};
  const auto b = compute_metrics(f.graph, scores, f.responses(InferenceMode::zero_shot), "m",
                                 InferenceMode::zero_shot, MetricsOptions{});
  ASSERT_TRUE(b.forward && b.backward);
  EXPECT_EQ(b.forward->overall.n_gated, 2U);
  EXPECT_DOUBLE_EQ(b.forward->overall.frequency, 0.0);
  EXPECT_EQ(b.min_k.size(), 4U);
  EXPECT_DOUBLE_EQ(b.min_k.begin()->second, 3.0);
  EXPECT_FALSE(b.memorization.has_value());  // one depth-3 question is too few for quartiles
}

TEST(ComputeMetrics, ContextModesSkipDepthOne) {
  Campaigns f;
  const ScoreTable scores{{f.c.id, 4}, {f.d.id, 2}};
  const auto b = compute_metrics(f.graph, scores, f.responses(InferenceMode::prompt_gold), "m",
                                 InferenceMode::prompt_gold, MetricsOptions{});
  EXPECT_FALSE(b.forward.has_value());
  EXPECT_FALSE(b.accuracy.per_depth[0].has_value());
  EXPECT_DOUBLE_EQ(b.accuracy.overall, 3.0);
  EXPECT_THROW(compute_metrics(f.graph, {{f.c.id, 4}}, ResponseStore{}, "m", InferenceMode::prompt_gold, {}),
               CoverageError);
}

class Report : public ::testing::Test {
protected:
  void SetUp() override {
    const ScoreTable zs{{f.a.id, 5}, {f.b.id, 4}, {f.c.id, 3}, {f.d.id, 5}};
    const ScoreTable gold{{f.c.id, 4}, {f.d.id, 4}};
    bundles.push_back(compute_metrics(f.graph, zs, f.responses(InferenceMode::zero_shot), "m",
                                      InferenceMode::zero_shot, {}));
    bundles.push_back(compute_metrics(f.graph, gold, f.responses(InferenceMode::prompt_gold), "m",
                                      InferenceMode::prompt_gold, {}));
  }

  Campaigns f;
  std::vector<MetricsBundle> bundles;
  std::vector<std::pair<std::string, InferenceMode>> requested{{"m", InferenceMode::zero_shot},
                                                               {"m", InferenceMode::prompt_gold}};
};

TEST_F(Report, PerformanceTableValues) {
  const auto files = render_report(bundles, requested);
  const auto lines = split(files.performance_csv, '\n');
  ASSERT_EQ(lines.size(), 3U);
  EXPECT_EQ(lines[0], "model,mode,d1,d2,d3,overall,fwd_d2_d3,fwd_d1_d2,fwd,bwd_d2_d3,bwd_d1_d2,bwd");
  // Forward: c gets (4.5 - 3) / 4; d is gated out. Backward: c gets (5 - 3) / 4; a and b are gated out.
  EXPECT_EQ(lines[1], "m,zero_shot,4.500,3.000,5.000,4.250,0.000,0.375,0.375,0.500,0.000,0.500");
  EXPECT_EQ(lines[2], "m,prompt_gold,,4.000,4.000,4.000,,,,,,");
  EXPECT_NE(files.markdown.find("| m | prompt_gold | n/a | 4.000 |"), std::string::npos);
}

TEST_F(Report, EmptyTransitionsRenderAsZero) {
  const auto files = render_report(bundles, requested);
  const auto lines = split(files.intensity_frequency_csv, '\n');
  ASSERT_EQ(lines.size(), 3U);  // header plus one row per direction for the zero-shot cell
  EXPECT_EQ(lines[1], "m,zero_shot,forward,0.000,0.375,0.375,0.000,0.375,0.375,0.000,1.000,1.000,0,1,1");
  EXPECT_EQ(lines[2], "m,zero_shot,backward,0.500,0.000,0.500,0.500,0.000,0.500,1.000,0.000,1.000,1,0,1");
}

TEST_F(Report, ModeComparisonAgainstZeroShot) {
  const auto files = render_report(bundles, requested);
  const auto lines = split(files.mode_comparison_csv, '\n');
  ASSERT_EQ(lines.size(), 2U);
  EXPECT_EQ(lines[1], "m,prompt_gold,,1.000,-1.000");
}

TEST_F(Report, MissingCellsAreCoverageErrors) {
  auto wanted = requested;
  wanted.emplace_back("other", InferenceMode::multi_turn);
  try {
    render_report(bundles, wanted);
    FAIL() << "expected CoverageError";
  } catch (const CoverageError& e) {
    EXPECT_EQ(e.missing_ids(), std::vector<std::string>{"other/multi_turn"});
  }
}

TEST_F(Report, IsDeterministicAndRoundTrips) {
  const auto first = render_report(bundles, requested);
  std::vector<MetricsBundle> reloaded;
  for (const auto& b : bundles) reloaded.push_back(MetricsBundle::from_json(nlohmann::json::parse(b.to_json().dump())));
  const auto second = render_report(reloaded, requested);
  EXPECT_EQ(first.markdown, second.markdown);
  EXPECT_EQ(first.performance_csv, second.performance_csv);
  EXPECT_EQ(first.intensity_frequency_csv, second.intensity_frequency_csv);
  EXPECT_EQ(first.mode_comparison_csv, second.mode_comparison_csv);
  EXPECT_THROW(MetricsBundle::from_json(nlohmann::json::object()), DataError);
}

TEST_F(Report, RecordTablesListEveryRecord) {
  const auto& b = bundles.front();
  EXPECT_EQ(split(discrepancy_records_csv(b), '\n').size(), 1 + b.forward_records.size() + b.backward_records.size());
  EXPECT_EQ(split(min_k_csv(b), '\n').size(), 1 + b.min_k.size());
  EXPECT_EQ(split(memorization_csv(b), '\n').size(), 1U);
}

TEST(FormatFixed, NegativeZeroPrintsAsZero) {
  EXPECT_EQ(format_fixed(-0.0, 3), "0.000");
  EXPECT_EQ(format_fixed(-0.0001, 3), "0.000");
  EXPECT_EQ(format_fixed(0.0005, 3), "0.001");
  EXPECT_EQ(format_fixed(4.25, 3), "4.250");
}

}  // namespace
}  // namespace depthwise
