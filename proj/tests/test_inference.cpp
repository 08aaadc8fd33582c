#include <gtest/gtest.h>

#include "depthwise/graph_io.hpp"
#include "depthwise/inference.hpp"
#include "depthwise/io_util.hpp"
#include "depthwise/providers.hpp"
#include "support.hpp"

namespace depthwise {
namespace {

using nlohmann::json;

KnowledgeGraph toy_graph() { return load_graph(testing::source_dir() / "data" / "toy_graph.json"); }

/// Answers "answer to <last user message>" with one logprob per word.
std::shared_ptr<StubProvider> answering_provider() {
  return std::make_shared<StubProvider>("answers", std::vector<std::string>{"m"}, [](const GenerationRequest& r) {
    GenerationResult out;
    out.text = "answer #" + std::to_string(r.messages.size()) + " to " + r.messages.back().content.substr(0, 40);
    if (r.want_logprobs) out.token_logprobs = std::vector<TokenLogprob>{{"answer", -0.1}, {"#", -2.0}};
    return out;
  });
}

CampaignOptions campaign(InferenceMode mode, const ResponseStore* zero_shot = nullptr) {
  CampaignOptions o;
  o.model_id = "m";
  o.mode = mode;
  o.zero_shot = zero_shot;
  return o;
}

TEST(InferenceMode, NamesRoundTrip) {
  for (auto mode : kAllModes) EXPECT_EQ(parse_mode(to_string(mode)), mode);
  EXPECT_THROW(parse_mode("few_shot"), ConfigurationError);
  EXPECT_EQ(parse_multi_turn_source("zero_shot_cache"), MultiTurnSource::zero_shot_cache);
}

TEST(EligibleIds, ContextModesSkipDepthOne) {
  const auto g = toy_graph();
  EXPECT_EQ(eligible_ids(g, InferenceMode::zero_shot).size(), g.node_count());
  EXPECT_EQ(eligible_ids(g, InferenceMode::multi_turn).size(), g.node_count());
  const auto ctx = eligible_ids(g, InferenceMode::prompt_gold);
  EXPECT_EQ(ctx.size(), g.node_count() - g.ids_at_depth(1).size());
  EXPECT_TRUE(std::is_sorted(ctx.begin(), ctx.end()));
}

TEST(RunCampaign, AnswersEveryEligibleNode) {
  const auto g = toy_graph();
  Gateway gw({answering_provider()});
  const auto zs = run_campaign(g, gw, PromptLibrary::bundled(), campaign(InferenceMode::zero_shot));
  ASSERT_TRUE(zs.complete) << zs.error;
  EXPECT_EQ(zs.responses.size(), g.node_count());
  for (const auto& r : zs.responses.sorted()) {
    EXPECT_TRUE(r.token_logprobs.has_value());
    EXPECT_EQ(r.prompt_messages.size(), 2U);
  }
  EXPECT_EQ(zs.manifest.at("expected_responses"), g.node_count());
  EXPECT_EQ(zs.manifest.at("gateway").at("provider_calls"), g.node_count());

  const auto gold = run_campaign(g, gw, PromptLibrary::bundled(), campaign(InferenceMode::prompt_gold));
  ASSERT_TRUE(gold.complete);
  EXPECT_EQ(gold.responses.size(), eligible_ids(g, InferenceMode::prompt_gold).size());

  const auto pred = run_campaign(g, gw, PromptLibrary::bundled(), campaign(InferenceMode::prompt_pred, &zs.responses));
  ASSERT_TRUE(pred.complete);
  for (const auto& r : pred.responses.sorted()) {
    // Every predecessor answer in the prompt is the stored zero-shot prediction.
    for (const auto& p : g.predecessor_ids(r.question_id)) {
      EXPECT_NE(r.prompt_messages.back().content.find(zs.responses.find(p)->text), std::string::npos);
    }
  }
}

TEST(RunCampaign, PromptPredNeedsZeroShot) {
  Gateway gw({answering_provider()});
  EXPECT_THROW(run_campaign(toy_graph(), gw, PromptLibrary::bundled(), campaign(InferenceMode::prompt_pred)),
               PreconditionError);
  auto mt = campaign(InferenceMode::multi_turn);
  mt.multi_turn_source = MultiTurnSource::zero_shot_cache;
  EXPECT_THROW(run_campaign(toy_graph(), gw, PromptLibrary::bundled(), mt), PreconditionError);
}

TEST(RunCampaign, MultiTurnSessionsAlternateRoles) {
  const auto g = toy_graph();
  Gateway gw({answering_provider()});
  const auto result = run_campaign(g, gw, PromptLibrary::bundled(), campaign(InferenceMode::multi_turn));
  ASSERT_TRUE(result.complete) << result.error;
  EXPECT_EQ(result.manifest.at("depth1_degenerate_single_turn"), g.ids_at_depth(1).size());
  for (const auto& r : result.responses.sorted()) {
    const auto& msgs = r.prompt_messages;
    ASSERT_GE(msgs.size(), 2U);
    EXPECT_EQ(msgs.front().role, Role::system);
    EXPECT_EQ(msgs.back().role, Role::user);
    for (std::size_t i = 1; i < msgs.size(); ++i) {
      EXPECT_EQ(msgs[i].role, i % 2 == 1 ? Role::user : Role::assistant) << r.question_id << " turn " << i;
    }
    const std::size_t preds = g.predecessor_ids(r.question_id).size();
    EXPECT_EQ(msgs.size(), 2 + 2 * preds);
  }

  // The cached-source variant reuses zero-shot answers verbatim.
  const auto zs = run_campaign(g, gw, PromptLibrary::bundled(), campaign(InferenceMode::zero_shot));
  auto cached = campaign(InferenceMode::multi_turn, &zs.responses);
  cached.multi_turn_source = MultiTurnSource::zero_shot_cache;
  const auto from_cache = run_campaign(g, gw, PromptLibrary::bundled(), cached);
  ASSERT_TRUE(from_cache.complete);
  for (const auto& id : g.ids_at_depth(2)) {
    const auto& msgs = from_cache.responses.find(id)->prompt_messages;
    const auto& preds = g.predecessor_ids(id);
    for (std::size_t k = 0; k < preds.size(); ++k) {
      EXPECT_EQ(msgs[2 + 2 * k].content, zs.responses.find(preds[k])->text);
    }
  }
}

TEST(RunCampaign, FailureKeepsPartialResults) {
  const auto g = toy_graph();
  const auto d2 = g.ids_at_depth(2);
  auto flaky = std::make_shared<StubProvider>("flaky", std::vector<std::string>{"m"}, [&](const GenerationRequest& r) {
    if (r.messages.back().content.find(g.node(d2.front()).text) != std::string::npos) {
      throw ProviderError("model refused", false);
    }
    return GenerationResult{"fine", std::nullopt, json::object()};
  });
  Gateway gw({flaky});
  const auto result = run_campaign(g, gw, PromptLibrary::bundled(), campaign(InferenceMode::zero_shot));
  EXPECT_FALSE(result.complete);
  EXPECT_NE(result.error.find("model refused"), std::string::npos);
  for (const auto& id : g.ids_at_depth(1)) EXPECT_TRUE(result.responses.contains(id));
  EXPECT_FALSE(result.responses.contains(d2.front()));
  for (const auto& id : g.ids_at_depth(3)) EXPECT_FALSE(result.responses.contains(id));
  EXPECT_EQ(result.manifest.at("complete"), false);
}

TEST(RunCampaign, IsDeterministicUnderParallelism) {
  const auto g = toy_graph();
  auto run = [&](std::size_t parallelism) {
    Gateway::Options o;
    o.parallelism = parallelism;
    Gateway gw({answering_provider()}, nullptr, o);
    testing::TempDir dir;
    run_campaign(g, gw, PromptLibrary::bundled(), campaign(InferenceMode::multi_turn)).responses.save(dir / "r.jsonl");
    return read_text_file(dir / "r.jsonl");
  };
  EXPECT_EQ(run(1), run(8));
}

TEST(ResponseStore, JsonlRoundTrip) {
  ResponseStore store;
  ModelResponse b;
  b.question_id = "d2-b";
  b.model_id = "m";
  b.mode = InferenceMode::prompt_gold;
  b.prompt_messages = {{Role::system, "s"}, {Role::user, "u"}};
  b.text = "text with \"quotes\"\nand lines";
  b.token_logprobs = std::vector<TokenLogprob>{{"text", -0.5}};
  ModelResponse a = b;
  a.question_id = "d1-a";
  a.token_logprobs.reset();
  store.put(b);
  store.put(a);
  testing::TempDir dir;
  store.save(dir / "r.jsonl");
  const auto back = ResponseStore::load(dir / "r.jsonl");
  ASSERT_EQ(back.size(), 2U);
  EXPECT_EQ(back.sorted().front().question_id, "d1-a");
  const auto* rb = back.find("d2-b");
  ASSERT_NE(rb, nullptr);
  EXPECT_EQ(rb->text, b.text);
  EXPECT_EQ(rb->mode, InferenceMode::prompt_gold);
  EXPECT_EQ(rb->prompt_messages, b.prompt_messages);
  EXPECT_EQ(rb->token_logprobs, b.token_logprobs);
  EXPECT_FALSE(back.find("d1-a")->token_logprobs.has_value());
}

}  // namespace
}  // namespace depthwise
