#include "depthwise/inference.hpp"

#include <fmt/format.h>
#include <set>
#include <spdlog/spdlog.h>

#include "depthwise/io_util.hpp"
#include "depthwise/parallel.hpp"

namespace depthwise {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(InferenceMode mode) {
  switch (mode) {
    case InferenceMode::zero_shot: return "zero_shot";
    case InferenceMode::prompt_gold: return "prompt_gold";
    case InferenceMode::prompt_pred: return "prompt_pred";
    case InferenceMode::multi_turn: return "multi_turn";
  }
  return "unknown";
}

InferenceMode parse_mode(std::string_view name) {
  for (auto m : kAllModes) {
    if (to_string(m) == name) return m;
  }
  throw ConfigurationError(
      fmt::format("unknown inference mode '{}' (expected zero_shot, prompt_gold, prompt_pred or multi_turn)", name));
}

std::string_view to_string(MultiTurnSource source) {
  return source == MultiTurnSource::in_session ? "in_session" : "zero_shot_cache";
}

MultiTurnSource parse_multi_turn_source(std::string_view name) {
  if (name == "in_session") return MultiTurnSource::in_session;
  if (name == "zero_shot_cache") return MultiTurnSource::zero_shot_cache;
  throw ConfigurationError(fmt::format("unknown multi-turn source '{}'", name));
}

// ---------------------------------------------------------------------------
// ModelResponse / ResponseStore

ordered_json ModelResponse::to_json() const {
  ordered_json j;
  j["question_id"] = question_id;
  j["model_id"] = model_id;
  j["mode"] = std::string(to_string(mode));
  j["prompt_messages"] = ordered_json::array();
  for (const auto& m : prompt_messages) {
    ordered_json msg;
    msg["role"] = std::string(to_string(m.role));
    msg["content"] = m.content;
    j["prompt_messages"].push_back(std::move(msg));
  }
  j["text"] = text;
  if (token_logprobs) {
    j["token_logprobs"] = ordered_json::array();
    for (const auto& t : *token_logprobs) j["token_logprobs"].push_back(ordered_json::array({t.token, t.logprob}));
  } else {
    j["token_logprobs"] = nullptr;
  }
  j["meta"] = meta;
  return j;
}

ModelResponse ModelResponse::from_json(const json& j) {
  try {
    ModelResponse r;
    r.question_id = j.at("question_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    for (const auto& m : j.at("prompt_messages")) {
      r.prompt_messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    }
    r.text = j.at("text").get<std::string>();
    if (j.contains("token_logprobs") && !j.at("token_logprobs").is_null()) {
      std::vector<TokenLogprob> lps;
      for (const auto& t : j.at("token_logprobs")) lps.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
      r.token_logprobs = std::move(lps);
    }
    if (j.contains("meta")) r.meta = j.at("meta");
    return r;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed response record: {}", e.what()));
  }
}

ResponseStore::ResponseStore(const ResponseStore& other) {
  std::lock_guard lock(other.mutex_);
  responses_ = other.responses_;
}

ResponseStore& ResponseStore::operator=(const ResponseStore& other) {
  if (this == &other) return *this;
  std::map<std::string, ModelResponse> copy;
  {
    std::lock_guard lock(other.mutex_);
    copy = other.responses_;
  }
  std::lock_guard lock(mutex_);
  responses_ = std::move(copy);
  return *this;
}

void ResponseStore::put(ModelResponse response) {
  std::lock_guard lock(mutex_);
  auto id = response.question_id;
  responses_.insert_or_assign(std::move(id), std::move(response));
}

const ModelResponse* ResponseStore::find(const std::string& question_id) const {
  std::lock_guard lock(mutex_);
  auto it = responses_.find(question_id);
  return it == responses_.end() ? nullptr : &it->second;
}

std::size_t ResponseStore::size() const {
  std::lock_guard lock(mutex_);
  return responses_.size();
}

std::vector<ModelResponse> ResponseStore::sorted() const {
  std::lock_guard lock(mutex_);
  std::vector<ModelResponse> out;
  out.reserve(responses_.size());
  for (const auto& [_, r] : responses_) out.push_back(r);
  return out;
}

void ResponseStore::save(const std::filesystem::path& path) const {
  std::vector<ordered_json> records;
  for (const auto& r : sorted()) records.push_back(r.to_json());
  write_jsonl_file(path, records);
}

ResponseStore ResponseStore::load(const std::filesystem::path& path) {
  ResponseStore store;
  for (const auto& j : read_jsonl_file(path)) store.put(ModelResponse::from_json(j));
  return store;
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

const std::string& prior_answer(const ResponseStore* prior, const std::string& id, const QuestionNode& node) {
  const ModelResponse* r = prior == nullptr ? nullptr : prior->find(id);
  if (r == nullptr) {
    throw DataError(fmt::format("no zero-shot prediction for predecessor {} of {}", id, node.id));
  }
  return r->text;
}

std::vector<ChatMessage> zero_shot_messages(const QuestionNode& node, const PromptLibrary& prompts) {
  return {{Role::system, prompts.text(PromptId::inference_system)},
          {Role::user, prompts.render(PromptId::inference_question_user, {{"question", node.text}})}};
}

}  // namespace

std::vector<ChatMessage> build_multi_turn_session(const QuestionNode& node, const KnowledgeGraph& graph,
                                                  const PromptLibrary& prompts, const TurnAnswerer& answer) {
  if (node.depth.value() < 2) {
    throw PreconditionError(fmt::format("depth-1 node {} has no shallower questions for a multi-turn session", node.id));
  }
  std::vector<ChatMessage> messages{{Role::system, prompts.text(PromptId::inference_system)}};
  for (const auto& pid : graph.predecessor_ids(node.id)) {
    const auto& pred = graph.node(pid);
    messages.push_back({Role::user, prompts.render(PromptId::inference_question_user, {{"question", pred.text}})});
    std::string reply = answer(messages, pred);
    messages.push_back({Role::assistant, std::move(reply)});
  }
  messages.push_back({Role::user, prompts.render(PromptId::inference_multiturn_final_user, {{"question", node.text}})});
  return messages;
}

std::vector<ChatMessage> build_prompt(const QuestionNode& node, InferenceMode mode, const KnowledgeGraph& graph,
                                      const ResponseStore* prior, const PromptLibrary& prompts) {
  if (mode == InferenceMode::zero_shot) return zero_shot_messages(node, prompts);
  if (node.depth.value() < 2) {
    throw PreconditionError(
        fmt::format("{} needs shallower questions; depth-1 node {} has none", to_string(mode), node.id));
  }
  if (mode == InferenceMode::multi_turn) {
    return build_multi_turn_session(node, graph, prompts, [&](const auto&, const QuestionNode& pred) {
      return prior_answer(prior, pred.id, node);
    });
  }
  std::string pairs;
  for (const auto& pid : graph.predecessor_ids(node.id)) {
    const auto& pred = graph.node(pid);
    const std::string& answer =
        mode == InferenceMode::prompt_gold ? pred.reference_answer : prior_answer(prior, pid, node);
    if (!pairs.empty()) pairs.push_back('\n');
    pairs += prompts.render(PromptId::inference_qa_pair, {{"question", pred.text}, {"answer", answer}});
  }
  return {{Role::system, prompts.text(PromptId::inference_system)},
          {Role::user, prompts.render(PromptId::inference_context_user, {{"qa_pairs", pairs}, {"question", node.text}})}};
}

std::vector<std::string> eligible_ids(const KnowledgeGraph& graph, InferenceMode mode) {
  if (mode == InferenceMode::zero_shot || mode == InferenceMode::multi_turn) return graph.sorted_ids();
  auto ids = graph.ids_at_depth(2);
  auto d3 = graph.ids_at_depth(3);
  ids.insert(ids.end(), d3.begin(), d3.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------
// Campaign

CampaignResult run_campaign(const KnowledgeGraph& graph, Gateway& gateway, const PromptLibrary& prompts,
                            const CampaignOptions& options) {
  const bool needs_zero_shot =
      options.mode == InferenceMode::prompt_pred ||
      (options.mode == InferenceMode::multi_turn && options.multi_turn_source == MultiTurnSource::zero_shot_cache);
  if (needs_zero_shot && options.zero_shot == nullptr) {
    throw PreconditionError(fmt::format("{} needs the zero-shot responses of {}; run zero_shot first",
                                        to_string(options.mode), options.model_id));
  }

  auto make_request = [&](std::vector<ChatMessage> messages) {
    GenerationRequest req;
    req.model_id = options.model_id;
    req.messages = std::move(messages);
    req.temperature = options.sampling.temperature;
    req.top_p = options.sampling.top_p;
    req.max_tokens = options.sampling.max_tokens;
    req.want_logprobs = options.want_logprobs;
    return req;
  };

  CampaignResult result;
  const auto before = gateway.counters();
  const std::string started = utc_timestamp();
  std::size_t expected = 0;
  std::atomic<std::size_t> degenerate{0};

  auto answer_node = [&](const QuestionNode& node) {
    std::vector<ChatMessage> messages;
    bool degenerate_turn = false;
    if (options.mode == InferenceMode::multi_turn && node.depth.value() == 1) {
      messages = zero_shot_messages(node, prompts);
      degenerate_turn = true;
    } else if (options.mode == InferenceMode::multi_turn && options.multi_turn_source == MultiTurnSource::in_session) {
      messages = build_multi_turn_session(node, graph, prompts, [&](const std::vector<ChatMessage>& prefix, const auto&) {
        return gateway.complete(make_request(prefix)).text;
      });
    } else {
      messages = build_prompt(node, options.mode, graph, options.zero_shot, prompts);
    }
    auto generated = gateway.complete(make_request(messages));
    if (generated.text.empty()) throw GenerationError(fmt::format("empty answer for {}", node.id));
    ModelResponse r;
    r.question_id = node.id;
    r.model_id = options.model_id;
    r.mode = options.mode;
    r.prompt_messages = std::move(messages);
    r.text = std::move(generated.text);
    r.token_logprobs = std::move(generated.token_logprobs);
    r.meta = std::move(generated.provider_meta);
    if (degenerate_turn) {
      r.meta["degenerate_single_turn"] = true;
      ++degenerate;
    }
    result.responses.put(std::move(r));
    return true;
  };

  try {
    const auto eligible = eligible_ids(graph, options.mode);
    expected = eligible.size();
    for (int depth = 1; depth <= 3; ++depth) {
      std::vector<std::string> ids;
      for (const auto& id : eligible) {
        if (graph.node(id).depth.value() == depth) ids.push_back(id);
      }
      parallel_map(ids.size(), gateway.parallelism(), [&](std::size_t i) { return answer_node(graph.node(ids[i])); });
      spdlog::debug("{} {}: depth {} answered ({} nodes)", options.model_id, to_string(options.mode), depth, ids.size());
    }
    result.complete = true;
  } catch (const std::exception& e) {
    result.error = e.what();
    spdlog::error("campaign {} / {} stopped: {}", options.model_id, to_string(options.mode), e.what());
  }

  const auto after = gateway.counters();
  std::set<std::string> logprob_sources;
  std::size_t without_logprobs = 0;
  for (const auto& r : result.responses.sorted()) {
    if (r.meta.contains("logprob_source")) logprob_sources.insert(r.meta.at("logprob_source").get<std::string>());
    if (!r.token_logprobs) ++without_logprobs;
  }
  if (logprob_sources.empty() && options.want_logprobs && without_logprobs < result.responses.size()) {
    logprob_sources.insert("generation");
  }

  ordered_json& m = result.manifest;
  m["model_id"] = options.model_id;
  m["mode"] = std::string(to_string(options.mode));
  if (options.mode == InferenceMode::multi_turn) {
    m["multi_turn_source"] = std::string(to_string(options.multi_turn_source));
    m["depth1_degenerate_single_turn"] = degenerate.load();
  }
  m["sampling"] = {{"temperature", options.sampling.temperature},
                   {"top_p", options.sampling.top_p},
                   {"max_tokens", options.sampling.max_tokens}};
  m["want_logprobs"] = options.want_logprobs;
  m["logprob_sources"] = std::vector<std::string>(logprob_sources.begin(), logprob_sources.end());
  m["responses_without_logprobs"] = without_logprobs;
  m["started_at"] = started;
  m["finished_at"] = utc_timestamp();
  m["expected_responses"] = expected;
  m["responses"] = result.responses.size();
  m["complete"] = result.complete;
  if (!result.complete) m["error"] = result.error;
  m["gateway"] = {{"provider_calls", after.provider_calls - before.provider_calls},
                  {"provider_failures", after.provider_failures - before.provider_failures},
                  {"cache_hits", after.cache_hits - before.cache_hits},
                  {"cache_misses", after.cache_misses - before.cache_misses}};
  return result;
}

}  // namespace depthwise
