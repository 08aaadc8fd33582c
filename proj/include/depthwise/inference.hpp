#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthwise/gateway.hpp"
#include "depthwise/graph.hpp"
#include "depthwise/prompts.hpp"

namespace depthwise {

enum class InferenceMode { zero_shot, prompt_gold, prompt_pred, multi_turn };

inline constexpr std::array<InferenceMode, 4> kAllModes = {InferenceMode::zero_shot, InferenceMode::prompt_gold,
                                                           InferenceMode::prompt_pred, InferenceMode::multi_turn};

std::string_view to_string(InferenceMode mode);
/// Throws ConfigurationError for unknown names.
InferenceMode parse_mode(std::string_view name);

struct ModelResponse {
  std::string question_id;
  std::string model_id;
  InferenceMode mode = InferenceMode::zero_shot;
  std::vector<ChatMessage> prompt_messages;
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::ordered_json to_json() const;
  static ModelResponse from_json(const nlohmann::json& j);
};

/// Responses of one (model, mode) campaign keyed by question id. Safe for concurrent puts.
class ResponseStore {
public:
  ResponseStore() = default;
  ResponseStore(const ResponseStore& other);
  ResponseStore& operator=(const ResponseStore& other);

  void put(ModelResponse response);
  const ModelResponse* find(const std::string& question_id) const;
  bool contains(const std::string& question_id) const { return find(question_id) != nullptr; }
  std::size_t size() const;
  /// Responses sorted by question id.
  std::vector<ModelResponse> sorted() const;

  /// JSONL, one response per line, sorted by question id.
  void save(const std::filesystem::path& path) const;
  static ResponseStore load(const std::filesystem::path& path);

private:
  mutable std::mutex mutex_;
  std::map<std::string, ModelResponse> responses_;
};

/// Prompt messages for `node` under `mode`.
///
/// prompt_gold and prompt_pred list one Q/A pair per direct predecessor in id order, with
/// answers from the reference answers or from `prior` (zero-shot predictions). multi_turn asks
/// each predecessor as its own turn, with the assistant turns taken from `prior`. Context modes
/// need depth >= 2 (PreconditionError); a missing prior answer raises DataError.
std::vector<ChatMessage> build_prompt(const QuestionNode& node, InferenceMode mode, const KnowledgeGraph& graph,
                                      const ResponseStore* prior, const PromptLibrary& prompts);

/// Answers a multi-turn prefix ending with a user turn for `predecessor`.
using TurnAnswerer = std::function<std::string(const std::vector<ChatMessage>& prefix, const QuestionNode& predecessor)>;

/// Multi-turn conversation for `node` whose assistant turns come from `answer`.
std::vector<ChatMessage> build_multi_turn_session(const QuestionNode& node, const KnowledgeGraph& graph,
                                                  const PromptLibrary& prompts, const TurnAnswerer& answer);

struct SamplingParams {
  double temperature = 0.7;
  double top_p = 1.0;
  int max_tokens = 1024;
};

/// Where multi-turn assistant turns come from.
enum class MultiTurnSource {
  in_session,       // each predecessor is asked and answered inside the session
  zero_shot_cache,  // stored zero-shot answers
};

std::string_view to_string(MultiTurnSource source);
MultiTurnSource parse_multi_turn_source(std::string_view name);

struct CampaignOptions {
  std::string model_id;
  InferenceMode mode = InferenceMode::zero_shot;
  SamplingParams sampling;
  bool want_logprobs = true;
  MultiTurnSource multi_turn_source = MultiTurnSource::in_session;
  /// Zero-shot responses of the same model; required by prompt_pred and by zero_shot_cache.
  const ResponseStore* zero_shot = nullptr;
};

struct CampaignResult {
  ResponseStore responses;
  bool complete = false;
  std::string error;
  nlohmann::ordered_json manifest;
};

/// Answers every eligible node depth by depth (1, 2, 3). Nodes inside a depth run concurrently up
/// to the gateway's parallelism. An error stops the campaign; responses gathered so far are
/// returned with `complete` false.
CampaignResult run_campaign(const KnowledgeGraph& graph, Gateway& gateway, const PromptLibrary& prompts,
                            const CampaignOptions& options);

/// Ids answered under `mode`: all nodes for zero_shot and multi_turn, depths 2 and 3 otherwise.
std::vector<std::string> eligible_ids(const KnowledgeGraph& graph, InferenceMode mode);

}  // namespace depthwise
