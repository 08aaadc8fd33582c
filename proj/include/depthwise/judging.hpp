#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthwise/gateway.hpp"
#include "depthwise/graph.hpp"
#include "depthwise/inference.hpp"
#include "depthwise/prompts.hpp"

namespace depthwise {

struct JudgeOptions {
  std::string model_id;
  double temperature = 1.0;
  double top_p = 0.9;
  int max_tokens = 1024;
  int parse_retries = 3;
};

struct ParsedVerdict {
  std::string feedback;
  int score = 0;
};

/// Score from the last "[RESULT] n" marker (1..5); feedback is the text before it without a
/// leading "Feedback:". Throws ParseError.
ParsedVerdict parse_verdict(const std::string& raw);

struct JudgeVerdict {
  std::string question_id;
  std::string model_id;
  InferenceMode mode = InferenceMode::zero_shot;
  std::string feedback;
  int score = 0;

  nlohmann::ordered_json to_json() const;
  static JudgeVerdict from_json(const nlohmann::json& j);
};

/// System and user messages of the factual-correctness judge prompt.
std::vector<ChatMessage> judge_messages(const PromptLibrary& prompts, const std::string& question,
                                        const std::string& reference_answer, const std::string& response_text);

/// Scores one response. Malformed or empty-feedback outputs are re-generated up to
/// `options.parse_retries` times before the ParseError surfaces.
ParsedVerdict judge_response(Gateway& gateway, const PromptLibrary& prompts, const JudgeOptions& options,
                             const std::string& question, const std::string& reference_answer,
                             const std::string& response_text);

/// Verdicts keyed by question id for one (model, mode) campaign.
class VerdictStore {
public:
  void put(JudgeVerdict verdict);
  const JudgeVerdict* find(const std::string& question_id) const;
  std::size_t size() const { return verdicts_.size(); }
  const std::map<std::string, JudgeVerdict>& all() const { return verdicts_; }

  /// Question id -> score.
  std::map<std::string, int> scores() const;

  void save(const std::filesystem::path& path) const;
  static VerdictStore load(const std::filesystem::path& path);

private:
  std::map<std::string, JudgeVerdict> verdicts_;
};

/// Judges every stored response against the graph's reference answers, concurrently up to the
/// gateway's parallelism.
VerdictStore judge_responses(const KnowledgeGraph& graph, const ResponseStore& responses, Gateway& gateway,
                             const PromptLibrary& prompts, const JudgeOptions& options);

}  // namespace depthwise
