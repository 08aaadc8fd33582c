#include "depthwise/judging.hpp"

#include <fmt/format.h>

#include "depthwise/io_util.hpp"
#include "depthwise/parallel.hpp"
#include "depthwise/parsing.hpp"

namespace depthwise {

using nlohmann::json;
using nlohmann::ordered_json;

ParsedVerdict parse_verdict(const std::string& raw) {
  auto marked = parse_result_marker(raw, 1, 5);
  std::string_view feedback = marked.preamble;
  static constexpr std::string_view kPrefix = "Feedback:";
  if (feedback.starts_with(kPrefix)) feedback.remove_prefix(kPrefix.size());
  return {trim_copy(feedback), marked.value};
}

ordered_json JudgeVerdict::to_json() const {
  ordered_json j;
  j["question_id"] = question_id;
  j["model_id"] = model_id;
  j["mode"] = std::string(to_string(mode));
  j["feedback"] = feedback;
  j["score"] = score;
  return j;
}

JudgeVerdict JudgeVerdict::from_json(const json& j) {
  try {
    JudgeVerdict v;
    v.question_id = j.at("question_id").get<std::string>();
    v.model_id = j.at("model_id").get<std::string>();
    v.mode = parse_mode(j.at("mode").get<std::string>());
    v.feedback = j.at("feedback").get<std::string>();
    v.score = j.at("score").get<int>();
    if (v.score < 1 || v.score > 5) throw DataError(fmt::format("verdict score {} outside 1..5", v.score));
    return v;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed verdict record: {}", e.what()));
  }
}

std::vector<ChatMessage> judge_messages(const PromptLibrary& prompts, const std::string& question,
                                        const std::string& reference_answer, const std::string& response_text) {
  return {{Role::system, prompts.text(PromptId::judge_system)},
          {Role::user, prompts.render(PromptId::judge_user, {{"instruction", question},
                                                             {"response", response_text},
                                                             {"reference_answer", reference_answer}})}};
}

ParsedVerdict judge_response(Gateway& gateway, const PromptLibrary& prompts, const JudgeOptions& options,
                             const std::string& question, const std::string& reference_answer,
                             const std::string& response_text) {
  if (question.empty() || reference_answer.empty() || response_text.empty()) {
    throw PreconditionError("judge inputs must be non-empty");
  }
  GenerationRequest req;
  req.model_id = options.model_id;
  req.messages = judge_messages(prompts, question, reference_answer, response_text);
  req.temperature = options.temperature;
  req.top_p = options.top_p;
  req.max_tokens = options.max_tokens;
  return generate_parsed(gateway, req, options.parse_retries, [](const GenerationResult& r) {
    auto verdict = parse_verdict(r.text);
    if (verdict.feedback.empty()) throw ParseError("judge output has no feedback", r.text);
    return verdict;
  });
}

void VerdictStore::put(JudgeVerdict verdict) {
  auto id = verdict.question_id;
  verdicts_.insert_or_assign(std::move(id), std::move(verdict));
}

const JudgeVerdict* VerdictStore::find(const std::string& question_id) const {
  auto it = verdicts_.find(question_id);
  return it == verdicts_.end() ? nullptr : &it->second;
}

std::map<std::string, int> VerdictStore::scores() const {
  std::map<std::string, int> out;
  for (const auto& [id, v] : verdicts_) out[id] = v.score;
  return out;
}

void VerdictStore::save(const std::filesystem::path& path) const {
  std::vector<ordered_json> records;
  for (const auto& [_, v] : verdicts_) records.push_back(v.to_json());
  write_jsonl_file(path, records);
}

VerdictStore VerdictStore::load(const std::filesystem::path& path) {
  VerdictStore store;
  for (const auto& j : read_jsonl_file(path)) store.put(JudgeVerdict::from_json(j));
  return store;
}

VerdictStore judge_responses(const KnowledgeGraph& graph, const ResponseStore& responses, Gateway& gateway,
                             const PromptLibrary& prompts, const JudgeOptions& options) {
  const auto items = responses.sorted();
  auto verdicts = parallel_map(items.size(), gateway.parallelism(), [&](std::size_t i) {
    const auto& r = items[i];
    const auto& node = graph.node(r.question_id);
    const auto parsed = judge_response(gateway, prompts, options, node.text, node.reference_answer, r.text);
    return JudgeVerdict{r.question_id, r.model_id, r.mode, parsed.feedback, parsed.score};
  });
  VerdictStore store;
  for (auto& v : verdicts) store.put(std::move(v));
  return store;
}

}  // namespace depthwise
