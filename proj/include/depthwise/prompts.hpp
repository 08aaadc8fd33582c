#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace depthwise {

enum class PromptId {
  classify_system,
  classify_user,
  answer_d3_system,
  answer_d3_user,
  answer_system,
  answer_user,
  decompose_system,
  decompose_d2_user,
  decompose_d1_user,
  augment_d2_user,
  augment_d1_user,
  inference_system,
  inference_question_user,
  inference_qa_pair,
  inference_context_user,
  inference_multiturn_final_user,
  judge_system,
  judge_user,
  rating_rubric_summary,
};

inline constexpr std::size_t kPromptCount = 19;

/// File stem of a template, e.g. "judge_user" -> judge_user.txt.
std::string_view prompt_file_stem(PromptId id);

using PromptVars = std::map<std::string, std::string, std::less<>>;

/// Replaces every `{identifier}` placeholder in one pass. Braces that do not enclose a bare
/// identifier (JSON examples, "{explanation for ...}") are literal. A placeholder without a
/// value throws std::invalid_argument; substituted values are never re-expanded.
std::string render_template(std::string_view tmpl, const PromptVars& vars);

/// Template texts loaded from a directory of plain-text files.
class PromptLibrary {
public:
  /// Loads every template; throws ConfigurationError when a file is missing.
  static PromptLibrary load(const std::filesystem::path& dir);
  /// The templates shipped with the project.
  static const PromptLibrary& bundled();

  const std::string& text(PromptId id) const { return texts_[static_cast<std::size_t>(id)]; }
  std::string render(PromptId id, const PromptVars& vars) const { return render_template(text(id), vars); }

private:
  std::array<std::string, kPromptCount> texts_;
};

std::filesystem::path bundled_data_dir();

}  // namespace depthwise
