#include "depthwise/prompts.hpp"

#include <cctype>
#include <fmt/format.h>
#include <stdexcept>

#include "depthwise/errors.hpp"
#include "depthwise/io_util.hpp"

#ifndef DEPTHWISE_DATA_DIR
#error "DEPTHWISE_DATA_DIR must be defined by the build"
#endif

namespace depthwise {

std::string_view prompt_file_stem(PromptId id) {
  switch (id) {
    case PromptId::classify_system: return "classify_system";
    case PromptId::classify_user: return "classify_user";
    case PromptId::answer_d3_system: return "answer_d3_system";
    case PromptId::answer_d3_user: return "answer_d3_user";
    case PromptId::answer_system: return "answer_system";
    case PromptId::answer_user: return "answer_user";
    case PromptId::decompose_system: return "decompose_system";
    case PromptId::decompose_d2_user: return "decompose_d2_user";
    case PromptId::decompose_d1_user: return "decompose_d1_user";
    case PromptId::augment_d2_user: return "augment_d2_user";
    case PromptId::augment_d1_user: return "augment_d1_user";
    case PromptId::inference_system: return "inference_system";
    case PromptId::inference_question_user: return "inference_question_user";
    case PromptId::inference_qa_pair: return "inference_qa_pair";
    case PromptId::inference_context_user: return "inference_context_user";
    case PromptId::inference_multiturn_final_user: return "inference_multiturn_final_user";
    case PromptId::judge_system: return "judge_system";
    case PromptId::judge_user: return "judge_user";
    case PromptId::rating_rubric_summary: return "rating_rubric_summary";
  }
  throw std::logic_error("unhandled PromptId");
}

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::string render_template(std::string_view tmpl, const PromptVars& vars) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{' && i + 1 < tmpl.size() && is_ident_start(tmpl[i + 1])) {
      std::size_t j = i + 1;
      while (j < tmpl.size() && is_ident_char(tmpl[j])) ++j;
      if (j < tmpl.size() && tmpl[j] == '}') {
        const std::string_view name = tmpl.substr(i + 1, j - i - 1);
        auto it = vars.find(name);
        if (it == vars.end()) {
          throw std::invalid_argument(fmt::format("no value for template placeholder {{{}}}", name));
        }
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  PromptLibrary lib;
  for (std::size_t i = 0; i < kPromptCount; ++i) {
    const auto id = static_cast<PromptId>(i);
    const auto path = dir / (std::string(prompt_file_stem(id)) + ".txt");
    if (!std::filesystem::exists(path)) {
      throw ConfigurationError(fmt::format("prompt template '{}' not found", path.string()));
    }
    std::string text = read_text_file(path);
    if (!text.empty() && text.back() == '\n') text.pop_back();
    lib.texts_[i] = std::move(text);
  }
  return lib;
}

std::filesystem::path bundled_data_dir() { return DEPTHWISE_DATA_DIR; }

const PromptLibrary& PromptLibrary::bundled() {
  static const PromptLibrary lib = load(bundled_data_dir() / "prompts");
  return lib;
}

}  // namespace depthwise
