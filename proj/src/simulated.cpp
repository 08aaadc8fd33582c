#include <array>
#include <cstdint>
#include <fmt/format.h>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "depthwise/hashing.hpp"
#include "depthwise/providers.hpp"

namespace depthwise {

namespace {

constexpr std::array<std::string_view, 40> kConcepts = {
    "orthogonal projection",
    "linear independence",
    "a vector basis",
    "eigenvalues",
    "the inner product",
    "matrix rank",
    "gradient descent",
    "regularization",
    "the bias-variance tradeoff",
    "a decision tree",
    "recursion",
    "hash tables",
    "memory allocation",
    "unstructured branching",
    "program maintainability",
    "entropy",
    "the second law of thermodynamics",
    "heat capacity",
    "gravitational mass",
    "inertial mass",
    "time dilation",
    "the equivalence principle",
    "neutrino oscillation",
    "dark matter",
    "oxidation states",
    "carbonyl reactivity",
    "chemical equilibrium",
    "enzyme kinetics",
    "natural selection",
    "genetic drift",
    "chromosome pairing",
    "hybrid sterility",
    "opportunity cost",
    "price elasticity",
    "market equilibrium",
    "comparative advantage",
    "marginal utility",
    "statistical power",
    "sampling bias",
    "the central limit theorem",
};

constexpr std::array<std::string_view, 4> kD2Templates = {
    "How would you apply {a} when analyzing {b}?",
    "Describe the process of using {a} to evaluate {b}.",
    "What factors determine how {a} influences {b}?",
    "Explain how {a} and {b} interact in a worked example.",
};

constexpr std::array<std::string_view, 4> kD1Templates = {
    "What is {a}?",
    "How is {a} defined?",
    "What are the basic components of {a}?",
    "What does the term {a} mean in the study of {b}?",
};

constexpr std::array<std::string_view, 6> kAnswerVerbs = {
    "depends on", "is constrained by", "follows from", "is related to", "can be explained through", "determines",
};

std::uint64_t stable_hash(std::string_view text) {
  return std::stoull(sha256_hex(text).substr(0, 15), nullptr, 16);
}

std::uint64_t stable_hash(std::string_view text, std::string_view salt) {
  std::string joined(text);
  joined.push_back('\x1f');
  joined += salt;
  return stable_hash(joined);
}

std::string_view concept_for(std::string_view seed, std::string_view salt) {
  return kConcepts[stable_hash(seed, salt) % kConcepts.size()];
}

/// Text between the last `begin` marker and the following `end` marker (or the end of input).
std::string between(std::string_view text, std::string_view begin, std::string_view end) {
  auto start = text.rfind(begin);
  if (start == std::string_view::npos) return {};
  start += begin.size();
  auto stop = end.empty() ? std::string_view::npos : text.find(end, start);
  return std::string(text.substr(start, stop == std::string_view::npos ? std::string_view::npos : stop - start));
}

std::string fill(std::string_view tmpl, std::string_view a, std::string_view b) {
  std::string out(tmpl);
  for (auto [key, value] : {std::pair{std::string_view("{a}"), a}, std::pair{std::string_view("{b}"), b}}) {
    for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
      out.replace(pos, key.size(), value);
    }
  }
  return out;
}

std::string answer_text(std::string_view seed) {
  const auto a = concept_for(seed, "ans-a");
  const auto b = concept_for(seed, "ans-b");
  const auto c = concept_for(seed, "ans-c");
  const auto verb = kAnswerVerbs[stable_hash(seed, "verb") % kAnswerVerbs.size()];
  return fmt::format("In short, {} {} {}. A careful treatment also considers {}, which sets the limits of the "
                     "argument.",
                     a, verb, b, c);
}

std::vector<std::string> shallower_questions(std::string_view parent, int child_depth, std::size_t count,
                                             std::string_view salt) {
  const auto& templates = child_depth == 2 ? kD2Templates : kD1Templates;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string s = fmt::format("{}-{}", salt, i);
    const auto a = concept_for(parent, s + "a");
    const auto b = concept_for(parent, s + "b");
    out.push_back(fill(templates[stable_hash(parent, s + "t") % templates.size()], a, b));
  }
  return out;
}

std::string json_questions(const std::string& key, const std::vector<std::string>& questions) {
  nlohmann::ordered_json j;
  j[key] = questions;
  return j.dump();
}

GenerationResult with_meta(std::string text) {
  GenerationResult r;
  r.text = std::move(text);
  r.provider_meta["provider"] = "simulated";
  return r;
}

GenerationResult classify(std::string_view user) {
  const std::string question = between(user, "## Question\n", "\n## Key points");
  int level = 3;
  if (question.starts_with("What is") || question.starts_with("What are")) {
    level = 1;
  } else if (question.starts_with("How") || question.starts_with("Describe")) {
    level = 2;
  }
  return with_meta(fmt::format("The question asks the reader to work with the listed key points at DOK-{}. [RESULT] {}",
                               level, level));
}

GenerationResult decompose(std::string_view user) {
  const bool to_d2 = user.find("Depth-2 question(s) that complement") != std::string_view::npos ||
                     user.find("Create maximum of 4 Depth-2") != std::string_view::npos;
  const bool augment = user.find("complement current Depth") != std::string_view::npos;
  const std::string parent = to_d2 ? between(user, "## Depth-3 question\n", "\n\n## Answer to the Depth-3")
                                   : between(user, "## Depth-2 question\n", "\n\n## Answer to the Depth-2");
  const int child_depth = to_d2 ? 2 : 1;
  if (augment) {
    const std::string count_text = between(user, "## Generated ", " complementary");
    std::size_t count = 1;
    try {
      count = std::stoul(count_text);
    } catch (const std::exception&) {
    }
    const std::string current = between(user, "_questions\": ", "}\n\n## Generated");
    const auto questions = shallower_questions(parent, child_depth, count, "aug" + current);
    return with_meta(json_questions(fmt::format("complementary_Depth-{}_questions", child_depth), questions));
  }
  const std::size_t count = 2 + stable_hash(parent, "count") % 3;
  const auto questions = shallower_questions(parent, child_depth, count, "dec");
  return with_meta(json_questions(fmt::format("Depth-{}_questions", child_depth), questions));
}

GenerationResult judge(std::string_view user) {
  const std::string instruction =
      between(user, "###The instruction to evaluate:\n", "\n\n###Response to evaluate:");
  const std::string response = between(user, "###Response to evaluate:\n", "\n\n###Reference Answer");
  const auto bucket = stable_hash(instruction, response) % 100;
  int score = 5;
  if (bucket < 5) {
    score = 1;
  } else if (bucket < 12) {
    score = 2;
  } else if (bucket < 27) {
    score = 3;
  } else if (bucket < 55) {
    score = 4;
  }
  constexpr std::array<std::string_view, 5> kQuality = {
      "largely incorrect", "partially correct", "generally correct", "mostly correct", "fully correct"};
  return with_meta(fmt::format("Feedback: The response is {} when compared against the reference answer. [RESULT] {}",
                               kQuality[static_cast<std::size_t>(score - 1)], score));
}

GenerationResult respond(const GenerationRequest& request) {
  nlohmann::json seed = nlohmann::json::array({request.model_id});
  for (const auto& m : request.messages) seed.push_back({std::string(to_string(m.role)), m.content});
  const std::string key = seed.dump();
  GenerationResult r = with_meta(answer_text(key));
  if (request.want_logprobs) {
    std::vector<TokenLogprob> lps;
    std::size_t i = 0;
    std::size_t pos = 0;
    const std::string& text = r.text;
    while (pos < text.size()) {
      auto next = text.find(' ', pos + 1);
      if (next == std::string::npos) next = text.size();
      const double lp = -static_cast<double>(stable_hash(key, fmt::format("lp{}", i++)) % 3000) / 1000.0;
      lps.push_back({text.substr(pos, next - pos), lp});
      pos = next;
    }
    r.token_logprobs = std::move(lps);
  }
  return r;
}

}  // namespace

StubProvider::CompleteFn simulated_responder(const PromptLibrary& prompts) {
  const std::string classify_sys = prompts.text(PromptId::classify_system);
  const std::string answer_d3_sys = prompts.text(PromptId::answer_d3_system);
  const std::string answer_sys = prompts.text(PromptId::answer_system);
  const std::string decompose_sys = prompts.text(PromptId::decompose_system);
  const std::string judge_sys = prompts.text(PromptId::judge_system);
  return [=](const GenerationRequest& request) -> GenerationResult {
    std::string system;
    std::string user;
    for (const auto& m : request.messages) {
      if (m.role == Role::system && system.empty()) system = m.content;
      if (m.role == Role::user) user = m.content;
    }
    if (system == classify_sys) return classify(user);
    if (system == answer_d3_sys) {
      return with_meta(answer_text(between(user, "## Question\n", "\n\n## Key points")));
    }
    if (system == answer_sys) return with_meta(answer_text(user));
    if (system == decompose_sys) return decompose(user);
    if (system == judge_sys) return judge(user);
    return respond(request);
  };
}

}  // namespace depthwise
