#include "depthwise/parsing.hpp"

#include <cctype>
#include <fmt/format.h>

namespace depthwise {

std::string trim_copy(std::string_view text) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return std::string(text);
}

MarkedResult parse_result_marker(const std::string& raw, int lo, int hi) {
  static constexpr std::string_view kMarker = "[RESULT]";
  const auto pos = raw.rfind(kMarker);
  if (pos == std::string::npos) throw ParseError("no [RESULT] marker in model output", raw);
  std::size_t i = pos + kMarker.size();
  while (i < raw.size() && (raw[i] == ' ' || raw[i] == '\t')) ++i;
  const std::size_t digits_start = i;
  while (i < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
  if (i == digits_start || i - digits_start > 6) {
    throw ParseError("[RESULT] marker is not followed by an integer", raw);
  }
  const int value = std::stoi(raw.substr(digits_start, i - digits_start));
  if (value < lo || value > hi) {
    throw ParseError(fmt::format("[RESULT] value {} outside {}..{}", value, lo, hi), raw);
  }
  return {trim_copy(std::string_view(raw).substr(0, pos)), value};
}

namespace {

// Rewrites single-quoted string literals as JSON strings; double-quoted ones pass through.
std::string python_quotes_to_json(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '"') {
      out.push_back(c);
      for (++i; i < text.size(); ++i) {
        out.push_back(text[i]);
        if (text[i] == '\\' && i + 1 < text.size()) {
          out.push_back(text[++i]);
        } else if (text[i] == '"') {
          break;
        }
      }
      continue;
    }
    if (c != '\'') {
      out.push_back(c);
      continue;
    }
    std::string literal;
    for (++i; i < text.size() && text[i] != '\''; ++i) {
      if (text[i] == '\\' && i + 1 < text.size()) {
        literal.push_back(text[++i]);
      } else {
        literal.push_back(text[i]);
      }
    }
    out += nlohmann::json(literal).dump();
  }
  return out;
}

}  // namespace

nlohmann::json parse_embedded_object(const std::string& raw) {
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw ParseError("model output contains no JSON object", raw);
  }
  const std::string span = raw.substr(open, close - open + 1);
  for (const std::string& candidate : {span, python_quotes_to_json(span)}) {
    try {
      auto j = nlohmann::json::parse(candidate);
      if (j.is_object()) return j;
    } catch (const nlohmann::json::exception&) {
    }
  }
  throw ParseError("model output is not a valid JSON object", raw);
}

}  // namespace depthwise
