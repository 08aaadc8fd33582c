#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "depthwise/gateway.hpp"

namespace depthwise {

struct MarkedResult {
  std::string preamble;  // text before the marker, trimmed
  int value;
};

/// Finds the last "[RESULT]" marker and the integer after it. Throws ParseError when the marker
/// is missing, is not followed by an integer, or the integer lies outside [lo, hi].
MarkedResult parse_result_marker(const std::string& raw, int lo, int hi);

/// Parses the outermost {...} span of `raw` as JSON. Python-style single-quoted strings, as
/// found in few-shot examples, are accepted. Throws ParseError.
nlohmann::json parse_embedded_object(const std::string& raw);

std::string trim_copy(std::string_view text);

/// Issues `request`, passes the text to `parse`, and on ParseError re-generates up to
/// `max_retries` more times, bypassing the cached copy of the failed output. The last
/// ParseError propagates.
template <typename Parse>
auto generate_parsed(Gateway& gateway, const GenerationRequest& request, int max_retries, Parse&& parse)
    -> decltype(parse(std::declval<const GenerationResult&>())) {
  CachePolicy policy = CachePolicy::use;
  for (int attempt = 0;; ++attempt) {
    const GenerationResult result = gateway.complete(request, policy);
    try {
      return parse(result);
    } catch (const ParseError&) {
      if (attempt >= max_retries) throw;
      policy = CachePolicy::refresh;
    }
  }
}

}  // namespace depthwise
