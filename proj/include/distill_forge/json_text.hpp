#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "distill_forge/text.hpp"

namespace distill_forge {

/// Removes insignificant whitespace from a JSON text without re-serializing
/// it: key order, number spellings and string escapes stay byte-identical.
/// Returns nullopt when `s` is not a single valid JSON value.
inline std::optional<std::string> minify_json(std::string_view s) {
  if (!nlohmann::json::accept(s)) return std::nullopt;
  std::string out;
  out.reserve(s.size());
  bool in_string = false;
  bool escaped = false;
  for (char c : s) {
    if (in_string) {
      out.push_back(c);
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
    if (c == '"') in_string = true;
    out.push_back(c);
  }
  return out;
}

/// Minified JSON when `s` parses, else `s` trimmed of surrounding whitespace.
inline std::string normalize_answer(std::string_view s) {
  if (auto minified = minify_json(s)) return *std::move(minified);
  return text::trim(s);
}

}  // namespace distill_forge
