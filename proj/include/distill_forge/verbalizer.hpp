#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "distill_forge/error.hpp"
#include "distill_forge/text.hpp"
#include "distill_forge/types.hpp"

namespace distill_forge::verbalizer {

/// Character grid used to place token texts.
struct GridParams {
  double char_width = 1.0;    // coordinate units per column
  double line_height = 1.0;   // coordinate units per text line
  double line_cluster_tolerance = 0.5;
  double blank_line_gap_ratio = 1.5;

  bool valid() const {
    return char_width > 0 && line_height > 0 && line_cluster_tolerance > 0 &&
           blank_line_gap_ratio > 0;
  }
};

/// Grid estimates never go below page extent / kMinCellFraction, which bounds
/// rendered line width on pages full of degenerate boxes.
inline constexpr double kMinCellFraction = 4096.0;

inline constexpr const char* kDefaultPageSeparator = "\n=== page {n} ===\n";

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace detail

/// char_width is the median per-character width of the tokens, line_height
/// the median token height. Throws on a page without tokens.
inline GridParams estimate_grid(const DocumentPage& page) {
  if (page.tokens.empty()) throw validation_error("estimate_grid: page has no tokens");
  std::vector<double> per_char;
  std::vector<double> heights;
  per_char.reserve(page.tokens.size());
  heights.reserve(page.tokens.size());
  for (const auto& t : page.tokens) {
    const auto chars = std::max<std::size_t>(1, text::char_count(t.text));
    per_char.push_back(t.bbox.width() / static_cast<double>(chars));
    heights.push_back(t.bbox.height());
  }
  GridParams params;
  params.char_width = std::max(detail::median(per_char), page.width / kMinCellFraction);
  params.line_height = std::max(detail::median(heights), page.height / kMinCellFraction);
  return params;
}

struct Line {
  std::vector<OcrToken> tokens;  // sorted by x0
  double mean_center_y = 0;
  double top = 0;
  double bottom = 0;
};

/// Greedy clustering over tokens sorted by vertical centre: a token joins the
/// current line while its centre is within tolerance * line_height of the
/// line's mean centre. Ties keep input order throughout.
inline std::vector<Line> cluster_lines(const std::vector<OcrToken>& tokens,
                                       const GridParams& params) {
  std::vector<std::size_t> order(tokens.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return tokens[a].bbox.center_y() < tokens[b].bbox.center_y();
  });

  const double reach = params.line_cluster_tolerance * params.line_height;
  std::vector<std::vector<std::size_t>> groups;
  double sum = 0;
  for (std::size_t idx : order) {
    const double c = tokens[idx].bbox.center_y();
    if (!groups.empty()) {
      const double mean = sum / static_cast<double>(groups.back().size());
      if (c - mean <= reach) {
        groups.back().push_back(idx);
        sum += c;
        continue;
      }
    }
    groups.push_back({idx});
    sum = c;
  }

  std::vector<Line> lines;
  lines.reserve(groups.size());
  for (auto& g : groups) {
    std::stable_sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
      if (tokens[a].bbox.x0 != tokens[b].bbox.x0) return tokens[a].bbox.x0 < tokens[b].bbox.x0;
      return a < b;
    });
    Line line;
    line.top = tokens[g.front()].bbox.y0;
    line.bottom = tokens[g.front()].bbox.y1;
    double center_sum = 0;
    for (std::size_t idx : g) {
      const auto& t = tokens[idx];
      line.tokens.push_back(t);
      center_sum += t.bbox.center_y();
      line.top = std::min(line.top, t.bbox.y0);
      line.bottom = std::max(line.bottom, t.bbox.y1);
    }
    line.mean_center_y = center_sum / static_cast<double>(g.size());
    lines.push_back(std::move(line));
  }
  return lines;
}

/// Places one line's tokens on the character grid. A token that would touch
/// or overlap its left neighbour is shifted right to leave one space.
inline std::string render_line(const Line& line, const GridParams& params) {
  std::string out;
  std::size_t cursor = 0;
  bool first = true;
  for (const auto& t : line.tokens) {
    auto col = static_cast<std::size_t>(
        std::max<std::int64_t>(0, text::round_half_up(t.bbox.x0 / params.char_width)));
    if (!first) col = std::max(col, cursor + 1);
    out.append(col - cursor, ' ');
    out += t.text;
    cursor = col + text::char_count(t.text);
    first = false;
  }
  return text::rstrip(out);
}

inline std::string render_spatial(const DocumentPage& page, const GridParams& params) {
  if (!params.valid()) throw validation_error("render_spatial: grid parameters must be positive");
  if (page.tokens.empty()) return {};
  const auto lines = cluster_lines(page.tokens, params);
  const double blank_gap = params.blank_line_gap_ratio * params.line_height;
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) {
      out.push_back('\n');
      if (lines[i].top - lines[i - 1].bottom > blank_gap) out.push_back('\n');
    }
    out += render_line(lines[i], params);
  }
  return out;
}

struct VerbalizedDocument {
  std::string doc_id;
  std::string text;
  std::vector<std::string> page_texts;
  std::size_t token_count_estimate = 0;
};

/// Rough LLM token count: characters / 4, rounded half up.
inline std::size_t estimate_tokens(std::string_view s) {
  return static_cast<std::size_t>(
      text::round_half_up(static_cast<double>(text::char_count(s)) / 4.0));
}

inline std::string page_separator(std::string_view pattern, std::size_t page_number) {
  return text::replace_all(std::string(pattern), "{n}", std::to_string(page_number));
}

struct VerbalizeOptions {
  /// Fixed grid for every page; estimated per page when empty.
  std::optional<GridParams> params;
  std::string separator = kDefaultPageSeparator;
};

inline VerbalizedDocument verbalize(const Document& doc, const VerbalizeOptions& options = {}) {
  VerbalizedDocument out;
  out.doc_id = doc.doc_id;
  for (std::size_t p = 0; p < doc.pages.size(); ++p) {
    const auto& page = doc.pages[p];
    std::string rendered;
    if (!page.tokens.empty()) {
      rendered = render_spatial(page, options.params ? *options.params : estimate_grid(page));
    }
    if (p > 0) out.text += page_separator(options.separator, p + 1);
    out.text += rendered;
    out.page_texts.push_back(std::move(rendered));
  }
  out.token_count_estimate = estimate_tokens(out.text);
  return out;
}

inline json encode(const VerbalizedDocument& v) {
  return {{"doc_id", v.doc_id}, {"text", v.text}, {"token_count_estimate", v.token_count_estimate}};
}

inline VerbalizedDocument decode_verbalized(const json& j) {
  VerbalizedDocument v;
  v.doc_id = j.at("doc_id").get<std::string>();
  v.text = j.at("text").get<std::string>();
  v.token_count_estimate = j.at("token_count_estimate").get<std::size_t>();
  return v;
}

}  // namespace distill_forge::verbalizer
