#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "distill_forge/text.hpp"

namespace distill_forge {

/// Unit-cost edit distance (insert, delete, substitute) over any sequence.
template <typename Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
  const Seq& shorter = a.size() <= b.size() ? a : b;
  const Seq& longer = a.size() <= b.size() ? b : a;
  std::vector<std::size_t> row(shorter.size() + 1);
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= longer.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= shorter.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t cost = longer[i - 1] == shorter[j - 1] ? 0 : 1;
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + cost});
      diag = up;
    }
  }
  return row.back();
}

/// Edit distance in Unicode code points.
inline std::size_t levenshtein_utf8(std::string_view a, std::string_view b) {
  return levenshtein(text::decode_utf8(a), text::decode_utf8(b));
}

enum class SimilarityVariant {
  /// 1 - lev / max(|a|, |b|)
  kMaxLength,
  /// 1 - 2 lev / (|a| + |b| + lev), the generalized normalized distance
  kGeneralized,
};

/// Normalized edit distance in [0, 1]; 0 for two empty strings.
inline double normalized_levenshtein(std::string_view a, std::string_view b,
                                     SimilarityVariant variant = SimilarityVariant::kMaxLength) {
  const auto ua = text::decode_utf8(a);
  const auto ub = text::decode_utf8(b);
  if (ua.empty() && ub.empty()) return 0.0;
  const auto d = static_cast<double>(levenshtein(ua, ub));
  if (variant == SimilarityVariant::kGeneralized) {
    return 2.0 * d / (static_cast<double>(ua.size() + ub.size()) + d);
  }
  return d / static_cast<double>(std::max(ua.size(), ub.size()));
}

}  // namespace distill_forge
