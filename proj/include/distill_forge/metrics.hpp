#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "distill_forge/error.hpp"
#include "distill_forge/levenshtein.hpp"
#include "distill_forge/text.hpp"
#include "distill_forge/types.hpp"

namespace distill_forge::metrics {

inline constexpr double kDefaultAnlsThreshold = 0.5;

inline std::string normalize_text_answer(std::string_view s) {
  return text::collapse_whitespace(text::to_lower(s));
}

/// Max over golds of 1 - NL(pred, gold), where scores with NL >= threshold
/// count as 0. Comparison is case-insensitive with whitespace collapsed.
inline double anls(std::string_view prediction, const std::vector<std::string>& golds,
                   double threshold = kDefaultAnlsThreshold) {
  if (golds.empty()) throw validation_error("anls: no gold answers");
  const std::string pred = normalize_text_answer(prediction);
  double best = 0.0;
  for (const auto& g : golds) {
    const double nl = normalized_levenshtein(pred, normalize_text_answer(g));
    if (nl < threshold) best = std::max(best, 1.0 - nl);
  }
  return best;
}

/// Canonical spelling of a decimal number ("-1,234.50" -> "-1234.5"), or
/// nullopt when `s` is not a plain decimal with optional thousands commas.
inline std::optional<std::string> parse_decimal(std::string_view s) {
  static const std::regex kPattern(
      R"(^([+-]?)(\d{1,3}(?:,\d{3})+|\d+|)(?:\.(\d+))?$)");
  const std::string t = text::trim(s);
  std::smatch m;
  if (!std::regex_match(t, m, kPattern)) return std::nullopt;
  std::string int_part = text::replace_all(m[2].str(), ",", "");
  std::string frac_part = m[3].str();
  if (int_part.empty() && frac_part.empty()) return std::nullopt;
  const auto nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (m[1].str() == "-" && out != "0") out = "-" + out;
  return out;
}

/// 1 if the prediction equals any gold after case folding and whitespace
/// collapsing, with numeric strings compared as decimals.
inline int exact_accuracy(std::string_view prediction, const std::vector<std::string>& golds) {
  const std::string pred = normalize_text_answer(prediction);
  const auto pred_num = parse_decimal(pred);
  for (const auto& g : golds) {
    const std::string gold = normalize_text_answer(g);
    if (pred == gold) return 1;
    if (pred_num) {
      const auto gold_num = parse_decimal(gold);
      if (gold_num && *gold_num == *pred_num) return 1;
    }
  }
  return 0;
}

// --- SROIE type-aware accuracy --------------------------------------------

struct CalendarDate {
  int year = 0;
  int month = 0;
  int day = 0;

  bool operator==(const CalendarDate&) const = default;
};

namespace detail {

inline int month_from_name(std::string_view name) {
  static constexpr std::array<std::string_view, 12> kMonths{
      "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"};
  if (name.size() < 3) return 0;
  for (std::size_t i = 0; i < kMonths.size(); ++i) {
    if (name.substr(0, 3) == kMonths[i]) return static_cast<int>(i) + 1;
  }
  return 0;
}

inline std::optional<CalendarDate> make_date(int y, int m, int d, std::size_t year_digits) {
  if (year_digits == 2) y += 2000;
  if (year_digits != 2 && year_digits != 4) return std::nullopt;
  if (m < 1 || m > 12 || d < 1) return std::nullopt;
  static constexpr std::array<int, 12> kDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  const int max_day = kDays[static_cast<std::size_t>(m - 1)] + (m == 2 && leap ? 1 : 0);
  if (d > max_day) return std::nullopt;
  return CalendarDate{y, m, d};
}

}  // namespace detail

/// Finds the first calendar date in `s`. Numeric dates are read day-first
/// unless they lead with a four-digit year; two-digit years mean 20yy.
inline std::optional<CalendarDate> parse_date(std::string_view s) {
  static const std::regex kYmd(R"((?:^|\D)(\d{4})[-/.](\d{1,2})[-/.](\d{1,2})(?:\D|$))");
  static const std::regex kDmy(R"((?:^|\D)(\d{1,2})[-/.](\d{1,2})[-/.](\d{4}|\d{2})(?:\D|$))");
  static const std::regex kDMonY(
      R"((?:^|[^0-9a-z])(\d{1,2})(?:st|nd|rd|th)?[-\s/.,]*([a-z]{3,9})[-\s/.,]*(\d{4}|\d{2})(?:\D|$))");
  static const std::regex kMonDY(
      R"((?:^|[^a-z])([a-z]{3,9})[-\s/.]*(\d{1,2})(?:st|nd|rd|th)?[-\s/.,]+(\d{4}|\d{2})(?:\D|$))");
  const std::string t = text::to_lower(s);
  std::smatch m;
  auto num = [&](int i) { return std::stoi(m[i].str()); };
  if (std::regex_search(t, m, kYmd)) {
    if (auto d = detail::make_date(num(1), num(2), num(3), 4)) return d;
  }
  if (std::regex_search(t, m, kDmy)) {
    if (auto d = detail::make_date(num(3), num(2), num(1), m[3].length())) return d;
  }
  if (std::regex_search(t, m, kDMonY)) {
    const int month = detail::month_from_name(m[2].str());
    if (month > 0) {
      if (auto d = detail::make_date(num(3), month, num(1), m[3].length())) return d;
    }
  }
  if (std::regex_search(t, m, kMonDY)) {
    const int month = detail::month_from_name(m[1].str());
    if (month > 0) {
      if (auto d = detail::make_date(num(3), month, num(2), m[3].length())) return d;
    }
  }
  return std::nullopt;
}

/// Strips currency symbols and codes, then parses as a decimal.
inline std::optional<std::string> parse_amount(std::string_view s) {
  std::string t = text::to_lower(text::remove_whitespace(s));
  for (std::string_view sym : {"myr", "usd", "sgd", "rm", "s$", "$", "\xE2\x82\xAC" /* € */,
                               "\xC2\xA3" /* £ */, "\xC2\xA5" /* ¥ */}) {
    t = text::replace_all(t, sym, "");
  }
  return parse_decimal(t);
}

inline bool sroie_field_matches(std::string_view key, std::string_view pred,
                                std::string_view gold) {
  if (key == "date") {
    const auto p = parse_date(pred);
    const auto g = parse_date(gold);
    if (p && g) return *p == *g;
  } else if (key == "total") {
    const auto p = parse_amount(pred);
    const auto g = parse_amount(gold);
    if (p && g) return *p == *g;
  }
  return text::remove_whitespace(text::to_lower(pred)) ==
         text::remove_whitespace(text::to_lower(gold));
}

/// Fraction of gold keys the predicted JSON object gets right. Unparseable
/// predictions match nothing; an empty gold map scores 1.
inline double sroie_type_aware(std::string_view pred_json,
                               const std::map<std::string, std::string>& gold) {
  if (gold.empty()) return 1.0;
  json pred;
  try {
    pred = json::parse(pred_json);
  } catch (const json::parse_error&) {
    return 0.0;
  }
  if (!pred.is_object()) return 0.0;
  std::size_t matched = 0;
  for (const auto& [key, value] : gold) {
    auto it = pred.find(key);
    if (it == pred.end() || it->is_null()) continue;
    const std::string p = it->is_string() ? it->get<std::string>() : it->dump();
    if (sroie_field_matches(key, p, value)) ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(gold.size());
}

// --- dataset evaluation ---------------------------------------------------

enum class MetricKind { kAnls, kAccuracy, kTypeAware };

inline std::string_view to_string(MetricKind k) {
  switch (k) {
    case MetricKind::kAnls: return "ANLS";
    case MetricKind::kAccuracy: return "Accuracy";
    case MetricKind::kTypeAware: return "TypeAwareAccuracy";
  }
  return "?";
}

inline MetricKind parse_metric_kind(std::string_view s) {
  const std::string t = text::to_lower(s);
  if (t == "anls") return MetricKind::kAnls;
  if (t == "accuracy") return MetricKind::kAccuracy;
  if (t == "typeawareaccuracy" || t == "type-aware") return MetricKind::kTypeAware;
  throw validation_error("unknown metric '" + std::string(s) + "'");
}

inline std::optional<MetricKind> default_metric(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::kDocVQA:
    case DatasetTag::kInfographicsVQA:
      return MetricKind::kAnls;
    case DatasetTag::kTabFact:
    case DatasetTag::kWikiTableQuestions:
      return MetricKind::kAccuracy;
    case DatasetTag::kSROIE:
      return MetricKind::kTypeAware;
    case DatasetTag::kWebSRC:
    case DatasetTag::kSynthetic:
      return std::nullopt;
  }
  return std::nullopt;
}

struct DatasetScore {
  std::string metric_name;
  double value = 0;
  std::size_t n_samples = 0;
};

struct EvalReport {
  std::map<std::string, DatasetScore> per_dataset;
  double average = 0;
};

struct EvalOptions {
  double anls_threshold = kDefaultAnlsThreshold;
  std::map<DatasetTag, MetricKind> metric_override;
};

/// Answer for 0-based question `index` of a (possibly grouped) prediction.
/// JSON objects are looked up by question number; anything else counts as the
/// answer to the first question only.
inline std::string extract_answer(std::string_view output, std::size_t index) {
  json parsed;
  bool ok = true;
  try {
    parsed = json::parse(output);
  } catch (const json::parse_error&) {
    ok = false;
  }
  if (ok && parsed.is_object()) {
    auto it = parsed.find(std::to_string(index + 1));
    if (it == parsed.end() || it->is_null()) return {};
    return it->is_string() ? it->get<std::string>() : it->dump();
  }
  if (index != 0) return {};
  if (ok && parsed.is_string()) return parsed.get<std::string>();
  return text::trim(output);
}

/// Scores the test split. Questions of grouped samples are scored one by one;
/// KIE samples contribute one type-aware score each. Missing predictions score 0.
inline EvalReport evaluate(const std::unordered_map<std::string, std::string>& outputs,
                           const std::vector<TaskSample>& samples,
                           const EvalOptions& options = {}) {
  struct Acc {
    MetricKind kind;
    double sum = 0;
    std::size_t n = 0;
  };
  std::map<DatasetTag, Acc> acc;
  for (const auto& s : samples) {
    if (s.split != Split::kTest) continue;
    if (!s.dataset_tag) throw validation_error("sample " + s.sample_id + " has no dataset_tag");
    const DatasetTag tag = *s.dataset_tag;
    std::optional<MetricKind> kind;
    if (auto it = options.metric_override.find(tag); it != options.metric_override.end()) {
      kind = it->second;
    } else {
      kind = default_metric(tag);
    }
    if (!kind) {
      throw validation_error("no metric for dataset " + std::string(to_string(tag)) +
                             " (sample " + s.sample_id + "); use --metric-override");
    }
    auto& a = acc.try_emplace(tag, Acc{*kind}).first->second;
    const auto out_it = outputs.find(s.sample_id);
    const bool have = out_it != outputs.end();
    if (*kind == MetricKind::kTypeAware) {
      std::map<std::string, std::string> gold = s.kie_gold;
      if (s.task_kind != TaskKind::kKIE) {
        for (std::size_t i = 0; i < s.questions.size(); ++i) {
          gold[std::to_string(i + 1)] = s.answers[i].empty() ? std::string() : s.answers[i][0];
        }
      }
      a.sum += have ? sroie_type_aware(out_it->second, gold) : 0.0;
      a.n += 1;
      continue;
    }
    if (s.task_kind == TaskKind::kKIE) {
      throw validation_error("KIE sample " + s.sample_id + " needs the type-aware metric");
    }
    for (std::size_t i = 0; i < s.questions.size(); ++i) {
      const auto& golds = s.answers[i];
      if (golds.empty()) {
        throw validation_error("sample " + s.sample_id + " question " + std::to_string(i + 1) +
                               " has no gold answer");
      }
      if (have) {
        const std::string answer = extract_answer(out_it->second, i);
        a.sum += *kind == MetricKind::kAnls ? anls(answer, golds, options.anls_threshold)
                                            : exact_accuracy(answer, golds);
      }
      a.n += 1;
    }
  }
  EvalReport report;
  double total = 0;
  for (const auto& [tag, a] : acc) {
    const double value = a.n == 0 ? 0.0 : a.sum / static_cast<double>(a.n);
    report.per_dataset[std::string(to_string(tag))] = {std::string(to_string(a.kind)), value, a.n};
    total += value;
  }
  if (!report.per_dataset.empty()) {
    report.average = total / static_cast<double>(report.per_dataset.size());
  }
  return report;
}

inline json encode(const EvalReport& r) {
  json per = json::object();
  for (const auto& [tag, s] : r.per_dataset) {
    per[tag] = {{"metric_name", s.metric_name}, {"value", s.value}, {"n_samples", s.n_samples}};
  }
  return {{"per_dataset", std::move(per)}, {"average", r.average}};
}

inline EvalReport decode_report(const json& j) {
  EvalReport r;
  for (const auto& [tag, s] : j.at("per_dataset").items()) {
    r.per_dataset[tag] = {s.at("metric_name").get<std::string>(), s.at("value").get<double>(),
                          s.at("n_samples").get<std::size_t>()};
  }
  r.average = j.at("average").get<double>();
  return r;
}

}  // namespace distill_forge::metrics
