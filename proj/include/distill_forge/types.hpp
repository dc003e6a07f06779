#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "distill_forge/error.hpp"
#include "distill_forge/text.hpp"

namespace distill_forge {

using json = nlohmann::json;

enum class DatasetTag {
  kDocVQA,
  kInfographicsVQA,
  kWikiTableQuestions,
  kTabFact,
  kSROIE,
  kWebSRC,
  kSynthetic,
};

enum class TaskKind { kVQA, kTableQA, kTableNLI, kKIE, kSRC };

enum class Split { kTrain, kTest };

namespace detail {

template <typename E, std::size_t N>
std::string_view enum_name(E value,
                           const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "?";
}

template <typename E, std::size_t N>
E enum_parse(std::string_view name,
             const std::array<std::pair<E, std::string_view>, N>& table,
             std::string_view what) {
  for (const auto& [e, n] : table) {
    if (n == name) return e;
  }
  throw validation_error("unknown " + std::string(what) + " '" +
                         std::string(name) + "'");
}

inline constexpr std::array<std::pair<DatasetTag, std::string_view>, 7> kDatasetNames{{
    {DatasetTag::kDocVQA, "DocVQA"},
    {DatasetTag::kInfographicsVQA, "InfographicsVQA"},
    {DatasetTag::kWikiTableQuestions, "WikiTableQuestions"},
    {DatasetTag::kTabFact, "TabFact"},
    {DatasetTag::kSROIE, "SROIE"},
    {DatasetTag::kWebSRC, "WebSRC"},
    {DatasetTag::kSynthetic, "synthetic"},
}};

inline constexpr std::array<std::pair<TaskKind, std::string_view>, 5> kTaskNames{{
    {TaskKind::kVQA, "VQA"},
    {TaskKind::kTableQA, "TableQA"},
    {TaskKind::kTableNLI, "TableNLI"},
    {TaskKind::kKIE, "KIE"},
    {TaskKind::kSRC, "SRC"},
}};

inline constexpr std::array<std::pair<Split, std::string_view>, 2> kSplitNames{{
    {Split::kTrain, "train"},
    {Split::kTest, "test"},
}};

}  // namespace detail

inline std::string_view to_string(DatasetTag t) { return detail::enum_name(t, detail::kDatasetNames); }
inline std::string_view to_string(TaskKind k) { return detail::enum_name(k, detail::kTaskNames); }
inline std::string_view to_string(Split s) { return detail::enum_name(s, detail::kSplitNames); }

inline DatasetTag parse_dataset_tag(std::string_view s) {
  return detail::enum_parse(s, detail::kDatasetNames, "dataset_tag");
}
inline TaskKind parse_task_kind(std::string_view s) {
  return detail::enum_parse(s, detail::kTaskNames, "task_kind");
}
inline Split parse_split(std::string_view s) {
  return detail::enum_parse(s, detail::kSplitNames, "split");
}

/// Task family each base dataset belongs to.
inline TaskKind task_kind_for(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::kDocVQA:
    case DatasetTag::kInfographicsVQA:
    case DatasetTag::kSynthetic:
      return TaskKind::kVQA;
    case DatasetTag::kWikiTableQuestions:
      return TaskKind::kTableQA;
    case DatasetTag::kTabFact:
      return TaskKind::kTableNLI;
    case DatasetTag::kSROIE:
      return TaskKind::kKIE;
    case DatasetTag::kWebSRC:
      return TaskKind::kSRC;
  }
  return TaskKind::kVQA;
}

struct BoundingBox {
  double x0 = 0;
  double y0 = 0;
  double x1 = 0;
  double y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double center_y() const { return (y0 + y1) / 2; }

  bool valid() const {
    return std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) &&
           std::isfinite(y1) && x0 <= x1 && y0 <= y1;
  }

  bool operator==(const BoundingBox&) const = default;
};

struct OcrToken {
  std::string text;
  BoundingBox bbox;
  int page_index = 0;

  bool operator==(const OcrToken&) const = default;
};

struct DocumentPage {
  double width = 0;
  double height = 0;
  std::vector<OcrToken> tokens;

  bool operator==(const DocumentPage&) const = default;
};

struct Document {
  std::string doc_id;
  DatasetTag dataset_tag = DatasetTag::kSynthetic;
  std::vector<DocumentPage> pages;

  bool operator==(const Document&) const = default;
};

/// A task instance. `answers[i]` holds the acceptable answers for
/// `questions[i]`; KIE samples use `kie_gold` and list the keys as questions.
struct TaskSample {
  std::string sample_id;
  std::string doc_id;
  TaskKind task_kind = TaskKind::kVQA;
  std::optional<DatasetTag> dataset_tag;
  std::vector<std::string> questions;
  std::vector<std::vector<std::string>> answers;
  std::map<std::string, std::string> kie_gold;
  Split split = Split::kTrain;

  bool operator==(const TaskSample&) const = default;
};

// --- validation -----------------------------------------------------------

inline void validate(const OcrToken& t) {
  if (t.text.find('\n') != std::string::npos || t.text.find('\r') != std::string::npos) {
    throw validation_error("token text contains a newline: '" + t.text + "'");
  }
  if (text::trim(t.text).empty()) throw validation_error("empty token text");
  if (!t.bbox.valid()) throw validation_error("invalid bounding box for token '" + t.text + "'");
  if (t.page_index < 0) throw validation_error("negative page index");
}

/// Clamps every token box into the page rectangle.
inline void clamp_to_page(DocumentPage& page) {
  for (auto& t : page.tokens) {
    t.bbox.x0 = std::clamp(t.bbox.x0, 0.0, page.width);
    t.bbox.x1 = std::clamp(t.bbox.x1, 0.0, page.width);
    t.bbox.y0 = std::clamp(t.bbox.y0, 0.0, page.height);
    t.bbox.y1 = std::clamp(t.bbox.y1, 0.0, page.height);
  }
}

inline void validate(const TaskSample& s) {
  if (s.sample_id.empty()) throw validation_error("empty sample_id");
  if (s.questions.empty()) throw validation_error("sample " + s.sample_id + " has no questions");
  if (s.task_kind != TaskKind::kKIE && s.answers.size() != s.questions.size()) {
    throw validation_error("sample " + s.sample_id + ": answers misaligned with questions");
  }
}

// --- JSON codecs ----------------------------------------------------------

inline json encode(const Document& d) {
  json pages = json::array();
  for (const auto& p : d.pages) {
    json tokens = json::array();
    for (const auto& t : p.tokens) {
      tokens.push_back({{"text", t.text},
                        {"x0", t.bbox.x0},
                        {"y0", t.bbox.y0},
                        {"x1", t.bbox.x1},
                        {"y1", t.bbox.y1}});
    }
    pages.push_back({{"width", p.width}, {"height", p.height}, {"tokens", std::move(tokens)}});
  }
  return {{"doc_id", d.doc_id},
          {"dataset_tag", std::string(to_string(d.dataset_tag))},
          {"pages", std::move(pages)}};
}

inline Document decode_document(const json& j) {
  Document d;
  d.doc_id = j.at("doc_id").get<std::string>();
  if (d.doc_id.empty()) throw validation_error("empty doc_id");
  d.dataset_tag = parse_dataset_tag(j.at("dataset_tag").get<std::string>());
  const auto& pages = j.at("pages");
  if (!pages.is_array() || pages.empty()) {
    throw validation_error("document " + d.doc_id + " has no pages");
  }
  int page_index = 0;
  for (const auto& pj : pages) {
    DocumentPage page;
    page.width = pj.at("width").get<double>();
    page.height = pj.at("height").get<double>();
    if (!(page.width > 0) || !(page.height > 0) || !std::isfinite(page.width) ||
        !std::isfinite(page.height)) {
      throw validation_error("document " + d.doc_id + ": page size must be positive");
    }
    for (const auto& tj : pj.at("tokens")) {
      OcrToken t;
      t.text = tj.at("text").get<std::string>();
      t.bbox = {tj.at("x0").get<double>(), tj.at("y0").get<double>(),
                tj.at("x1").get<double>(), tj.at("y1").get<double>()};
      t.page_index = page_index;
      validate(t);
      page.tokens.push_back(std::move(t));
    }
    clamp_to_page(page);
    d.pages.push_back(std::move(page));
    ++page_index;
  }
  return d;
}

inline json encode(const TaskSample& s) {
  json gold = json::object();
  if (s.task_kind == TaskKind::kKIE) {
    for (const auto& [k, v] : s.kie_gold) gold[k] = v;
  } else {
    for (std::size_t i = 0; i < s.questions.size(); ++i) {
      gold[s.questions[i]] = i < s.answers.size() ? s.answers[i] : std::vector<std::string>{};
    }
  }
  json j = {{"sample_id", s.sample_id},
            {"doc_id", s.doc_id},
            {"task_kind", std::string(to_string(s.task_kind))},
            {"questions", s.questions},
            {"gold", std::move(gold)},
            {"split", std::string(to_string(s.split))}};
  if (s.dataset_tag) j["dataset_tag"] = std::string(to_string(*s.dataset_tag));
  return j;
}

inline TaskSample decode_sample(const json& j) {
  TaskSample s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.doc_id = j.at("doc_id").get<std::string>();
  s.task_kind = parse_task_kind(j.at("task_kind").get<std::string>());
  s.questions = j.at("questions").get<std::vector<std::string>>();
  s.split = parse_split(j.at("split").get<std::string>());
  if (auto it = j.find("dataset_tag"); it != j.end()) {
    s.dataset_tag = parse_dataset_tag(it->get<std::string>());
  }
  const json gold = j.value("gold", json::object());
  if (!gold.is_object()) throw validation_error("gold must be an object");
  auto as_string = [](const json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  if (s.task_kind == TaskKind::kKIE) {
    for (const auto& [k, v] : gold.items()) {
      if (v.is_array()) {
        s.kie_gold[k] = v.empty() ? std::string() : as_string(v.front());
      } else {
        s.kie_gold[k] = as_string(v);
      }
    }
  } else {
    for (const auto& q : s.questions) {
      std::vector<std::string> answers;
      if (auto it = gold.find(q); it != gold.end()) {
        if (it->is_array()) {
          for (const auto& a : *it) answers.push_back(as_string(a));
        } else {
          answers.push_back(as_string(*it));
        }
      }
      s.answers.push_back(std::move(answers));
    }
  }
  validate(s);
  return s;
}

}  // namespace distill_forge
