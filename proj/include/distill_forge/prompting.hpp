#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "distill_forge/error.hpp"
#include "distill_forge/io.hpp"
#include "distill_forge/types.hpp"
#include "distill_forge/verbalizer.hpp"

namespace distill_forge::prompting {

namespace fs = std::filesystem;

inline constexpr std::string_view kDocumentBegin = "[DOCUMENT]";
inline constexpr std::string_view kDocumentEnd = "[/DOCUMENT]";

/// Instruction text may use {document}, {questions}, {keys} and {json_keys};
/// the output clause may use {json_keys}. Anything else in braces that looks
/// like a placeholder is rejected when building a prompt.
struct PromptTemplate {
  std::string template_id;
  TaskKind task_kind = TaskKind::kVQA;
  std::string instruction_text;
  std::string json_output_clause;

  bool operator==(const PromptTemplate&) const = default;
};

struct PromptRecord {
  std::string sample_id;
  std::string prompt_text;
  std::string template_id;
  std::size_t token_count_estimate = 0;

  bool operator==(const PromptRecord&) const = default;
};

inline void validate(const PromptTemplate& t) {
  auto require = [&](std::string_view placeholder) {
    if (t.instruction_text.find(placeholder) == std::string::npos) {
      throw validation_error("template " + t.template_id + " lacks " + std::string(placeholder));
    }
  };
  require("{document}");
  if (t.task_kind == TaskKind::kKIE) {
    require("{keys}");
  } else {
    require("{questions}");
  }
  if (t.json_output_clause.empty()) {
    throw validation_error("template " + t.template_id + " has no JSON output clause");
  }
}

inline json encode(const PromptTemplate& t) {
  return {{"template_id", t.template_id},
          {"task_kind", std::string(to_string(t.task_kind))},
          {"instruction_text", t.instruction_text},
          {"json_output_clause", t.json_output_clause}};
}

inline PromptTemplate decode_template(const json& j) {
  PromptTemplate t{j.at("template_id").get<std::string>(),
                   parse_task_kind(j.at("task_kind").get<std::string>()),
                   j.at("instruction_text").get<std::string>(),
                   j.at("json_output_clause").get<std::string>()};
  validate(t);
  return t;
}

inline json encode(const PromptRecord& p) {
  return {{"sample_id", p.sample_id},
          {"prompt_text", p.prompt_text},
          {"template_id", p.template_id},
          {"token_count_estimate", p.token_count_estimate}};
}

inline PromptRecord decode_prompt(const json& j) {
  return {j.at("sample_id").get<std::string>(), j.at("prompt_text").get<std::string>(),
          j.at("template_id").get<std::string>(),
          j.at("token_count_estimate").get<std::size_t>()};
}

/// Built-in template set, one per task kind.
inline std::vector<PromptTemplate> default_templates() {
  const std::string qa_clause =
      "Deliver the results as a single JSON object with the keys {json_keys}, one per "
      "question number, each mapped to the answer string.";
  return {
      {"vqa-default", TaskKind::kVQA,
       "Answer the questions about the following document.\n\n{document}\n\nQuestions:\n"
       "{questions}",
       qa_clause},
      {"tableqa-default", TaskKind::kTableQA,
       "Answer the questions using the table in the following document.\n\n{document}\n\n"
       "Questions:\n{questions}",
       qa_clause},
      {"tablenli-default", TaskKind::kTableNLI,
       "Decide for each statement whether it is entailed or refuted by the table in the "
       "following document. Answer \"1\" if the statement is entailed and \"0\" if it is "
       "refuted.\n\n{document}\n\nStatements:\n{questions}",
       qa_clause},
      {"kie-default", TaskKind::kKIE,
       "Extract the values of the keys {keys} from the following document.\n\n{document}",
       "Deliver the results as a single JSON object with the keys {json_keys}, each mapped to "
       "the extracted value string."},
      {"src-default", TaskKind::kSRC,
       "Answer the questions about the following web page.\n\n{document}\n\nQuestions:\n"
       "{questions}",
       qa_clause},
  };
}

/// Loads every *.json file of a directory, sorted by file name.
inline std::vector<PromptTemplate> load_templates(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw io_error("template directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<PromptTemplate> out;
  for (const auto& f : files) {
    try {
      out.push_back(decode_template(json::parse(io::read_file(f))));
    } catch (const json::exception& e) {
      throw validation_error(f.string() + ": " + e.what());
    } catch (const Error& e) {
      throw validation_error(f.string() + ": " + e.what());
    }
  }
  return out;
}

/// First template for each task kind.
inline std::map<TaskKind, PromptTemplate> index_by_task(const std::vector<PromptTemplate>& all) {
  std::map<TaskKind, PromptTemplate> out;
  for (const auto& t : all) out.try_emplace(t.task_kind, t);
  return out;
}

inline std::string numbered_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out += std::to_string(i + 1) + ". " + items[i];
  }
  return out;
}

inline std::string quoted_list(const std::vector<std::string>& items) {
  std::vector<std::string> quoted;
  quoted.reserve(items.size());
  for (const auto& s : items) quoted.push_back(json(s).dump());
  return text::join(quoted, ", ");
}

/// Keys of the answer object a prompt asks for: "1".."N" or the KIE keys.
inline std::vector<std::string> answer_keys(const TaskSample& sample) {
  if (sample.task_kind == TaskKind::kKIE) return sample.questions;
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < sample.questions.size(); ++i) keys.push_back(std::to_string(i + 1));
  return keys;
}

namespace detail {

inline bool is_placeholder_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

/// Single left-to-right pass, so substituted values are never rescanned.
inline std::string substitute(std::string_view pattern,
                              const std::map<std::string, std::string>& values,
                              const std::string& template_id) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '{') {
      std::size_t j = i + 1;
      while (j < pattern.size() && is_placeholder_char(pattern[j])) ++j;
      if (j > i + 1 && j < pattern.size() && pattern[j] == '}') {
        const std::string name(pattern.substr(i + 1, j - i - 1));
        auto it = values.find(name);
        if (it == values.end()) {
          throw validation_error("template " + template_id + ": unfilled placeholder {" + name +
                                 "}");
        }
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out.push_back(pattern[i]);
    ++i;
  }
  return out;
}

}  // namespace detail

inline std::string wrap_document(std::string_view document_text) {
  std::string out(kDocumentBegin);
  out.push_back('\n');
  out += document_text;
  out.push_back('\n');
  out += kDocumentEnd;
  return out;
}

/// Recovers the verbalized document from a prompt built by build_prompt.
inline std::optional<std::string> extract_document(std::string_view prompt) {
  const std::string begin = std::string(kDocumentBegin) + "\n";
  const std::string end = "\n" + std::string(kDocumentEnd);
  const auto b = prompt.find(begin);
  const auto e = prompt.rfind(end);
  if (b == std::string_view::npos || e == std::string_view::npos || e < b + begin.size()) {
    return std::nullopt;
  }
  return std::string(prompt.substr(b + begin.size(), e - b - begin.size()));
}

inline PromptRecord build_prompt(const TaskSample& sample,
                                 const verbalizer::VerbalizedDocument& verbalized,
                                 const PromptTemplate& tmpl) {
  if (tmpl.task_kind != sample.task_kind) {
    throw validation_error("template " + tmpl.template_id + " is for " +
                           std::string(to_string(tmpl.task_kind)) + " but sample " +
                           sample.sample_id + " is " + std::string(to_string(sample.task_kind)));
  }
  if (verbalized.doc_id != sample.doc_id) {
    throw validation_error("sample " + sample.sample_id + " references " + sample.doc_id +
                           " but verbalization is of " + verbalized.doc_id);
  }
  std::map<std::string, std::string> values{
      {"document", wrap_document(verbalized.text)},
      {"json_keys", quoted_list(answer_keys(sample))},
  };
  if (sample.task_kind == TaskKind::kKIE) {
    values["keys"] = quoted_list(sample.questions);
  } else {
    values["questions"] = numbered_list(sample.questions);
  }
  PromptRecord record;
  record.sample_id = sample.sample_id;
  record.template_id = tmpl.template_id;
  record.prompt_text = detail::substitute(tmpl.instruction_text, values, tmpl.template_id);
  record.prompt_text += "\n\n";
  record.prompt_text += detail::substitute(tmpl.json_output_clause, values, tmpl.template_id);
  record.token_count_estimate = verbalizer::estimate_tokens(record.prompt_text);
  return record;
}

}  // namespace distill_forge::prompting
