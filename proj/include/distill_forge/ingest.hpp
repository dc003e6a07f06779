#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "distill_forge/error.hpp"
#include "distill_forge/io.hpp"
#include "distill_forge/random.hpp"
#include "distill_forge/text.hpp"
#include "distill_forge/types.hpp"

namespace distill_forge::ingest {

namespace fs = std::filesystem;

enum class CorpusFormat { kNativeJsonl, kDueStyle };

inline CorpusFormat parse_corpus_format(std::string_view s) {
  if (s == "native-jsonl") return CorpusFormat::kNativeJsonl;
  if (s == "due-style") return CorpusFormat::kDueStyle;
  throw validation_error("unknown corpus format '" + std::string(s) + "'");
}

struct SplitCounts {
  std::size_t train = 0;
  std::size_t test = 0;

  bool operator==(const SplitCounts&) const = default;
};

using CorpusStats = std::map<DatasetTag, SplitCounts>;

struct Corpus {
  std::vector<Document> documents;
  std::vector<TaskSample> samples;
  CorpusStats stats;
};

/// Per-dataset sample counts of the reference distillation corpus.
inline const CorpusStats& reference_counts() {
  static const CorpusStats kCounts{
      {DatasetTag::kDocVQA, {10194, 1287}},
      {DatasetTag::kInfographicsVQA, {4406, 579}},
      {DatasetTag::kWikiTableQuestions, {1350, 421}},
      {DatasetTag::kTabFact, {13182, 1695}},
      {DatasetTag::kSROIE, {626, 347}},
      {DatasetTag::kWebSRC, {27444, 0}},
  };
  return kCounts;
}

/// Datasets whose counts differ from `expected`, one message each.
inline std::vector<std::string> compare_counts(const CorpusStats& actual,
                                               const CorpusStats& expected) {
  std::vector<std::string> out;
  for (const auto& [tag, want] : expected) {
    auto it = actual.find(tag);
    const SplitCounts got = it == actual.end() ? SplitCounts{} : it->second;
    if (got != want) {
      out.push_back(std::string(to_string(tag)) + ": expected " +
                    std::to_string(want.train) + "/" + std::to_string(want.test) +
                    " train/test, got " + std::to_string(got.train) + "/" +
                    std::to_string(got.test));
    }
  }
  return out;
}

inline CorpusStats count_samples(const std::vector<TaskSample>& samples) {
  CorpusStats stats;
  for (const auto& s : samples) {
    auto& c = stats[s.dataset_tag.value_or(DatasetTag::kSynthetic)];
    (s.split == Split::kTrain ? c.train : c.test) += 1;
  }
  return stats;
}

/// Checks id uniqueness and that every sample references a loaded document;
/// fills in each sample's dataset tag from its document.
inline void link_corpus(Corpus& corpus) {
  std::unordered_map<std::string, DatasetTag> tags;
  for (const auto& d : corpus.documents) {
    if (!tags.emplace(d.doc_id, d.dataset_tag).second) {
      throw validation_error("duplicate doc_id '" + d.doc_id + "'");
    }
  }
  std::unordered_set<std::string> sample_ids;
  std::set<std::string> dangling;
  for (auto& s : corpus.samples) {
    if (!sample_ids.insert(s.sample_id).second) {
      throw validation_error("duplicate sample_id '" + s.sample_id + "'");
    }
    auto it = tags.find(s.doc_id);
    if (it == tags.end()) {
      dangling.insert(s.doc_id);
      continue;
    }
    if (s.dataset_tag && *s.dataset_tag != it->second) {
      throw validation_error("sample " + s.sample_id + " dataset_tag disagrees with document " +
                             s.doc_id);
    }
    s.dataset_tag = it->second;
  }
  if (!dangling.empty()) {
    std::vector<std::string> ids(dangling.begin(), dangling.end());
    throw validation_error("samples reference missing documents: " + text::join(ids, ", "));
  }
  corpus.stats = count_samples(corpus.samples);
}

namespace detail {

inline Corpus load_native(const fs::path& dir) {
  const fs::path docs_path = dir / "documents.jsonl";
  const fs::path samples_path = dir / "samples.jsonl";
  for (const auto& p : {docs_path, samples_path}) {
    if (!fs::exists(p)) throw io_error("missing corpus file " + p.string());
  }
  auto docs = std::async(std::launch::async, [&] {
    return io::read_jsonl<Document>(docs_path, decode_document);
  });
  auto samples = std::async(std::launch::async, [&] {
    return io::read_jsonl<TaskSample>(samples_path, decode_sample);
  });
  Corpus corpus;
  corpus.documents = docs.get();
  corpus.samples = samples.get();
  return corpus;
}

inline std::string json_text(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

// DUE benchmark layout: document.jsonl holds annotations, documents_content.jsonl
// holds per-OCR-engine token layers with page boxes.
inline Corpus load_due(const fs::path& dir, DatasetTag tag, const std::string& tool_name) {
  const fs::path ann_path = dir / "document.jsonl";
  const fs::path content_path = dir / "documents_content.jsonl";
  for (const auto& p : {ann_path, content_path}) {
    if (!fs::exists(p)) throw io_error("missing DUE file " + p.string());
  }
  Corpus corpus;
  io::for_each_jsonl(content_path, [&](const json& j, std::size_t line_no) {
    Document doc;
    doc.doc_id = j.at("name").get<std::string>();
    doc.dataset_tag = tag;
    const json* layer = nullptr;
    for (const auto& c : j.at("contents")) {
      if (tool_name.empty() || c.value("tool_name", std::string()) == tool_name) {
        layer = &c;
        break;
      }
    }
    if (layer == nullptr) {
      throw validation_error(content_path.string() + ":" + std::to_string(line_no) +
                             ": no OCR layer from tool '" + tool_name + "'");
    }
    const auto& cf = layer->at("common_format");
    const auto& tokens = cf.at("tokens");
    const auto& positions = cf.at("positions");
    const auto& page_info = cf.at("structures").at("page");
    const auto& page_boxes = page_info.at("positions");
    const auto& page_ranges = page_info.at("structure");
    if (tokens.size() != positions.size() || page_boxes.size() != page_ranges.size()) {
      throw validation_error(content_path.string() + ":" + std::to_string(line_no) +
                             ": token/position count mismatch");
    }
    for (std::size_t p = 0; p < page_boxes.size(); ++p) {
      const auto box = page_boxes[p].get<std::vector<double>>();
      const auto range = page_ranges[p].get<std::vector<std::size_t>>();
      if (box.size() != 4 || range.size() != 2) {
        throw validation_error(content_path.string() + ":" + std::to_string(line_no) +
                               ": malformed page structure");
      }
      DocumentPage page;
      page.width = box[2] - box[0];
      page.height = box[3] - box[1];
      if (!(page.width > 0) || !(page.height > 0)) {
        throw validation_error(content_path.string() + ":" + std::to_string(line_no) +
                               ": page size must be positive");
      }
      for (std::size_t t = range[0]; t < range[1] && t < tokens.size(); ++t) {
        std::string word = text::trim(text::replace_all(
            text::replace_all(tokens[t].get<std::string>(), "\r", " "), "\n", " "));
        if (word.empty()) continue;
        const auto pos = positions[t].get<std::vector<double>>();
        if (pos.size() != 4) continue;
        OcrToken tok{word, {pos[0] - box[0], pos[1] - box[1], pos[2] - box[0], pos[3] - box[1]},
                     static_cast<int>(p)};
        if (!tok.bbox.valid()) continue;
        page.tokens.push_back(std::move(tok));
      }
      clamp_to_page(page);
      doc.pages.push_back(std::move(page));
    }
    if (doc.pages.empty()) {
      throw validation_error(content_path.string() + ":" + std::to_string(line_no) +
                             ": document has no pages");
    }
    corpus.documents.push_back(std::move(doc));
  });

  const TaskKind kind = task_kind_for(tag);
  io::for_each_jsonl(ann_path, [&](const json& j, std::size_t) {
    const std::string name = j.at("name").get<std::string>();
    const std::string split_name = j.value("split", std::string("train"));
    const Split split = split_name == "test" ? Split::kTest : Split::kTrain;
    const auto& annotations = j.at("annotations");
    if (kind == TaskKind::kKIE) {
      TaskSample s{name, name, kind, tag, {}, {}, {}, split};
      for (const auto& a : annotations) {
        const std::string key = a.at("key").get<std::string>();
        const auto& values = a.at("values");
        s.questions.push_back(key);
        s.kie_gold[key] = values.empty() ? std::string() : json_text(values[0].at("value"));
      }
      if (!s.questions.empty()) corpus.samples.push_back(std::move(s));
      return;
    }
    std::size_t index = 0;
    for (const auto& a : annotations) {
      std::vector<std::string> answers;
      for (const auto& v : a.at("values")) {
        answers.push_back(json_text(v.at("value")));
        for (const auto& variant : v.value("value_variants", json::array())) {
          const std::string alt = json_text(variant);
          if (std::find(answers.begin(), answers.end(), alt) == answers.end()) {
            answers.push_back(alt);
          }
        }
      }
      TaskSample s{name + "#" + std::to_string(index++), name, kind, tag,
                   {a.at("key").get<std::string>()}, {std::move(answers)}, {}, split};
      validate(s);
      corpus.samples.push_back(std::move(s));
    }
  });
  return corpus;
}

}  // namespace detail

struct LoadOptions {
  CorpusFormat format = CorpusFormat::kNativeJsonl;
  /// Only used by the DUE adapter: the tag of the dataset being imported and
  /// which OCR engine layer to read (empty: first layer).
  DatasetTag due_dataset = DatasetTag::kDocVQA;
  std::string due_tool_name;
};

/// Loads a corpus directory. Native format expects documents.jsonl and
/// samples.jsonl; DUE format expects document.jsonl and documents_content.jsonl.
inline Corpus load_corpus(const fs::path& path, const LoadOptions& options = {}) {
  if (!fs::is_directory(path)) throw io_error("corpus directory not found: " + path.string());
  Corpus corpus = options.format == CorpusFormat::kNativeJsonl
                      ? detail::load_native(path)
                      : detail::load_due(path, options.due_dataset, options.due_tool_name);
  link_corpus(corpus);
  return corpus;
}

inline void write_corpus(const fs::path& dir, const std::vector<Document>& documents,
                         const std::vector<TaskSample>& samples) {
  io::write_file_atomic(dir / "documents.jsonl",
                        io::to_jsonl(documents, [](const Document& d) { return encode(d); }));
  io::write_file_atomic(dir / "samples.jsonl",
                        io::to_jsonl(samples, [](const TaskSample& s) { return encode(s); }));
}

// --- splits ---------------------------------------------------------------

struct SplitManifest {
  std::uint64_t seed = 0;
  std::size_t pool_size = 0;
  std::size_t train_count = 0;
  std::size_t eval_count = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> eval_ids;

  bool operator==(const SplitManifest&) const = default;
};

inline json encode(const SplitManifest& m) {
  return {{"seed", m.seed},
          {"pool_size", m.pool_size},
          {"train_count", m.train_count},
          {"eval_count", m.eval_count},
          {"train_ids", m.train_ids},
          {"eval_ids", m.eval_ids}};
}

inline SplitManifest decode_split(const json& j) {
  SplitManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.pool_size = j.at("pool_size").get<std::size_t>();
  m.train_count = j.at("train_count").get<std::size_t>();
  m.eval_count = j.at("eval_count").get<std::size_t>();
  m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  m.eval_ids = j.at("eval_ids").get<std::vector<std::string>>();
  if (m.train_ids.size() != m.train_count || m.eval_ids.size() != m.eval_count ||
      m.train_count + m.eval_count != m.pool_size) {
    throw validation_error("split manifest counts are inconsistent");
  }
  return m;
}

inline std::size_t eval_count_for(std::size_t pool_size, double eval_fraction) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw validation_error("eval_fraction must lie in (0, 1), got " + std::to_string(eval_fraction));
  }
  return static_cast<std::size_t>(
      text::round_half_up(static_cast<double>(pool_size) * eval_fraction));
}

/// Seeded Fisher-Yates shuffle of the sorted pool; the first `eval_count`
/// ids form the eval split. Both member lists are stored sorted.
inline SplitManifest make_split_by_count(std::vector<std::string> pool, std::size_t eval_count,
                                         std::uint64_t seed) {
  if (pool.empty()) throw validation_error("cannot split an empty pool");
  std::sort(pool.begin(), pool.end());
  if (std::adjacent_find(pool.begin(), pool.end()) != pool.end()) {
    throw validation_error("split pool contains duplicate ids");
  }
  if (eval_count < 1 || eval_count > pool.size()) {
    throw validation_error("eval split size " + std::to_string(eval_count) +
                           " out of range for pool of " + std::to_string(pool.size()));
  }
  Rng rng(seed);
  for (std::size_t i = pool.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i + 1));
    std::swap(pool[i], pool[j]);
  }
  SplitManifest m;
  m.seed = seed;
  m.pool_size = pool.size();
  m.eval_count = eval_count;
  m.train_count = pool.size() - eval_count;
  m.eval_ids.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(eval_count));
  m.train_ids.assign(pool.begin() + static_cast<std::ptrdiff_t>(eval_count), pool.end());
  std::sort(m.eval_ids.begin(), m.eval_ids.end());
  std::sort(m.train_ids.begin(), m.train_ids.end());
  return m;
}

/// eval_count = round-half-up(pool_size * eval_fraction).
inline SplitManifest make_split(std::vector<std::string> pool, double eval_fraction,
                                std::uint64_t seed) {
  if (pool.empty()) throw validation_error("cannot split an empty pool");
  const std::size_t eval_count = eval_count_for(pool.size(), eval_fraction);
  if (eval_count < 1) {
    throw validation_error("eval_fraction " + std::to_string(eval_fraction) +
                           " yields an empty eval split");
  }
  return make_split_by_count(std::move(pool), eval_count, seed);
}

/// Splits each stratum independently (round-half-up per stratum) and merges.
/// Strata whose share rounds to zero contribute no eval samples.
inline SplitManifest make_stratified_split(
    const std::vector<std::pair<std::string, std::string>>& pool_with_strata,
    double eval_fraction, std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> strata;
  for (const auto& [id, stratum] : pool_with_strata) strata[stratum].push_back(id);
  SplitManifest m;
  m.seed = seed;
  std::uint64_t stream = 0;
  for (auto& [name, ids] : strata) {
    const std::size_t n = eval_count_for(ids.size(), eval_fraction);
    m.pool_size += ids.size();
    if (n == 0) {
      m.train_ids.insert(m.train_ids.end(), ids.begin(), ids.end());
      continue;
    }
    const auto part = make_split_by_count(std::move(ids), n, derive_seed(seed, stream++));
    m.train_ids.insert(m.train_ids.end(), part.train_ids.begin(), part.train_ids.end());
    m.eval_ids.insert(m.eval_ids.end(), part.eval_ids.begin(), part.eval_ids.end());
  }
  if (m.eval_ids.empty()) throw validation_error("stratified split produced no eval samples");
  std::sort(m.train_ids.begin(), m.train_ids.end());
  std::sort(m.eval_ids.begin(), m.eval_ids.end());
  m.train_count = m.train_ids.size();
  m.eval_count = m.eval_ids.size();
  return m;
}

// --- grouping -------------------------------------------------------------

/// Concatenates the questions of samples that share one document and re-cuts
/// them into prompts of at most `max_group` questions, preserving order.
inline std::vector<TaskSample> group_questions(const std::vector<TaskSample>& samples,
                                               std::size_t max_group = 10) {
  if (max_group < 1) throw validation_error("max_group must be >= 1");
  if (samples.empty()) return {};
  const TaskSample& first = samples.front();
  for (const auto& s : samples) {
    if (s.doc_id != first.doc_id) {
      throw validation_error("group_questions: mixed doc_ids '" + first.doc_id + "' and '" +
                             s.doc_id + "'");
    }
    if (s.task_kind != first.task_kind || s.split != first.split) {
      throw validation_error("group_questions: samples of " + first.doc_id +
                             " differ in task kind or split");
    }
    if (s.task_kind == TaskKind::kKIE) {
      throw validation_error("group_questions: KIE samples cannot be grouped");
    }
  }
  if (samples.size() == 1 && samples.front().questions.size() <= max_group) return samples;

  std::vector<std::string> questions;
  std::vector<std::vector<std::string>> answers;
  for (const auto& s : samples) {
    questions.insert(questions.end(), s.questions.begin(), s.questions.end());
    answers.insert(answers.end(), s.answers.begin(), s.answers.end());
  }
  std::vector<TaskSample> out;
  for (std::size_t begin = 0, g = 0; begin < questions.size(); begin += max_group, ++g) {
    const std::size_t end = std::min(questions.size(), begin + max_group);
    TaskSample s;
    s.sample_id = first.doc_id + "#" + std::string(to_string(first.split)) + "-g" +
                  std::to_string(g);
    s.doc_id = first.doc_id;
    s.task_kind = first.task_kind;
    s.dataset_tag = first.dataset_tag;
    s.split = first.split;
    s.questions.assign(questions.begin() + static_cast<std::ptrdiff_t>(begin),
                       questions.begin() + static_cast<std::ptrdiff_t>(end));
    s.answers.assign(answers.begin() + static_cast<std::ptrdiff_t>(begin),
                     answers.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back(std::move(s));
  }
  return out;
}

/// Applies group_questions per (document, split) to the samples of the given
/// dataset; everything else passes through. Output order follows first
/// appearance of each group.
inline std::vector<TaskSample> group_dataset(const std::vector<TaskSample>& samples,
                                             DatasetTag tag, std::size_t max_group = 10) {
  std::vector<TaskSample> out;
  std::map<std::pair<std::string, Split>, std::vector<TaskSample>> groups;
  std::vector<std::pair<std::string, Split>> order;
  for (const auto& s : samples) {
    if (s.dataset_tag != tag) {
      out.push_back(s);
      continue;
    }
    auto key = std::make_pair(s.doc_id, s.split);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(s);
  }
  for (const auto& key : order) {
    auto grouped = group_questions(groups[key], max_group);
    out.insert(out.end(), grouped.begin(), grouped.end());
  }
  return out;
}

}  // namespace distill_forge::ingest
