#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "distill_forge/hash.hpp"
#include "distill_forge/random.hpp"
#include "distill_forge/types.hpp"

namespace distill_forge::synthetic {

namespace detail {

inline constexpr std::array<const char*, 40> kWords{
    "invoice", "total",  "date",    "amount", "company", "address", "receipt", "tax",
    "qty",     "price",  "item",    "cash",   "change",  "table",   "year",    "rank",
    "team",    "score",  "city",    "region", "sales",   "growth",  "market",  "share",
    "report",  "figure", "percent", "people", "survey",  "count",   "name",    "page",
    "store",   "road",   "street",  "mall",   "sdn",     "bhd",     "no",      "ref"};

inline std::string random_word(Rng& rng) {
  std::string w = kWords[uniform_below(rng, kWords.size())];
  if (uniform_below(rng, 4) == 0) w += std::to_string(uniform_below(rng, 1000));
  return w;
}

}  // namespace detail

/// Random page of space-free word tokens laid out in rows. Rows may jitter
/// vertically and tokens may overlap horizontally, which exercises line
/// clustering and collision shifting.
inline DocumentPage random_page(Rng& rng, std::size_t max_tokens = 40) {
  DocumentPage page;
  page.width = 200 + static_cast<double>(uniform_below(rng, 800));
  page.height = 200 + static_cast<double>(uniform_below(rng, 800));
  const double char_w = 4 + static_cast<double>(uniform_below(rng, 8));
  const double line_h = 8 + static_cast<double>(uniform_below(rng, 10));
  const std::size_t n = uniform_below(rng, max_tokens + 1);
  for (std::size_t i = 0; i < n; ++i) {
    OcrToken t;
    t.text = detail::random_word(rng);
    const double w = char_w * static_cast<double>(t.text.size());
    const auto rows = static_cast<std::uint64_t>(page.height / (line_h * 1.2));
    const double row = static_cast<double>(uniform_below(rng, std::max<std::uint64_t>(1, rows)));
    const double jitter = (uniform_open01(rng) - 0.5) * 0.3 * line_h;
    t.bbox.x0 = uniform_open01(rng) * std::max(1.0, page.width - w);
    t.bbox.x1 = t.bbox.x0 + w;
    t.bbox.y0 = row * line_h * 1.2 + jitter;
    t.bbox.y1 = t.bbox.y0 + line_h;
    page.tokens.push_back(std::move(t));
  }
  clamp_to_page(page);
  return page;
}

struct SyntheticCorpus {
  std::vector<Document> documents;
  std::vector<TaskSample> samples;
};

/// Deterministic mixed-dataset corpus: `n_docs` documents cycling through the
/// base datasets, each with one to three samples whose gold answers are words
/// of the document. WebSRC documents carry many single-question samples so
/// grouping applies; WebSRC has no test split.
inline SyntheticCorpus generate_corpus(std::size_t n_docs, std::uint64_t seed) {
  static constexpr std::array<DatasetTag, 6> kTags{
      DatasetTag::kDocVQA,  DatasetTag::kInfographicsVQA, DatasetTag::kWikiTableQuestions,
      DatasetTag::kTabFact, DatasetTag::kSROIE,           DatasetTag::kWebSRC};
  Rng rng(seed);
  SyntheticCorpus out;
  for (std::size_t d = 0; d < n_docs; ++d) {
    Document doc;
    doc.dataset_tag = kTags[d % kTags.size()];
    doc.doc_id = std::string(to_string(doc.dataset_tag)) + "-" + std::to_string(d);
    const std::size_t pages = 1 + uniform_below(rng, 2);
    for (std::size_t p = 0; p < pages; ++p) {
      DocumentPage page;
      do {
        page = random_page(rng, 30);
      } while (page.tokens.size() < 5);
      for (auto& t : page.tokens) t.page_index = static_cast<int>(p);
      doc.pages.push_back(std::move(page));
    }
    const auto& words = doc.pages.front().tokens;
    auto pick = [&] { return words[uniform_below(rng, words.size())].text; };
    const Split split = doc.dataset_tag == DatasetTag::kWebSRC || uniform_below(rng, 4) != 0
                            ? Split::kTrain
                            : Split::kTest;
    const TaskKind kind = task_kind_for(doc.dataset_tag);
    if (kind == TaskKind::kKIE) {
      TaskSample s{doc.doc_id + "#0", doc.doc_id, kind, doc.dataset_tag, {}, {}, {}, split};
      s.questions = {"company", "date", "address", "total"};
      const auto day = 1 + uniform_below(rng, 28);
      const auto month = 1 + uniform_below(rng, 12);
      s.kie_gold = {{"company", pick() + " sdn bhd"},
                    {"date", std::to_string(day) + "/" + std::to_string(month) + "/2018"},
                    {"address", pick() + " " + pick() + " road"},
                    {"total", std::to_string(uniform_below(rng, 500)) + "." +
                                  std::to_string(10 + uniform_below(rng, 90))}};
      out.samples.push_back(std::move(s));
    } else {
      const std::size_t n_samples =
          doc.dataset_tag == DatasetTag::kWebSRC ? 3 + uniform_below(rng, 12)
                                                 : 1 + uniform_below(rng, 3);
      for (std::size_t k = 0; k < n_samples; ++k) {
        TaskSample s{doc.doc_id + "#" + std::to_string(k), doc.doc_id, kind, doc.dataset_tag,
                     {}, {}, {}, split};
        if (kind == TaskKind::kTableNLI) {
          s.questions = {"the " + pick() + " is listed before " + pick()};
          s.answers = {{uniform_below(rng, 2) == 0 ? "0" : "1"}};
        } else if (kind == TaskKind::kTableQA) {
          s.questions = {"how many " + pick() + " are there?"};
          s.answers = {{std::to_string(uniform_below(rng, 3000))}};
        } else {
          s.questions = {"what is the " + pick() + "?"};
          s.answers = {{pick()}};
        }
        out.samples.push_back(std::move(s));
      }
    }
    out.documents.push_back(std::move(doc));
  }
  return out;
}

/// Copy of `s` with roughly `rate` of its characters replaced, deterministic
/// in `key`.
inline std::string corrupt(const std::string& s, double rate, const std::string& key) {
  Rng rng(std::stoull(sha256_hex(key).substr(0, 16), nullptr, 16));
  std::string out = s;
  bool after_backslash = false;
  for (char& c : out) {
    const bool escaped = after_backslash;
    after_backslash = !escaped && c == '\\';
    const bool alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    if (escaped || !alnum) continue;
    if (uniform_open01(rng) < rate) c = static_cast<char>('a' + uniform_below(rng, 26));
  }
  return out;
}

}  // namespace distill_forge::synthetic
