#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "distill_forge/io.hpp"
#include "distill_forge/metrics.hpp"

namespace metric_fixtures {

namespace df = distill_forge;
namespace mt = distill_forge::metrics;
using json = nlohmann::json;

struct CaseResult {
  std::string name;
  double expected = 0;
  double direct = 0;      // the metric function itself
  double evaluated = 0;   // the same case routed through evaluate()
};

inline std::vector<CaseResult> run_cases(const std::string& path) {
  const json cases = json::parse(df::io::read_file(path));
  std::vector<CaseResult> out;
  for (const auto& c : cases) {
    CaseResult r;
    r.name = c.at("name").get<std::string>();
    r.expected = c.at("expected").get<double>();
    const std::string metric = c.at("metric").get<std::string>();
    const std::string pred = c.at("prediction").get<std::string>();

    df::TaskSample sample;
    sample.sample_id = "case";
    sample.doc_id = "doc";
    sample.split = df::Split::kTest;
    mt::EvalOptions options;
    std::string output = json{{"1", pred}}.dump();
    if (metric == "type_aware") {
      const auto gold = c.at("gold").get<std::map<std::string, std::string>>();
      r.direct = mt::sroie_type_aware(pred, gold);
      sample.task_kind = df::TaskKind::kKIE;
      sample.dataset_tag = df::DatasetTag::kSROIE;
      for (const auto& [k, v] : gold) sample.questions.push_back(k);
      sample.kie_gold = gold;
      output = pred;
    } else {
      const auto golds = c.at("golds").get<std::vector<std::string>>();
      sample.questions = {"q"};
      sample.answers = {golds};
      if (metric == "anls") {
        options.anls_threshold = c.at("threshold").get<double>();
        r.direct = mt::anls(pred, golds, options.anls_threshold);
        sample.task_kind = df::TaskKind::kVQA;
        sample.dataset_tag = df::DatasetTag::kDocVQA;
      } else {
        r.direct = mt::exact_accuracy(pred, golds);
        sample.task_kind = df::TaskKind::kTableNLI;
        sample.dataset_tag = df::DatasetTag::kTabFact;
      }
    }
    const auto report = mt::evaluate({{"case", output}}, {sample}, options);
    r.evaluated = report.per_dataset.begin()->second.value;
    out.push_back(r);
  }
  return out;
}

inline bool within(const CaseResult& r, double tol) {
  return std::abs(r.direct - r.expected) <= tol && std::abs(r.evaluated - r.expected) <= tol;
}

}  // namespace metric_fixtures
