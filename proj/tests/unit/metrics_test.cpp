#include <catch2/catch_amalgamated.hpp>

#include "distill_forge/ingest.hpp"
#include "distill_forge/metrics.hpp"
#include "metric_fixtures.hpp"
#include "test_support.hpp"

namespace df = distill_forge;
namespace mt = distill_forge::metrics;
using Catch::Approx;

namespace {

df::TaskSample test_sample(const std::string& id, df::DatasetTag tag,
                           std::vector<std::string> questions,
                           std::vector<std::vector<std::string>> answers) {
  return {id, "doc-" + id, df::task_kind_for(tag), tag, std::move(questions), std::move(answers),
          {}, df::Split::kTest};
}

}  // namespace

TEST_CASE("metric fixture cases", "[metrics]") {
  const auto results = metric_fixtures::run_cases(DISTILL_FORGE_FIXTURES "/metrics_cases.json");
  REQUIRE(results.size() == 30);
  for (const auto& r : results) {
    INFO(r.name);
    CHECK(r.direct == Approx(r.expected).margin(1e-9));
    CHECK(r.evaluated == Approx(r.expected).margin(1e-9));
  }
}

TEST_CASE("anls", "[metrics]") {
  CHECK(mt::anls("1999", {"1998"}) == Approx(0.75).margin(1e-12));
  CHECK(mt::anls("abc", {"xyz"}) == 0.0);
  CHECK(mt::anls("same", {"same"}) == 1.0);
  CHECK_THROWS_AS(mt::anls("x", {}), df::Error);
}

TEST_CASE("anls properties", "[metrics][property]") {
  df::Rng rng(21);
  for (int i = 0; i < 3000; ++i) {
    auto pred = test_support::random_string(rng, 10, "abAB c");
    auto g1 = test_support::random_string(rng, 10, "abAB c");
    auto g2 = test_support::random_string(rng, 10, "abAB c");
    const double one = mt::anls(pred, {g1});
    const double two = mt::anls(pred, {g1, g2});
    REQUIRE(one >= 0.0);
    REQUIRE(one <= 1.0);
    REQUIRE(two >= one);
    if (!pred.empty()) REQUIRE(mt::anls(pred, {pred}) == 1.0);
  }
}

TEST_CASE("decimal parsing", "[metrics]") {
  CHECK(mt::parse_decimal("2,050") == "2050");
  CHECK(mt::parse_decimal("-1,234.50") == "-1234.5");
  CHECK(mt::parse_decimal("0.0") == "0");
  CHECK(mt::parse_decimal("-0") == "0");
  CHECK(mt::parse_decimal(".5") == "0.5");
  CHECK_FALSE(mt::parse_decimal("20,50").has_value());
  CHECK_FALSE(mt::parse_decimal("abc").has_value());
  CHECK_FALSE(mt::parse_decimal("").has_value());
  CHECK_FALSE(mt::parse_decimal("1.").has_value());
}

TEST_CASE("dates", "[metrics]") {
  const mt::CalendarDate xmas{2018, 12, 25};
  CHECK(mt::parse_date("25/12/2018") == xmas);
  CHECK(mt::parse_date("2018-12-25") == xmas);
  CHECK(mt::parse_date("25 Dec 2018") == xmas);
  CHECK(mt::parse_date("Dec 25, 2018") == xmas);
  CHECK(mt::parse_date("25-12-18") == xmas);
  CHECK(mt::parse_date("02/03/2018") == mt::CalendarDate{2018, 3, 2});
  CHECK_FALSE(mt::parse_date("31/02/2018").has_value());
  CHECK_FALSE(mt::parse_date("tomorrow").has_value());
}

TEST_CASE("sroie type-aware accuracy", "[metrics]") {
  CHECK(mt::sroie_type_aware(R"({"total":"42.00"})", {{"total", "42.0"}}) == 1.0);
  CHECK(mt::sroie_type_aware("not json", {{"total", "42.0"}}) == 0.0);
  CHECK(mt::sroie_type_aware("[1]", {{"total", "1"}}) == 0.0);
  CHECK(mt::sroie_type_aware(R"({"total":42})", {{"total", "42.00"}}) == 1.0);
}

TEST_CASE("evaluate routes datasets to metrics", "[metrics]") {
  std::vector<df::TaskSample> samples{
      test_sample("v", df::DatasetTag::kDocVQA, {"q"}, {{"1998"}}),
      test_sample("t", df::DatasetTag::kTabFact, {"q"}, {{"1"}}),
      test_sample("w", df::DatasetTag::kWikiTableQuestions, {"q"}, {{"2050"}}),
  };
  df::TaskSample kie{"r", "doc-r", df::TaskKind::kKIE, df::DatasetTag::kSROIE, {"total", "date"},
                     {}, {{"total", "9.00"}, {"date", "01/02/2018"}}, df::Split::kTest};
  samples.push_back(kie);
  auto train = test_sample("x", df::DatasetTag::kDocVQA, {"q"}, {{"a"}});
  train.split = df::Split::kTrain;
  samples.push_back(train);

  const std::unordered_map<std::string, std::string> outputs{
      {"v", R"({"1":"1999"})"},
      {"t", R"({"1":"0"})"},
      {"w", R"({"1":"2,050"})"},
      {"r", R"({"total":"RM9","date":"2018-02-02"})"},
  };
  const auto report = mt::evaluate(outputs, samples);
  REQUIRE(report.per_dataset.size() == 4);
  CHECK(report.per_dataset.at("DocVQA").metric_name == "ANLS");
  CHECK(report.per_dataset.at("DocVQA").value == Approx(0.75));
  CHECK(report.per_dataset.at("DocVQA").n_samples == 1);
  CHECK(report.per_dataset.at("TabFact").value == 0.0);
  CHECK(report.per_dataset.at("TabFact").metric_name == "Accuracy");
  CHECK(report.per_dataset.at("WikiTableQuestions").value == 1.0);
  CHECK(report.per_dataset.at("SROIE").metric_name == "TypeAwareAccuracy");
  CHECK(report.per_dataset.at("SROIE").value == 0.5);
  CHECK(report.average == Approx((0.75 + 0.0 + 1.0 + 0.5) / 4));

  SECTION("missing predictions score zero") {
    const auto empty = mt::evaluate({}, samples);
    for (const auto& [tag, score] : empty.per_dataset) CHECK(score.value == 0.0);
  }
  SECTION("report codec") {
    const auto back = mt::decode_report(mt::encode(report));
    CHECK(mt::encode(back).dump() == mt::encode(report).dump());
  }
}

TEST_CASE("evaluate rejects unroutable datasets", "[metrics]") {
  const std::vector<df::TaskSample> samples{test_sample("s", df::DatasetTag::kWebSRC, {"q"}, {{"a"}})};
  CHECK_THROWS_WITH(mt::evaluate({}, samples), Catch::Matchers::ContainsSubstring("WebSRC"));
  mt::EvalOptions options;
  options.metric_override[df::DatasetTag::kWebSRC] = mt::MetricKind::kAnls;
  CHECK(mt::evaluate({{"s", R"({"1":"a"})"}}, samples, options).per_dataset.at("WebSRC").value == 1.0);
}

TEST_CASE("grouped predictions are scored per question", "[metrics][property]") {
  df::Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 1 + df::uniform_below(rng, 25);
    std::vector<df::TaskSample> singles;
    std::unordered_map<std::string, std::string> single_outputs;
    std::vector<std::string> answers_in_order;
    for (std::uint64_t i = 0; i < n; ++i) {
      auto s = test_sample("q" + std::to_string(i), df::DatasetTag::kDocVQA, {"question " + std::to_string(i)},
                           {{test_support::random_string(rng, 6, "abc")}});
      s.doc_id = "page";
      const auto answer = test_support::random_string(rng, 6, "abc");
      answers_in_order.push_back(answer);
      single_outputs[s.sample_id] = nlohmann::json{{"1", answer}}.dump();
      singles.push_back(s);
    }
    const auto grouped = df::ingest::group_questions(singles, 10);
    std::unordered_map<std::string, std::string> grouped_outputs;
    std::size_t k = 0;
    for (const auto& g : grouped) {
      nlohmann::json obj = nlohmann::json::object();
      for (std::size_t i = 0; i < g.questions.size(); ++i) obj[std::to_string(i + 1)] = answers_in_order[k++];
      grouped_outputs[g.sample_id] = obj.dump();
    }
    const auto a = mt::evaluate(single_outputs, singles).per_dataset.at("DocVQA");
    const auto b = mt::evaluate(grouped_outputs, grouped).per_dataset.at("DocVQA");
    REQUIRE(a.n_samples == b.n_samples);
    REQUIRE(a.value == Approx(b.value).margin(1e-12));
  }
}

TEST_CASE("extract_answer", "[metrics]") {
  CHECK(mt::extract_answer(R"({"1":"a","2":"b"})", 1) == "b");
  CHECK(mt::extract_answer(R"({"1":"a"})", 1).empty());
  CHECK(mt::extract_answer(R"({"1":42})", 0) == "42");
  CHECK(mt::extract_answer("plain prose", 0) == "plain prose");
  CHECK(mt::extract_answer("plain prose", 1).empty());
  CHECK(mt::extract_answer(R"("quoted")", 0) == "quoted");
}
