#include <catch2/catch_amalgamated.hpp>

#include "distill_forge/prompting.hpp"
#include "distill_forge/synthetic.hpp"

namespace df = distill_forge;
namespace pr = distill_forge::prompting;
namespace vb = distill_forge::verbalizer;

namespace {

const std::string kDocText = "Invoice\nTotal   42.00";

vb::VerbalizedDocument verbalized(const std::string& doc_id, const std::string& text = kDocText) {
  return {doc_id, text, {text}, vb::estimate_tokens(text)};
}

const pr::PromptTemplate& tmpl(df::TaskKind kind) {
  static const auto kByTask = pr::index_by_task(pr::default_templates());
  return kByTask.at(kind);
}

df::TaskSample vqa(std::vector<std::string> questions) {
  df::TaskSample s{"s1", "doc", df::TaskKind::kVQA, df::DatasetTag::kDocVQA, std::move(questions),
                   {}, {}, df::Split::kTrain};
  for (std::size_t i = 0; i < s.questions.size(); ++i) s.answers.push_back({"x"});
  return s;
}

df::TaskSample kie() {
  df::TaskSample s{"r1", "doc", df::TaskKind::kKIE, df::DatasetTag::kSROIE,
                   {"company", "date", "address", "total"}, {}, {}, df::Split::kTrain};
  s.kie_gold = {{"company", "ACME"}, {"date", "01/02/2018"}, {"address", "1 Road"}, {"total", "9.00"}};
  return s;
}

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

const std::string kClauseMarker = "Deliver the results as a single JSON object";

}  // namespace

TEST_CASE("KIE prompt lists the four keys", "[prompting]") {
  const auto p = pr::build_prompt(kie(), verbalized("doc"), tmpl(df::TaskKind::kKIE));
  CHECK(p.prompt_text.find(R"("company", "date", "address", "total")") != std::string::npos);
  CHECK(p.prompt_text.find(kDocText) != std::string::npos);
  CHECK(occurrences(p.prompt_text, kClauseMarker) == 1);
  CHECK(p.template_id == "kie-default");
  CHECK(p.sample_id == "r1");
  CHECK(p.token_count_estimate == vb::estimate_tokens(p.prompt_text));
}

TEST_CASE("VQA prompt with a single question", "[prompting]") {
  const auto p = pr::build_prompt(vqa({"What is the total?"}), verbalized("doc"), tmpl(df::TaskKind::kVQA));
  CHECK(p.prompt_text.find("Questions:\n1. What is the total?\n\n") != std::string::npos);
  CHECK(p.prompt_text.find("2. ") == std::string::npos);
  CHECK(p.prompt_text.find(R"(keys "1",)") != std::string::npos);
}

TEST_CASE("grouped prompt with ten questions", "[prompting]") {
  std::vector<std::string> qs;
  for (int i = 1; i <= 10; ++i) qs.push_back("question " + std::to_string(i) + "?");
  const auto sample = vqa(qs);
  const auto p = pr::build_prompt(sample, verbalized("doc"), tmpl(df::TaskKind::kVQA));
  for (int i = 1; i <= 10; ++i) {
    CHECK(p.prompt_text.find(std::to_string(i) + ". question " + std::to_string(i) + "?") !=
          std::string::npos);
  }
  CHECK(pr::answer_keys(sample) ==
        std::vector<std::string>{"1", "2", "3", "4", "5", "6", "7", "8", "9", "10"});
  CHECK(p.prompt_text.find(R"("1", "2", "3", "4", "5", "6", "7", "8", "9", "10")") != std::string::npos);
}

TEST_CASE("build_prompt errors", "[prompting]") {
  SECTION("task kind mismatch") {
    CHECK_THROWS_AS(pr::build_prompt(vqa({"q"}), verbalized("doc"), tmpl(df::TaskKind::kKIE)), df::Error);
  }
  SECTION("document mismatch") {
    CHECK_THROWS_AS(pr::build_prompt(vqa({"q"}), verbalized("other"), tmpl(df::TaskKind::kVQA)), df::Error);
  }
  SECTION("unknown placeholder") {
    auto t = tmpl(df::TaskKind::kVQA);
    t.instruction_text += " {language}";
    CHECK_THROWS_WITH(pr::build_prompt(vqa({"q"}), verbalized("doc"), t),
                      Catch::Matchers::ContainsSubstring("unfilled placeholder {language}"));
  }
  SECTION("template without required placeholder") {
    auto j = pr::encode(tmpl(df::TaskKind::kVQA));
    j["instruction_text"] = "no document here {questions}";
    CHECK_THROWS_AS(pr::decode_template(j), df::Error);
  }
}

TEST_CASE("substituted text is not rescanned", "[prompting]") {
  const auto p = pr::build_prompt(vqa({"what is {document}?"}), verbalized("doc", "text with {questions}"),
                                  tmpl(df::TaskKind::kVQA));
  CHECK(p.prompt_text.find("1. what is {document}?") != std::string::npos);
  CHECK(pr::extract_document(p.prompt_text) == "text with {questions}");
}

TEST_CASE("prompt properties over synthetic documents", "[prompting][property]") {
  df::Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    df::DocumentPage page = df::synthetic::random_page(rng, 30);
    const auto v = vb::verbalize({"doc", df::DatasetTag::kSynthetic, {page, page}});
    std::vector<std::string> qs;
    for (std::uint64_t k = 0, n = 1 + df::uniform_below(rng, 10); k < n; ++k) {
      qs.push_back("q" + std::to_string(k));
    }
    for (const auto kind : {df::TaskKind::kVQA, df::TaskKind::kKIE}) {
      auto sample = kind == df::TaskKind::kKIE ? kie() : vqa(qs);
      const auto a = pr::build_prompt(sample, v, tmpl(kind));
      const auto b = pr::build_prompt(sample, v, tmpl(kind));
      REQUIRE(a == b);
      REQUIRE_FALSE(a.prompt_text.empty());
      REQUIRE(pr::extract_document(a.prompt_text) == v.text);
      REQUIRE(occurrences(a.prompt_text, kClauseMarker) == 1);
    }
  }
}

TEST_CASE("shipped template files match the built-in set", "[prompting]") {
  auto shipped = pr::load_templates(DISTILL_FORGE_TEMPLATES);
  auto builtin = pr::default_templates();
  auto by_id = [](const auto& a, const auto& b) { return a.template_id < b.template_id; };
  std::sort(shipped.begin(), shipped.end(), by_id);
  std::sort(builtin.begin(), builtin.end(), by_id);
  CHECK(shipped == builtin);
}

TEST_CASE("prompt record codec", "[prompting]") {
  const auto p = pr::build_prompt(kie(), verbalized("doc"), tmpl(df::TaskKind::kKIE));
  CHECK(pr::decode_prompt(pr::encode(p)) == p);
}
