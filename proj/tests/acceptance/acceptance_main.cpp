// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "distill_forge/curriculum.hpp"
#include "distill_forge/ingest.hpp"
#include "distill_forge/levenshtein.hpp"
#include "distill_forge/metrics.hpp"
#include "distill_forge/synthetic.hpp"
#include "distill_forge/teacher.hpp"
#include "distill_forge/verbalizer.hpp"
#include "../unit/dry_run.hpp"
#include "../unit/layout_checks.hpp"
#include "../unit/metric_fixtures.hpp"
#include "../unit/stub_server.hpp"
#include "../unit/test_support.hpp"

namespace df = distill_forge;
namespace cu = distill_forge::curriculum;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> failures;

  void fail(const std::string& why) {
    pass = false;
    failures.push_back(why);
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

cu::ScoredPool pool_of(const std::vector<double>& sims) {
  cu::ScoredPool pool;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%05zu", i);
    pool.emplace_back(id, cu::SimilarityScore(sims[i]));
  }
  return pool;
}

void schedule_fidelity(Outcome& o) {
  const auto t0 = Clock::now();
  struct Row {
    cu::ScheduleName name;
    double start;
    double last;
  };
  const Row rows[] = {{cu::ScheduleName::kA, 0.25, -0.25},
                      {cu::ScheduleName::kB, 0.5, -0.5},
                      {cu::ScheduleName::kC, 1.0, -1.0},
                      {cu::ScheduleName::kD, 2.0, -2.0}};
  for (const auto& r : rows) {
    const auto s = cu::CurriculumSchedule::named(r.name);
    const double at2 = cu::schedule_tau(s, 2);
    const double at8 = cu::schedule_tau(s, 8);
    if (at2 != r.start || at8 != r.last) {
      std::ostringstream m;
      m.precision(17);
      m << cu::to_string(r.name) << ": tau(2)=" << at2 << " tau(8)=" << at8;
      o.fail(m.str());
    }
  }
  const double elapsed = seconds_since(t0);
  if (elapsed >= 1.0) o.fail("runtime " + std::to_string(elapsed) + " s");
  o.detail << "A-D endpoints at epochs 2 and 8, " << elapsed * 1e3 << " ms";
}

void weight_law(Outcome& o) {
  df::Rng rng(20240101);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double s = i == 0 ? 0.0 : i == 1 ? 1.0 : df::uniform_open01(rng);
    const double tau = -2.0 + 4.0 * df::uniform_open01(rng);
    const double w = cu::weight(cu::SimilarityScore(s), tau);
    worst = std::max(worst, std::abs(std::log(w) - tau * std::log(std::max(0.01, s))));
  }
  if (worst > 1e-12) o.fail("max log error " + std::to_string(worst));
  const double w0 = cu::weight(cu::SimilarityScore(0.0), -0.25);
  if (std::abs(w0 - 3.16228) > 1e-5) o.fail("weight(0,-0.25)=" + std::to_string(w0));
  o.detail << "max |log w - tau ln s| = " << worst << ", weight(0,-0.25) = " << w0;
}

void edit_distance_oracle(Outcome& o) {
  const auto t0 = Clock::now();
  df::Rng rng(77);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = test_support::random_string(rng, 12, "acgt");
    const auto b = test_support::random_string(rng, 12, "acgt");
    if (df::levenshtein(a, b) != test_support::edit_distance_oracle(a, b)) ++mismatches;
  }
  const double elapsed = seconds_since(t0);
  if (mismatches) o.fail(std::to_string(mismatches) + " mismatches");
  if (elapsed >= 5.0) o.fail("runtime " + std::to_string(elapsed) + " s");
  o.detail << "10000 pairs, " << mismatches << " mismatches, " << elapsed * 1e3 << " ms";
}

std::vector<std::string> numbered_ids(std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back("sample-" + std::to_string(i));
  return ids;
}

void split_arithmetic(Outcome& o) {
  auto carve = [] {
    const auto base = df::ingest::make_split(numbered_ids(57202), 5721.0 / 57202.0, 1);
    const auto cur = df::ingest::make_split_by_count(base.train_ids, base.eval_count, 2);
    return std::make_pair(base, cur);
  };
  const auto first = carve();
  const auto second = carve();
  const auto& [base, cur] = first;
  if (base.train_count != 51481 || base.eval_count != 5721) o.fail("57202 split wrong");
  if (cur.train_count != 45760 || cur.eval_count != 5721) o.fail("51481 split wrong");
  if (!(first == second)) o.fail("not deterministic");
  o.detail << "57202 -> " << base.train_count << "/" << base.eval_count << ", 51481 -> "
           << cur.train_count << "/" << cur.eval_count;
}

void sampler_statistics(Outcome& o) {
  constexpr std::size_t kItems = 100;
  constexpr std::size_t kDraws = 100000;
  df::Rng rng(5);
  std::vector<double> sims(kItems);
  for (auto& s : sims) s = df::uniform_open01(rng);
  const auto pool = pool_of(sims);
  auto counts_for = [&](double tau, std::uint64_t seed) {
    const auto e = cu::build_epoch(pool, tau, kDraws, seed, cu::SamplingMode::kWithReplacement);
    std::map<std::string, double> counts;
    for (const auto& [id, s] : pool) counts[id] = 0;
    for (const auto& id : e.ordered_sample_ids) counts[id] += 1;
    std::vector<double> out;
    for (const auto& [id, s] : pool) out.push_back(counts[id]);
    return out;
  };

  const auto uniform = counts_for(0.0, 1001);
  const double expected = static_cast<double>(kDraws) / kItems;
  double chi2 = 0;
  for (double c : uniform) chi2 += (c - expected) * (c - expected) / expected;
  const double critical = boost::math::quantile(
      boost::math::complement(boost::math::chi_squared(kItems - 1), 0.001));
  if (!(chi2 < critical)) o.fail("chi-square " + std::to_string(chi2));

  const auto weighted = counts_for(1.0, 1002);
  const auto probs = cu::selection_probabilities(pool, 1.0);
  const double mx = std::accumulate(weighted.begin(), weighted.end(), 0.0) / kItems;
  const double my = std::accumulate(probs.begin(), probs.end(), 0.0) / kItems;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < kItems; ++i) {
    sxy += (weighted[i] - mx) * (probs[i] - my);
    sxx += (weighted[i] - mx) * (weighted[i] - mx);
    syy += (probs[i] - my) * (probs[i] - my);
  }
  const double r = sxy / std::sqrt(sxx * syy);
  if (!(r > 0.99)) o.fail("correlation " + std::to_string(r));

  int easy_first = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    df::Rng trial_rng(df::derive_seed(9000, static_cast<std::uint64_t>(trial)));
    std::vector<double> trial_sims(kItems);
    for (auto& s : trial_sims) s = df::uniform_open01(trial_rng);
    const auto trial_pool = pool_of(trial_sims);
    const auto e = cu::build_epoch(trial_pool, 2.0, kItems, trial_rng());
    std::unordered_map<std::string, double> by_id;
    for (const auto& [id, s] : trial_pool) by_id[id] = s.value();
    const auto deciles = cu::decile_means(e.ordered_sample_ids, by_id);
    if (deciles.front() > deciles.back()) ++easy_first;
  }
  if (easy_first < 950) o.fail("easy-first in " + std::to_string(easy_first) + "/1000");
  o.detail << "chi2 " << chi2 << " < " << critical << ", r = " << r << ", easy-first "
           << easy_first << "/1000";
}

void verbalizer_properties(Outcome& o) {
  df::Rng rng(4242);
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto page = df::synthetic::random_page(rng, 60);
    if (auto why = layout_checks::check_page(page)) {
      if (failures++ == 0) o.fail("page " + std::to_string(i) + ": " + *why);
    }
  }
  const df::DocumentPage fixture{200, 100,
                                 {{"Invoice", {0, 0, 70, 10}, 0},
                                  {"Total", {0, 20, 50, 30}, 0},
                                  {"42.00", {80, 20, 130, 30}, 0}}};
  df::verbalizer::GridParams grid;
  grid.char_width = 10;
  grid.line_height = 10;
  const bool fixture_ok = df::verbalizer::render_spatial(fixture, grid) == "Invoice\nTotal   42.00" &&
                          df::verbalizer::render_spatial(fixture, df::verbalizer::estimate_grid(fixture)) ==
                              "Invoice\nTotal   42.00";
  if (!fixture_ok) o.fail("invoice fixture mismatch");
  o.detail << "1000 pages, " << failures << " violations, fixture " << (fixture_ok ? "exact" : "wrong");
}

void metrics_fixtures(Outcome& o) {
  const auto results = metric_fixtures::run_cases(DISTILL_FORGE_FIXTURES "/metrics_cases.json");
  int bad = 0;
  for (const auto& r : results) {
    if (!metric_fixtures::within(r, 1e-9)) {
      ++bad;
      o.fail(r.name);
    }
  }
  if (results.size() != 30) o.fail(std::to_string(results.size()) + " cases, expected 30");
  const double a = df::metrics::anls("1999", {"1998"});
  if (std::abs(a - 0.75) > 1e-9) o.fail("ANLS(1999,1998)=" + std::to_string(a));
  o.detail << results.size() << " cases, " << bad << " outside 1e-9, ANLS(1999,1998) = " << a;
}

void end_to_end_determinism(Outcome& o) {
  const auto t0 = Clock::now();
  test_support::TempDir corpus, run_a, run_b;
  df::pipeline::write_synthetic_corpus(corpus.path(), 50, 2024);
  const auto ca = dry_run::config(run_a.path(), cu::ScheduleName::kB, 7);
  const auto cb = dry_run::config(run_b.path(), cu::ScheduleName::kB, 7);
  dry_run::run(ca, corpus.path());
  dry_run::run(cb, corpus.path());
  int compared = 0;
  for (int e = 1; e <= 8; ++e) {
    const auto pa = df::pipeline::epoch_manifest_path(ca, e);
    const auto pb = df::pipeline::epoch_manifest_path(cb, e);
    if (!fs::exists(pa) || df::io::read_file(pa) != df::io::read_file(pb)) {
      o.fail("epoch " + std::to_string(e) + " manifest differs");
    }
    ++compared;
  }
  if (df::io::read_file(run_a / "report.json") != df::io::read_file(run_b / "report.json")) {
    o.fail("report.json differs");
  }
  const double elapsed = seconds_since(t0);
  if (elapsed >= 60.0) o.fail("runtime " + std::to_string(elapsed) + " s");
  o.detail << compared << " manifests + report byte-identical, " << elapsed << " s";
}

void teacher_client(Outcome& o) {
  namespace th = df::teacher;
  auto config_for = [](const stub_server::ChatServer& server, const fs::path& cache) {
    th::TeacherConfig c;
    c.endpoint_url = server.url();
    c.backoff = {std::chrono::milliseconds(5)};
    c.cache_dir = cache;
    c.api_key_env = "DISTILL_FORGE_ACCEPTANCE_UNSET_KEY";
    return c;
  };
  auto client_for = [](const th::TeacherConfig& c) {
    return th::TeacherClient(c, std::make_shared<th::HttpTransport>(c));
  };
  std::vector<df::prompting::PromptRecord> prompts;
  for (int i = 0; i < 8; ++i) prompts.push_back({"s" + std::to_string(i), "prompt " + std::to_string(i), "t", 1});

  {
    stub_server::ChatServer server;
    test_support::TempDir cache;
    const auto c = config_for(server, cache.path());
    const auto first = client_for(c).label_batch(prompts);
    const int after_first = server.requests();
    const auto second = client_for(c).label_batch(prompts);
    if (first.labels.size() != prompts.size()) o.fail("first batch incomplete");
    if (second.report.calls != 0 || server.requests() != after_first) o.fail("second run made calls");
    o.detail << "re-run calls " << second.report.calls;
  }
  {
    stub_server::ChatServer server;
    server.enqueue(429);
    server.enqueue(429);
    const auto label = client_for(config_for(server, {})).label(prompts[0]);
    if (server.requests() != 3 || !label.parsed_ok || label.canonical_target != R"({"1":"42.00"})") {
      o.fail("429 retry: " + std::to_string(server.requests()) + " requests");
    }
    o.detail << ", 429x2 -> " << server.requests() << " requests";
  }
  {
    stub_server::ChatServer server("I cannot answer");
    const auto label = client_for(config_for(server, {})).label(prompts[0]);
    if (label.parsed_ok || label.canonical_target != "I cannot answer") o.fail("prose reply marked parsed");
    o.detail << ", prose parsed_ok=" << (label.parsed_ok ? "true" : "false");
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"schedule fidelity", schedule_fidelity},
      {"weight law", weight_law},
      {"edit-distance oracle", edit_distance_oracle},
      {"split arithmetic", split_arithmetic},
      {"sampler statistics", sampler_statistics},
      {"verbalizer properties", verbalizer_properties},
      {"metrics fixtures", metrics_fixtures},
      {"end-to-end determinism", end_to_end_determinism},
      {"teacher client", teacher_client},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      check(o);
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    if (!o.pass) ++failed;
    std::printf("%s  %-24s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str());
    for (const auto& why : o.failures) std::printf("      - %s\n", why.c_str());
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
