#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "distill_forge/error.hpp"
#include "distill_forge/json_text.hpp"
#include "distill_forge/levenshtein.hpp"
#include "distill_forge/parallel.hpp"
#include "distill_forge/random.hpp"

namespace distill_forge::curriculum {

using json = nlohmann::json;
using distill_forge::normalize_answer;

/// Similarity in [0, 1]; construction rejects anything else.
class SimilarityScore {
 public:
  explicit SimilarityScore(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw validation_error("similarity must lie in [0, 1], got " + std::to_string(value));
    }
  }

  double value() const noexcept { return value_; }
  bool operator==(const SimilarityScore&) const = default;

 private:
  double value_;
};

/// 1 - normalized edit distance of two already-normalized answers.
inline SimilarityScore similarity(std::string_view a, std::string_view b,
                                  SimilarityVariant variant = SimilarityVariant::kMaxLength) {
  return SimilarityScore(1.0 - normalized_levenshtein(a, b, variant));
}

inline constexpr double kMinSimilarity = 0.01;

/// Sampling weight max(0.01, sim)^tau. Always positive and finite for
/// finite tau.
inline double weight(SimilarityScore sim, double tau) {
  return std::pow(std::max(kMinSimilarity, sim.value()), tau);
}

enum class ScheduleName { kO, kA, kB, kC, kD, kCustom };

inline std::string_view to_string(ScheduleName n) {
  switch (n) {
    case ScheduleName::kO: return "O";
    case ScheduleName::kA: return "A";
    case ScheduleName::kB: return "B";
    case ScheduleName::kC: return "C";
    case ScheduleName::kD: return "D";
    case ScheduleName::kCustom: return "custom";
  }
  return "?";
}

/// Temperature trajectory. Epoch 1 trains on the uncurated split; epoch e >= 2
/// is curriculum epoch j = e - 1 with tau = t_start + t_step * (j - 1).
struct CurriculumSchedule {
  ScheduleName name = ScheduleName::kO;
  double t_start = 0;
  double t_step = 0;
  int total_epochs = 8;

  static CurriculumSchedule named(ScheduleName name, int total_epochs = 8) {
    switch (name) {
      case ScheduleName::kO: return {name, 0.0, 0.0, total_epochs};
      case ScheduleName::kA: return {name, 0.25, -1.0 / 12.0, total_epochs};
      case ScheduleName::kB: return {name, 0.5, -1.0 / 6.0, total_epochs};
      case ScheduleName::kC: return {name, 1.0, -1.0 / 3.0, total_epochs};
      case ScheduleName::kD: return {name, 2.0, -2.0 / 3.0, total_epochs};
      case ScheduleName::kCustom: break;
    }
    throw validation_error("custom schedules need explicit t_start and t_step");
  }

  static CurriculumSchedule custom(double t_start, double t_step, int total_epochs = 8) {
    return {ScheduleName::kCustom, t_start, t_step, total_epochs};
  }
};

inline ScheduleName parse_schedule_name(std::string_view s) {
  for (auto n : {ScheduleName::kO, ScheduleName::kA, ScheduleName::kB, ScheduleName::kC,
                 ScheduleName::kD}) {
    if (s == to_string(n)) return n;
  }
  throw validation_error("unknown schedule '" + std::string(s) + "' (expected O, A, B, C or D)");
}

inline double schedule_tau(const CurriculumSchedule& schedule, int epoch) {
  if (epoch < 2 || epoch > schedule.total_epochs) {
    throw validation_error("epoch " + std::to_string(epoch) + " outside curriculum range [2, " +
                           std::to_string(schedule.total_epochs) + "]");
  }
  const int j = epoch - 1;
  return schedule.t_start + schedule.t_step * static_cast<double>(j - 1);
}

// --- sampling -------------------------------------------------------------

enum class SamplingMode { kWithoutReplacement, kWithReplacement };

inline std::string_view to_string(SamplingMode m) {
  return m == SamplingMode::kWithReplacement ? "with_replacement" : "without_replacement";
}

inline SamplingMode parse_sampling_mode(std::string_view s) {
  if (s == "without_replacement") return SamplingMode::kWithoutReplacement;
  if (s == "with_replacement") return SamplingMode::kWithReplacement;
  throw validation_error("unknown sampling mode '" + std::string(s) + "'");
}

using ScoredPool = std::vector<std::pair<std::string, SimilarityScore>>;

struct EpochManifest {
  std::uint64_t seed = 0;
  std::size_t pool_size = 0;
  std::size_t drawn_size = 0;
  std::string schedule = "O";
  /// Epoch whose predictions produced the similarities; 0 when uncurated.
  int similarity_source_epoch = 0;
  SamplingMode mode = SamplingMode::kWithoutReplacement;
};

struct EpochDataset {
  int epoch = 0;
  double tau = 0;
  std::vector<std::string> ordered_sample_ids;
  EpochManifest manifest;
};

/// First-draw probability of each pool entry (weights normalized to sum 1).
inline std::vector<double> selection_probabilities(const ScoredPool& pool, double tau) {
  std::vector<double> p;
  p.reserve(pool.size());
  for (const auto& [id, sim] : pool) p.push_back(weight(sim, tau));
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= total;
  return p;
}

/// Weighted draw from `pool` with P(x) proportional to weight(sim, tau).
/// Without replacement the order is that of successive draws, realized via
/// exponential keys -ln(U)/w sorted ascending. The pool is canonicalized by id
/// first, so the result depends only on the pool contents and the seed.
inline EpochDataset build_epoch(ScoredPool pool, double tau, std::size_t drawn_size,
                                std::uint64_t seed,
                                SamplingMode mode = SamplingMode::kWithoutReplacement) {
  if (!std::isfinite(tau)) throw validation_error("tau must be finite");
  std::stable_sort(pool.begin(), pool.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < pool.size(); ++i) {
    if (pool[i].first == pool[i - 1].first) {
      throw validation_error("duplicate sample id in pool: " + pool[i].first);
    }
  }
  if (mode == SamplingMode::kWithoutReplacement && drawn_size > pool.size()) {
    throw validation_error("cannot draw " + std::to_string(drawn_size) + " of " +
                           std::to_string(pool.size()) + " samples without replacement");
  }
  if (pool.empty() && drawn_size > 0) throw validation_error("cannot draw from an empty pool");

  EpochDataset out;
  out.tau = tau;
  out.manifest.seed = seed;
  out.manifest.pool_size = pool.size();
  out.manifest.drawn_size = drawn_size;
  out.manifest.mode = mode;
  out.ordered_sample_ids.reserve(drawn_size);

  Rng rng(seed);
  if (mode == SamplingMode::kWithoutReplacement) {
    std::vector<std::pair<double, std::size_t>> keys;
    keys.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const double u = uniform_open01(rng);
      keys.emplace_back(-std::log(u) / weight(pool[i].second, tau), i);
    }
    std::sort(keys.begin(), keys.end());
    for (std::size_t k = 0; k < drawn_size; ++k) {
      out.ordered_sample_ids.push_back(pool[keys[k].second].first);
    }
    return out;
  }

  std::vector<double> cumulative;
  cumulative.reserve(pool.size());
  double total = 0;
  for (const auto& [id, sim] : pool) {
    total += weight(sim, tau);
    cumulative.push_back(total);
  }
  for (std::size_t k = 0; k < drawn_size; ++k) {
    const double target = uniform_open01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    out.ordered_sample_ids.push_back(
        pool[static_cast<std::size_t>(it - cumulative.begin())].first);
  }
  return out;
}

// --- predictions and scoring ----------------------------------------------

struct PredictionRecord {
  std::string sample_id;
  int epoch = 0;
  std::string model_tag;
  std::string output_text;

  bool operator==(const PredictionRecord&) const = default;
};

inline json encode(const PredictionRecord& p) {
  return {{"sample_id", p.sample_id},
          {"epoch", p.epoch},
          {"model_tag", p.model_tag},
          {"output_text", p.output_text}};
}

inline PredictionRecord decode_prediction(const json& j) {
  return {j.at("sample_id").get<std::string>(), j.at("epoch").get<int>(),
          j.value("model_tag", std::string()), j.at("output_text").get<std::string>()};
}

/// Latest-epoch output per sample among records with epoch <= max_epoch.
/// Throws on two records sharing (sample_id, epoch, model_tag).
inline std::unordered_map<std::string, std::string> latest_outputs(
    const std::vector<PredictionRecord>& predictions,
    std::optional<int> max_epoch = std::nullopt) {
  std::unordered_map<std::string, const PredictionRecord*> best;
  std::map<std::tuple<std::string, int, std::string>, bool> seen;
  for (const auto& p : predictions) {
    if (!seen.emplace(std::make_tuple(p.sample_id, p.epoch, p.model_tag), true).second) {
      throw validation_error("duplicate prediction for " + p.sample_id + " epoch " +
                             std::to_string(p.epoch) + " model '" + p.model_tag + "'");
    }
    if (max_epoch && p.epoch > *max_epoch) continue;
    auto [it, inserted] = best.try_emplace(p.sample_id, &p);
    if (!inserted && p.epoch > it->second->epoch) it->second = &p;
  }
  std::unordered_map<std::string, std::string> out;
  for (const auto& [id, p] : best) out.emplace(id, p->output_text);
  return out;
}

struct PoolScores {
  ScoredPool scores;  // ordered by sample id
  std::size_t missing_predictions = 0;
};

/// Similarity of each target to its prediction after normalizing both sides.
/// A target without prediction scores 0 and is counted as missing.
inline PoolScores score_pool(const std::unordered_map<std::string, std::string>& outputs,
                             const std::map<std::string, std::string>& targets,
                             SimilarityVariant variant = SimilarityVariant::kMaxLength,
                             std::size_t jobs = 0) {
  std::vector<const std::pair<const std::string, std::string>*> items;
  items.reserve(targets.size());
  for (const auto& kv : targets) items.push_back(&kv);
  std::vector<double> values(items.size(), 0.0);
  std::vector<char> missing(items.size(), 0);
  parallel_for(
      items.size(),
      [&](std::size_t i) {
        auto it = outputs.find(items[i]->first);
        if (it == outputs.end()) {
          missing[i] = 1;
          return;
        }
        values[i] = similarity(normalize_answer(it->second), normalize_answer(items[i]->second),
                               variant)
                        .value();
      },
      jobs);
  PoolScores out;
  out.scores.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.scores.emplace_back(items[i]->first, SimilarityScore(values[i]));
    out.missing_predictions += missing[i];
  }
  return out;
}

inline PoolScores score_pool(const std::vector<PredictionRecord>& predictions,
                             const std::map<std::string, std::string>& targets,
                             SimilarityVariant variant = SimilarityVariant::kMaxLength) {
  return score_pool(latest_outputs(predictions), targets, variant);
}

/// Mean similarity of each tenth of an ordering (fewer buckets if shorter).
inline std::vector<double> decile_means(const std::vector<std::string>& ordered_ids,
                                        const std::unordered_map<std::string, double>& sims) {
  std::vector<double> out;
  const std::size_t n = ordered_ids.size();
  if (n == 0) return out;
  const std::size_t buckets = std::min<std::size_t>(10, n);
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t begin = b * n / buckets;
    const std::size_t end = (b + 1) * n / buckets;
    double sum = 0;
    for (std::size_t i = begin; i < end; ++i) {
      auto it = sims.find(ordered_ids[i]);
      sum += it == sims.end() ? 0.0 : it->second;
    }
    out.push_back(sum / static_cast<double>(end - begin));
  }
  return out;
}

inline json encode(const EpochDataset& e) {
  return {{"epoch", e.epoch},
          {"tau", e.tau},
          {"seed", e.manifest.seed},
          {"pool_size", e.manifest.pool_size},
          {"drawn_size", e.manifest.drawn_size},
          {"schedule", e.manifest.schedule},
          {"similarity_source_epoch", e.manifest.similarity_source_epoch},
          {"mode", std::string(to_string(e.manifest.mode))},
          {"ordered_sample_ids", e.ordered_sample_ids}};
}

inline EpochDataset decode_epoch(const json& j) {
  EpochDataset e;
  e.epoch = j.at("epoch").get<int>();
  e.tau = j.at("tau").get<double>();
  e.manifest.seed = j.at("seed").get<std::uint64_t>();
  e.manifest.pool_size = j.at("pool_size").get<std::size_t>();
  e.manifest.drawn_size = j.at("drawn_size").get<std::size_t>();
  e.manifest.schedule = j.at("schedule").get<std::string>();
  e.manifest.similarity_source_epoch = j.at("similarity_source_epoch").get<int>();
  e.manifest.mode = parse_sampling_mode(j.at("mode").get<std::string>());
  e.ordered_sample_ids = j.at("ordered_sample_ids").get<std::vector<std::string>>();
  if (e.ordered_sample_ids.size() != e.manifest.drawn_size) {
    throw validation_error("epoch manifest drawn_size disagrees with its id list");
  }
  return e;
}

}  // namespace distill_forge::curriculum
