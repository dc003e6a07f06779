#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "distill_forge/curriculum.hpp"
#include "distill_forge/error.hpp"
#include "distill_forge/hash.hpp"
#include "distill_forge/ingest.hpp"
#include "distill_forge/io.hpp"
#include "distill_forge/metrics.hpp"
#include "distill_forge/parallel.hpp"
#include "distill_forge/prompting.hpp"
#include "distill_forge/synthetic.hpp"
#include "distill_forge/teacher.hpp"
#include "distill_forge/verbalizer.hpp"

/// Stage-file pipeline. Every stage reads its inputs from the run directory,
/// writes its outputs atomically and records a meta file under .stages/ so an
/// unchanged re-run is a no-op.
namespace distill_forge::pipeline {

namespace fs = std::filesystem;
using curriculum::PredictionRecord;
using teacher::TeacherLabel;

namespace files {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kCorpusDir = "corpus";
inline constexpr const char* kSplit = "split.json";
inline constexpr const char* kVerbalized = "verbalized.jsonl";
inline constexpr const char* kPrompts = "prompts.jsonl";
inline constexpr const char* kLabels = "labels.jsonl";
inline constexpr const char* kLabelReport = "label_report.json";
inline constexpr const char* kPredictions = "predictions.jsonl";
inline constexpr const char* kSimilarities = "similarities.jsonl";
inline constexpr const char* kEpochDir = "epochs";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kSummary = "summary.txt";
inline constexpr const char* kStageDir = ".stages";
inline constexpr const char* kCacheDir = "cache";
}  // namespace files

struct RunConfig {
  fs::path run_dir;
  std::uint64_t seed = 0;
  curriculum::ScheduleName schedule = curriculum::ScheduleName::kO;
  int total_epochs = 8;
  double eval_fraction = 0.1;
  bool stratified_split = false;
  std::size_t max_group = 10;
  curriculum::SamplingMode sampling_mode = curriculum::SamplingMode::kWithoutReplacement;
  SimilarityVariant similarity_variant = SimilarityVariant::kMaxLength;
  /// Re-score with the newest predictions before each epoch instead of
  /// reusing the epoch-1 predictions.
  bool refresh_predictions = false;
  std::string teacher_model = "gpt-3.5-turbo-1106";
  double teacher_temperature = 0.0;
  fs::path template_dir;  // empty: built-in templates
  std::size_t jobs = 0;   // not part of the config hash

  curriculum::CurriculumSchedule schedule_params() const {
    return curriculum::CurriculumSchedule::named(schedule, total_epochs);
  }
};

inline json encode(const RunConfig& c) {
  return {{"seed", c.seed},
          {"schedule", std::string(curriculum::to_string(c.schedule))},
          {"total_epochs", c.total_epochs},
          {"eval_fraction", c.eval_fraction},
          {"stratified_split", c.stratified_split},
          {"max_group", c.max_group},
          {"sampling_mode", std::string(curriculum::to_string(c.sampling_mode))},
          {"similarity_variant",
           c.similarity_variant == SimilarityVariant::kMaxLength ? "max_length" : "generalized"},
          {"refresh_predictions", c.refresh_predictions},
          {"teacher_model", c.teacher_model},
          {"teacher_temperature", c.teacher_temperature},
          {"template_dir", c.template_dir.string()}};
}

inline RunConfig decode_run_config(const json& j, const fs::path& run_dir) {
  RunConfig c;
  c.run_dir = run_dir;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.schedule = curriculum::parse_schedule_name(j.at("schedule").get<std::string>());
  c.total_epochs = j.at("total_epochs").get<int>();
  c.eval_fraction = j.at("eval_fraction").get<double>();
  c.stratified_split = j.at("stratified_split").get<bool>();
  c.max_group = j.at("max_group").get<std::size_t>();
  c.sampling_mode = curriculum::parse_sampling_mode(j.at("sampling_mode").get<std::string>());
  c.similarity_variant = j.at("similarity_variant").get<std::string>() == "generalized"
                             ? SimilarityVariant::kGeneralized
                             : SimilarityVariant::kMaxLength;
  c.refresh_predictions = j.at("refresh_predictions").get<bool>();
  c.teacher_model = j.at("teacher_model").get<std::string>();
  c.teacher_temperature = j.at("teacher_temperature").get<double>();
  c.template_dir = j.at("template_dir").get<std::string>();
  return c;
}

inline void validate(const RunConfig& c) {
  if (c.total_epochs < 1) throw validation_error("epochs must be >= 1");
  if (c.max_group < 1) throw validation_error("max_group must be >= 1");
  if (!(c.teacher_temperature >= 0)) throw validation_error("teacher temperature must be >= 0");
  ingest::eval_count_for(1, c.eval_fraction);  // range check
}

inline std::string config_hash(const RunConfig& c) { return sha256_hex(encode(c).dump()); }

// --- stage bookkeeping --------------------------------------------------------

inline std::string file_hash(const fs::path& p) { return sha256_hex(io::read_file(p)); }

/// Error for a missing stage input, naming the command that produces it.
inline Error missing_input(const fs::path& p, std::string_view command) {
  return validation_error("missing " + p.filename().string() + " in " +
                          p.parent_path().string() + "; run `distill-forge " +
                          std::string(command) + "` first");
}

inline void require_file(const fs::path& p, std::string_view command) {
  if (!fs::exists(p)) throw missing_input(p, command);
}

struct StageResult {
  bool skipped = false;
  std::string message;
};

class StageRecord {
 public:
  StageRecord(const RunConfig& config, std::string stage, std::string args = {})
      : run_dir_(config.run_dir),
        stage_(std::move(stage)),
        args_(std::move(args)),
        config_hash_(config_hash(config)) {}

  void add_input(const fs::path& p) { inputs_.push_back(p); }
  /// Input known only by content, such as the subset of a file a stage reads.
  void add_input_digest(std::string name, std::string digest) {
    digests_.emplace_back(std::move(name), std::move(digest));
  }
  void add_output(const fs::path& p) { outputs_.push_back(p); }

  std::string inputs_hash() const {
    Sha256 h;
    h.update_field(stage_).update_field(args_).update_field(config_hash_);
    for (const auto& p : inputs_) {
      h.update_field(fs::relative(p, run_dir_).generic_string());
      h.update_field(file_hash(p));
    }
    for (const auto& [name, digest] : digests_) h.update_field(name).update_field(digest);
    return h.hex_digest();
  }

  /// True when the last successful run saw the same inputs and its outputs
  /// are untouched.
  bool up_to_date() const {
    const fs::path meta = meta_path();
    if (!fs::exists(meta)) return false;
    try {
      const json j = json::parse(io::read_file(meta));
      if (j.at("inputs_hash").get<std::string>() != inputs_hash()) return false;
      for (const auto& p : outputs_) {
        const std::string rel = fs::relative(p, run_dir_).generic_string();
        if (!fs::exists(p) || j.at("outputs").at(rel).get<std::string>() != file_hash(p)) {
          return false;
        }
      }
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  void commit() const {
    json outputs = json::object();
    for (const auto& p : outputs_) {
      outputs[fs::relative(p, run_dir_).generic_string()] = file_hash(p);
    }
    io::write_file_atomic(meta_path(), json({{"stage", stage_},
                                             {"config_hash", config_hash_},
                                             {"inputs_hash", inputs_hash()},
                                             {"outputs", std::move(outputs)}})
                                           .dump(2));
  }

 private:
  fs::path meta_path() const {
    std::string name = stage_;
    if (!args_.empty()) name += "-" + args_;
    return run_dir_ / files::kStageDir / (name + ".json");
  }

  fs::path run_dir_;
  std::string stage_;
  std::string args_;
  std::string config_hash_;
  std::vector<fs::path> inputs_;
  std::vector<std::pair<std::string, std::string>> digests_;
  std::vector<fs::path> outputs_;
};

inline fs::path epoch_manifest_path(const RunConfig& c, int epoch) {
  return c.run_dir / files::kEpochDir / ("epoch_" + std::to_string(epoch) + ".manifest.json");
}

inline fs::path epoch_data_path(const RunConfig& c, int epoch) {
  return c.run_dir / files::kEpochDir / ("epoch_" + std::to_string(epoch) + ".jsonl");
}

// --- loading helpers ------------------------------------------------------------

inline RunConfig load_run_config(const fs::path& run_dir) {
  const fs::path p = run_dir / files::kConfig;
  require_file(p, "ingest");
  try {
    return decode_run_config(json::parse(io::read_file(p)).at("config"), run_dir);
  } catch (const json::exception& e) {
    throw validation_error(p.string() + ": " + e.what());
  }
}

struct Splits {
  ingest::SplitManifest base;  // train pool -> epoch-1 train + eval_base
  ingest::SplitManifest curriculum;  // epoch-1 train -> curriculum pool + eval_this
};

inline Splits load_splits(const RunConfig& c) {
  const fs::path p = c.run_dir / files::kSplit;
  require_file(p, "ingest");
  try {
    const json j = json::parse(io::read_file(p));
    return {ingest::decode_split(j.at("base")), ingest::decode_split(j.at("curriculum"))};
  } catch (const json::exception& e) {
    throw validation_error(p.string() + ": " + e.what());
  }
}

inline std::vector<TaskSample> load_samples(const RunConfig& c) {
  const fs::path p = c.run_dir / files::kCorpusDir / "samples.jsonl";
  require_file(p, "ingest");
  return io::read_jsonl<TaskSample>(p, decode_sample);
}

inline std::vector<prompting::PromptRecord> load_prompts(const RunConfig& c) {
  const fs::path p = c.run_dir / files::kPrompts;
  require_file(p, "prompt");
  return io::read_jsonl<prompting::PromptRecord>(p, prompting::decode_prompt);
}

inline std::vector<TeacherLabel> load_labels(const RunConfig& c) {
  const fs::path p = c.run_dir / files::kLabels;
  require_file(p, "label");
  return io::read_jsonl<TeacherLabel>(p, teacher::decode_label);
}

inline std::vector<PredictionRecord> load_predictions(const fs::path& p) {
  if (!fs::exists(p)) {
    throw validation_error("missing " + p.filename().string() + " at " + p.string() +
                           "; export student predictions (or run `distill-forge stub-predict`)");
  }
  return io::read_jsonl<PredictionRecord>(p, curriculum::decode_prediction);
}

// --- stages -----------------------------------------------------------------------

struct IngestOptions {
  fs::path corpus_path;
  ingest::LoadOptions load;
};

/// Loads and validates the corpus, groups WebSRC questions, carves eval_base
/// from the train pool and eval_this from the remainder, and pins the run
/// configuration.
inline StageResult cmd_ingest(const RunConfig& config, const IngestOptions& options) {
  validate(config);
  const fs::path config_path = config.run_dir / files::kConfig;
  if (fs::exists(config_path)) {
    const RunConfig existing = load_run_config(config.run_dir);
    if (config_hash(existing) != config_hash(config)) {
      throw validation_error("run directory " + config.run_dir.string() +
                             " was initialised with a different configuration");
    }
  }
  fs::create_directories(config.run_dir);
  io::write_file_atomic(config_path, json({{"config", encode(config)},
                                           {"config_hash", config_hash(config)}})
                                         .dump(2) +
                                         "\n");

  const fs::path corpus_dir = config.run_dir / files::kCorpusDir;
  const fs::path split_path = config.run_dir / files::kSplit;
  StageRecord record(config, "ingest");
  if (fs::is_directory(options.corpus_path)) {
    std::vector<fs::path> inputs;
    for (const auto& e : fs::directory_iterator(options.corpus_path)) {
      if (e.is_regular_file() && e.path().extension() == ".jsonl") inputs.push_back(e.path());
    }
    std::sort(inputs.begin(), inputs.end());
    for (const auto& p : inputs) record.add_input(p);
  }
  record.add_output(corpus_dir / "documents.jsonl");
  record.add_output(corpus_dir / "samples.jsonl");
  record.add_output(split_path);
  if (record.up_to_date()) return {true, "ingest: up to date"};

  ingest::Corpus corpus = ingest::load_corpus(options.corpus_path, options.load);
  std::vector<TaskSample> samples =
      ingest::group_dataset(corpus.samples, DatasetTag::kWebSRC, config.max_group);

  std::vector<std::string> pool;
  std::vector<std::pair<std::string, std::string>> strata;
  for (const auto& s : samples) {
    if (s.split != Split::kTrain) continue;
    pool.push_back(s.sample_id);
    strata.emplace_back(s.sample_id, std::string(to_string(*s.dataset_tag)));
  }
  if (pool.size() < 3) throw validation_error("corpus has fewer than 3 train samples");
  const auto base = config.stratified_split
                        ? ingest::make_stratified_split(strata, config.eval_fraction,
                                                        derive_seed(config.seed, 1))
                        : ingest::make_split(pool, config.eval_fraction,
                                             derive_seed(config.seed, 1));
  if (base.eval_count >= base.train_count) {
    throw validation_error("train pool too small to carve two eval splits of " +
                           std::to_string(base.eval_count));
  }
  const auto cur =
      ingest::make_split_by_count(base.train_ids, base.eval_count, derive_seed(config.seed, 2));

  ingest::write_corpus(corpus_dir, corpus.documents, samples);
  io::write_file_atomic(split_path, json({{"config_hash", config_hash(config)},
                                          {"base", ingest::encode(base)},
                                          {"curriculum", ingest::encode(cur)}})
                                        .dump(1) +
                                        "\n");
  record.commit();

  std::ostringstream msg;
  msg << "ingested " << corpus.documents.size() << " documents, " << samples.size()
      << " samples\n";
  for (const auto& [tag, counts] : ingest::count_samples(samples)) {
    msg << "  " << to_string(tag) << ": " << counts.train << " train, " << counts.test
        << " test\n";
  }
  msg << "split: " << base.train_count << " train / " << base.eval_count << " eval_base; "
      << cur.train_count << " curriculum / " << cur.eval_count << " eval_this";
  return {false, msg.str()};
}

inline StageResult cmd_verbalize(const RunConfig& config) {
  const fs::path docs_path = config.run_dir / files::kCorpusDir / "documents.jsonl";
  const fs::path out_path = config.run_dir / files::kVerbalized;
  require_file(docs_path, "ingest");
  StageRecord record(config, "verbalize");
  record.add_input(docs_path);
  record.add_output(out_path);
  if (record.up_to_date()) return {true, "verbalize: up to date"};

  const auto docs = io::read_jsonl<Document>(docs_path, decode_document);
  std::vector<verbalizer::VerbalizedDocument> out(docs.size());
  parallel_for(
      docs.size(), [&](std::size_t i) { out[i] = verbalizer::verbalize(docs[i]); }, config.jobs);
  io::write_file_atomic(out_path, io::to_jsonl(out, [](const auto& v) {
                          return verbalizer::encode(v);
                        }));
  record.commit();
  return {false, "verbalized " + std::to_string(out.size()) + " documents"};
}

inline std::vector<prompting::PromptTemplate> resolve_templates(const RunConfig& config) {
  return config.template_dir.empty() ? prompting::default_templates()
                                     : prompting::load_templates(config.template_dir);
}

inline StageResult cmd_prompt(const RunConfig& config) {
  const fs::path samples_path = config.run_dir / files::kCorpusDir / "samples.jsonl";
  const fs::path verbalized_path = config.run_dir / files::kVerbalized;
  const fs::path out_path = config.run_dir / files::kPrompts;
  require_file(samples_path, "ingest");
  require_file(verbalized_path, "verbalize");
  StageRecord record(config, "prompt");
  record.add_input(samples_path);
  record.add_input(verbalized_path);
  record.add_output(out_path);
  const auto templates = prompting::index_by_task(resolve_templates(config));
  if (!config.template_dir.empty()) {
    // template edits must invalidate the stage
    for (const auto& entry : fs::directory_iterator(config.template_dir)) {
      if (entry.path().extension() == ".json") record.add_input(entry.path());
    }
  }
  if (record.up_to_date()) return {true, "prompt: up to date"};

  const auto samples = io::read_jsonl<TaskSample>(samples_path, decode_sample);
  std::unordered_map<std::string, verbalizer::VerbalizedDocument> verbalized;
  io::for_each_jsonl(verbalized_path, [&](const json& j, std::size_t) {
    auto v = verbalizer::decode_verbalized(j);
    verbalized.emplace(v.doc_id, std::move(v));
  });
  std::vector<prompting::PromptRecord> prompts(samples.size());
  parallel_for(
      samples.size(),
      [&](std::size_t i) {
        const auto& s = samples[i];
        auto t = templates.find(s.task_kind);
        if (t == templates.end()) {
          throw validation_error("no template for task kind " + std::string(to_string(s.task_kind)));
        }
        auto v = verbalized.find(s.doc_id);
        if (v == verbalized.end()) {
          throw validation_error("document " + s.doc_id + " has not been verbalized");
        }
        prompts[i] = prompting::build_prompt(s, v->second, t->second);
      },
      config.jobs);
  io::write_file_atomic(out_path, io::to_jsonl(prompts, [](const auto& p) {
                          return prompting::encode(p);
                        }));
  record.commit();
  return {false, "built " + std::to_string(prompts.size()) + " prompts"};
}

struct LabelOptions {
  bool stub_teacher = false;
  std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
  std::shared_ptr<teacher::ChatTransport> transport;  // overrides the two above
  std::size_t max_concurrent_requests = 4;
  std::size_t max_failures = 10;
  std::vector<std::chrono::milliseconds> backoff;  // empty: client default
  int max_retries = 4;
};

/// Labels every prompt that lacks a label for the current (model, prompt,
/// temperature) fingerprint. Existing labels are kept; failures are left
/// missing so a re-run completes them.
inline StageResult cmd_label(const RunConfig& config, const LabelOptions& options) {
  const auto prompts = load_prompts(config);
  teacher::TeacherConfig tc;
  tc.endpoint_url = options.endpoint_url;
  tc.model_name = config.teacher_model;
  tc.temperature = config.teacher_temperature;
  tc.cache_dir = config.run_dir / files::kCacheDir;
  tc.max_concurrent_requests = options.max_concurrent_requests;
  tc.max_failures = options.max_failures;
  tc.max_retries = options.max_retries;
  if (!options.backoff.empty()) tc.backoff = options.backoff;
  std::shared_ptr<teacher::ChatTransport> transport = options.transport;
  if (!transport) {
    transport = options.stub_teacher
                    ? std::shared_ptr<teacher::ChatTransport>(std::make_shared<teacher::StubTransport>())
                    : std::make_shared<teacher::HttpTransport>(tc);
  }

  const fs::path labels_path = config.run_dir / files::kLabels;
  std::unordered_map<std::string, TeacherLabel> existing;
  if (fs::exists(labels_path)) {
    for (auto& l : io::read_jsonl<TeacherLabel>(labels_path, teacher::decode_label)) {
      existing.emplace(l.sample_id, std::move(l));
    }
  }
  std::vector<prompting::PromptRecord> todo;
  for (const auto& p : prompts) {
    auto it = existing.find(p.sample_id);
    if (it == existing.end() ||
        it->second.request_fingerprint !=
            teacher::request_fingerprint(tc.model_name, p.prompt_text, tc.temperature)) {
      todo.push_back(p);
    }
  }
  if (todo.empty() && existing.size() == prompts.size()) return {true, "label: up to date"};

  teacher::TeacherClient client(tc, transport);
  teacher::BatchResult batch = client.label_batch(todo);
  for (auto& l : batch.labels) existing[l.sample_id] = std::move(l);
  std::vector<TeacherLabel> ordered;
  for (const auto& p : prompts) {
    if (auto it = existing.find(p.sample_id); it != existing.end()) ordered.push_back(it->second);
  }
  io::write_file_atomic(labels_path,
                        io::to_jsonl(ordered, [](const auto& l) { return teacher::encode(l); }));
  json report = teacher::encode(batch.report);
  report["config_hash"] = config_hash(config);
  report["labelled"] = ordered.size();
  report["missing"] = batch.failed_sample_ids;
  io::write_file_atomic(config.run_dir / files::kLabelReport, report.dump(2) + "\n");

  std::ostringstream msg;
  msg << "labels: " << ordered.size() << "/" << prompts.size() << " (cache_hits "
      << batch.report.cache_hits << ", calls " << batch.report.calls << ", failures "
      << batch.report.failures << ", parse_failures " << batch.report.parse_failures << ")";
  if (!batch.failed_sample_ids.empty()) {
    throw teacher::TeacherError(msg.str() + "; re-run `distill-forge label` to retry", true);
  }
  return {false, msg.str()};
}

/// Canonical teacher targets by sample id; throws if any id lacks a label.
inline std::map<std::string, std::string> targets_for(const std::vector<TeacherLabel>& labels,
                                                      const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const TeacherLabel*> by_id;
  for (const auto& l : labels) by_id.emplace(l.sample_id, &l);
  std::map<std::string, std::string> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw validation_error("sample " + id + " has no teacher label; run `distill-forge label`");
    }
    out.emplace(id, it->second->canonical_target);
  }
  return out;
}

inline void write_examples(const fs::path& path, const std::vector<std::string>& ids,
                           const std::unordered_map<std::string, std::string>& prompt_text,
                           const std::map<std::string, std::string>& targets) {
  std::string out;
  for (const auto& id : ids) {
    out += json({{"sample_id", id}, {"prompt", prompt_text.at(id)}, {"target", targets.at(id)}})
               .dump();
    out.push_back('\n');
  }
  io::write_file_atomic(path, out);
}

struct BuildEpochOptions {
  int epoch = 1;
  fs::path predictions_path;  // empty: <run_dir>/predictions.jsonl
};

/// Epoch 1 is a uniform permutation of the full train split. Later epochs
/// draw the curriculum pool weighted by the student's similarity to the
/// teacher target under the schedule's temperature.
inline StageResult cmd_build_epoch(const RunConfig& config, const BuildEpochOptions& options) {
  const int epoch = options.epoch;
  if (epoch < 1 || epoch > config.total_epochs) {
    throw validation_error("epoch " + std::to_string(epoch) + " outside [1, " +
                           std::to_string(config.total_epochs) + "]");
  }
  const Splits splits = load_splits(config);
  const fs::path prompts_path = config.run_dir / files::kPrompts;
  const fs::path labels_path = config.run_dir / files::kLabels;
  require_file(prompts_path, "prompt");
  require_file(labels_path, "label");
  const fs::path predictions_path = options.predictions_path.empty()
                                        ? config.run_dir / files::kPredictions
                                        : options.predictions_path;

  StageRecord record(config, "build-epoch", std::to_string(epoch));
  record.add_input(config.run_dir / files::kSplit);
  record.add_input(prompts_path);
  record.add_input(labels_path);
  // Only predictions the epoch may use enter its inputs, so later predictions
  // do not invalidate epochs that are already built.
  std::vector<PredictionRecord> eligible;
  std::optional<int> used_epoch;
  const int source_epoch = config.refresh_predictions ? epoch - 1 : 1;
  if (epoch >= 2) {
    for (auto& p : load_predictions(predictions_path)) {
      if (p.epoch > source_epoch) continue;
      used_epoch = std::max(used_epoch.value_or(p.epoch), p.epoch);
      eligible.push_back(std::move(p));
    }
    if (!used_epoch) {
      throw validation_error(predictions_path.string() + " holds no predictions from epoch <= " +
                             std::to_string(source_epoch) + "; run `distill-forge stub-predict` " +
                             "or import student predictions");
    }
    Sha256 h;
    for (const auto& p : eligible) h.update_field(curriculum::encode(p).dump());
    record.add_input_digest("predictions", h.hex_digest());
  }
  record.add_output(epoch_manifest_path(config, epoch));
  record.add_output(epoch_data_path(config, epoch));
  if (record.up_to_date()) return {true, "build-epoch " + std::to_string(epoch) + ": up to date"};

  const auto labels = load_labels(config);
  std::unordered_map<std::string, std::string> prompt_text;
  for (auto& p : load_prompts(config)) prompt_text.emplace(p.sample_id, std::move(p.prompt_text));

  const auto schedule = config.schedule_params();
  curriculum::EpochDataset dataset;
  std::map<std::string, std::string> targets;
  const std::uint64_t epoch_seed = derive_seed(config.seed, 100 + static_cast<std::uint64_t>(epoch));
  if (epoch == 1) {
    targets = targets_for(labels, splits.base.train_ids);
    curriculum::ScoredPool pool;
    for (const auto& id : splits.base.train_ids) pool.emplace_back(id, curriculum::SimilarityScore(1.0));
    dataset = curriculum::build_epoch(pool, 0.0, pool.size(), epoch_seed,
                                      curriculum::SamplingMode::kWithoutReplacement);
    write_examples(config.run_dir / files::kEpochDir / "eval_base.jsonl", splits.base.eval_ids,
                   prompt_text, targets_for(labels, splits.base.eval_ids));
  } else {
    const auto outputs = curriculum::latest_outputs(eligible);
    targets = targets_for(labels, splits.curriculum.train_ids);
    const auto scores = curriculum::score_pool(outputs, targets, config.similarity_variant);
    std::string sims;
    for (const auto& [id, s] : scores.scores) {
      sims += json({{"sample_id", id}, {"similarity", s.value()}}).dump();
      sims.push_back('\n');
    }
    io::write_file_atomic(config.run_dir / files::kSimilarities, sims);
    const std::size_t drawn = scores.scores.size();
    dataset = curriculum::build_epoch(scores.scores, curriculum::schedule_tau(schedule, epoch),
                                      drawn, epoch_seed, config.sampling_mode);
    dataset.manifest.similarity_source_epoch = *used_epoch;
    write_examples(config.run_dir / files::kEpochDir / "eval_this.jsonl",
                   splits.curriculum.eval_ids, prompt_text,
                   targets_for(labels, splits.curriculum.eval_ids));
  }
  dataset.epoch = epoch;
  dataset.manifest.schedule = std::string(curriculum::to_string(schedule.name));

  json manifest = curriculum::encode(dataset);
  manifest["config_hash"] = config_hash(config);
  io::write_file_atomic(epoch_manifest_path(config, epoch), manifest.dump(1) + "\n");
  write_examples(epoch_data_path(config, epoch), dataset.ordered_sample_ids, prompt_text, targets);
  record.commit();

  std::ostringstream msg;
  msg << "epoch " << epoch << ": " << dataset.ordered_sample_ids.size() << " samples, tau "
      << dataset.tau;
  return {false, msg.str()};
}

struct StubPredictOptions {
  int epoch = 1;
  std::string model_tag = "stub-student";
};

/// Deterministic stand-in for the student: reproduces each train target (or
/// the test gold) with a character error rate that shrinks as epochs advance.
inline StageResult cmd_stub_predict(const RunConfig& config, const StubPredictOptions& options) {
  const Splits splits = load_splits(config);
  const auto samples = load_samples(config);
  const auto labels = load_labels(config);
  std::unordered_map<std::string, std::string> target;
  for (const auto& l : labels) target.emplace(l.sample_id, l.canonical_target);

  const fs::path out_path = config.run_dir / files::kPredictions;
  std::vector<PredictionRecord> records;
  if (fs::exists(out_path)) {
    for (auto& p : load_predictions(out_path)) {
      if (p.epoch != options.epoch || p.model_tag != options.model_tag) records.push_back(std::move(p));
    }
  }
  const std::set<std::string> train_ids(splits.base.train_ids.begin(), splits.base.train_ids.end());
  const double rate = 0.4 / static_cast<double>(options.epoch);
  for (const auto& s : samples) {
    std::string base;
    if (s.split == Split::kTest) {
      nlohmann::ordered_json obj = nlohmann::ordered_json::object();
      if (s.task_kind == TaskKind::kKIE) {
        for (const auto& [k, v] : s.kie_gold) obj[k] = v;
      } else {
        for (std::size_t i = 0; i < s.questions.size(); ++i) {
          obj[std::to_string(i + 1)] = s.answers[i].empty() ? std::string() : s.answers[i][0];
        }
      }
      base = obj.dump();
    } else if (train_ids.count(s.sample_id) != 0) {
      auto it = target.find(s.sample_id);
      if (it == target.end()) continue;
      base = it->second;
    } else {
      continue;
    }
    const std::string key = std::to_string(config.seed) + "/" + s.sample_id + "/" +
                            std::to_string(options.epoch);
    // a quarter of the samples are reproduced exactly
    const bool exact = std::stoul(sha256_hex(key + "/exact").substr(0, 8), nullptr, 16) % 4 == 0;
    records.push_back({s.sample_id, options.epoch, options.model_tag,
                       exact ? base : synthetic::corrupt(base, rate, key)});
  }
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.epoch, a.model_tag, a.sample_id) < std::tie(b.epoch, b.model_tag, b.sample_id);
  });
  io::write_file_atomic(out_path, io::to_jsonl(records, [](const auto& p) {
                          return curriculum::encode(p);
                        }));
  return {false, "wrote stub predictions for epoch " + std::to_string(options.epoch)};
}

struct EvaluateOptions {
  fs::path predictions_path;  // empty: <run_dir>/predictions.jsonl
  std::optional<int> epoch;   // newest epoch <= this; default newest overall
  metrics::EvalOptions eval;
};

inline StageResult cmd_evaluate(const RunConfig& config, const EvaluateOptions& options) {
  const fs::path predictions_path = options.predictions_path.empty()
                                        ? config.run_dir / files::kPredictions
                                        : options.predictions_path;
  const auto predictions = load_predictions(predictions_path);
  const auto samples = load_samples(config);
  const auto outputs = curriculum::latest_outputs(predictions, options.epoch);
  const metrics::EvalReport report = metrics::evaluate(outputs, samples, options.eval);
  json j = metrics::encode(report);
  j["config_hash"] = config_hash(config);
  j["anls_threshold"] = options.eval.anls_threshold;
  io::write_file_atomic(config.run_dir / files::kReport, j.dump(2) + "\n");
  std::ostringstream msg;
  for (const auto& [tag, s] : report.per_dataset) {
    msg << tag << " " << s.metric_name << " " << s.value << " (n=" << s.n_samples << ")\n";
  }
  msg << "average " << report.average;
  return {false, msg.str()};
}

/// Per-dataset metrics plus, for every built epoch, tau and the mean
/// similarity of each decile of its ordering. Refuses stage outputs produced
/// under different configurations.
inline StageResult cmd_report(const RunConfig& config) {
  const std::string hash = config_hash(config);
  std::vector<std::pair<std::string, std::string>> hashes;
  auto check = [&](const fs::path& p) {
    const json j = json::parse(io::read_file(p));
    hashes.emplace_back(p.filename().string(), j.value("config_hash", std::string("<none>")));
  };
  const fs::path report_path = config.run_dir / files::kReport;
  require_file(report_path, "evaluate");
  check(report_path);
  check(config.run_dir / files::kSplit);
  const fs::path stage_dir = config.run_dir / files::kStageDir;
  if (fs::exists(stage_dir)) {
    std::vector<fs::path> metas;
    for (const auto& e : fs::directory_iterator(stage_dir)) metas.push_back(e.path());
    std::sort(metas.begin(), metas.end());
    for (const auto& m : metas) check(m);
  }
  std::vector<curriculum::EpochDataset> epochs;
  for (int e = 1; e <= config.total_epochs; ++e) {
    const fs::path p = epoch_manifest_path(config, e);
    if (!fs::exists(p)) continue;
    check(p);
    epochs.push_back(curriculum::decode_epoch(json::parse(io::read_file(p))));
  }
  for (const auto& [name, h] : hashes) {
    if (h != hash) {
      throw validation_error("mixed configurations: " + name + " has config hash " + h +
                             ", run config is " + hash);
    }
  }

  const auto report = metrics::decode_report(json::parse(io::read_file(report_path)));
  std::unordered_map<std::string, double> sims;
  const fs::path sims_path = config.run_dir / files::kSimilarities;
  if (fs::exists(sims_path)) {
    io::for_each_jsonl(sims_path, [&](const json& j, std::size_t) {
      sims[j.at("sample_id").get<std::string>()] = j.at("similarity").get<double>();
    });
  }

  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "config " << hash.substr(0, 12) << "  schedule "
      << curriculum::to_string(config.schedule) << "  seed " << config.seed << "\n\n";
  out << "dataset               metric              value     n\n";
  for (const auto& [tag, s] : report.per_dataset) {
    out << tag << std::string(22 - std::min<std::size_t>(21, tag.size()), ' ') << s.metric_name
        << std::string(20 - std::min<std::size_t>(19, s.metric_name.size()), ' ') << s.value
        << "  " << s.n_samples << "\n";
  }
  out << "average" << std::string(35, ' ') << report.average << "\n";
  if (!epochs.empty()) {
    out << "\nepoch  tau       drawn  mean similarity per decile (first -> last)\n";
    for (const auto& e : epochs) {
      out << e.epoch << "      " << (e.tau < 0 ? "" : " ") << e.tau << "  "
          << e.ordered_sample_ids.size() << "   ";
      if (e.epoch == 1 || sims.empty()) {
        out << "(uncurated)";
      } else {
        for (double m : curriculum::decile_means(e.ordered_sample_ids, sims)) out << " " << m;
      }
      out << "\n";
    }
  }
  io::write_file_atomic(config.run_dir / files::kSummary, out.str());
  return {false, out.str()};
}

/// Writes a synthetic native-format corpus.
inline void write_synthetic_corpus(const fs::path& dir, std::size_t n_docs, std::uint64_t seed) {
  const auto corpus = synthetic::generate_corpus(n_docs, seed);
  ingest::write_corpus(dir, corpus.documents, corpus.samples);
}

}  // namespace distill_forge::pipeline
