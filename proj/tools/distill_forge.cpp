// distill-forge: command-line driver for the distillation data pipeline.

#include <chrono>
#include <cstdint>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "distill_forge/error.hpp"
#include "distill_forge/pipeline.hpp"

namespace df = distill_forge;
namespace pl = distill_forge::pipeline;

namespace {

struct IngestFlags {
  std::string corpus;
  std::string format = "native-jsonl";
  std::string due_dataset = "DocVQA";
  std::string due_tool;
  std::uint64_t seed = 0;
  std::string schedule = "O";
  int epochs = 8;
  double eval_fraction = 0.1;
  bool stratified = false;
  std::size_t max_group = 10;
  std::string sampling = "without_replacement";
  std::string similarity = "max_length";
  bool refresh = false;
  std::string model = "gpt-3.5-turbo-1106";
  double temperature = 0.0;
  std::string template_dir;
};

pl::RunConfig config_from(const IngestFlags& f, const std::string& run_dir, std::size_t jobs) {
  pl::RunConfig c;
  c.run_dir = run_dir;
  c.seed = f.seed;
  c.schedule = df::curriculum::parse_schedule_name(f.schedule);
  c.total_epochs = f.epochs;
  c.eval_fraction = f.eval_fraction;
  c.stratified_split = f.stratified;
  c.max_group = f.max_group;
  c.sampling_mode = df::curriculum::parse_sampling_mode(f.sampling);
  if (f.similarity == "generalized") {
    c.similarity_variant = df::SimilarityVariant::kGeneralized;
  } else if (f.similarity != "max_length") {
    throw df::validation_error("--similarity must be max_length or generalized");
  }
  c.refresh_predictions = f.refresh;
  c.teacher_model = f.model;
  c.teacher_temperature = f.temperature;
  if (!f.template_dir.empty()) c.template_dir = std::filesystem::absolute(f.template_dir);
  c.jobs = jobs;
  return c;
}

void print(const pl::StageResult& r) { std::cout << r.message << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distill-forge: document-understanding distillation data pipeline"};
  app.require_subcommand(1);
  std::string run_dir;
  std::size_t jobs = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--run-dir", run_dir, "Run directory holding all stage files")->required();
    sub->add_option("--jobs", jobs, "Worker thread cap (0: all cores)");
  };

  // synth
  std::string synth_out;
  std::size_t synth_docs = 50;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic native-format corpus");
  synth->add_option("--out", synth_out, "Output corpus directory")->required();
  synth->add_option("--docs", synth_docs, "Number of documents");
  synth->add_option("--seed", synth_seed, "Generator seed");

  // ingest
  IngestFlags ingest_flags;
  auto* ingest = app.add_subcommand("ingest", "Load a corpus, group questions, build splits");
  add_common(ingest);
  ingest->add_option("--corpus", ingest_flags.corpus, "Corpus directory")->required();
  ingest->add_option("--format", ingest_flags.format, "native-jsonl | due-style");
  ingest->add_option("--due-dataset", ingest_flags.due_dataset, "Dataset tag for due-style input");
  ingest->add_option("--due-tool", ingest_flags.due_tool, "OCR engine layer for due-style input");
  ingest->add_option("--seed", ingest_flags.seed, "Run seed");
  ingest->add_option("--schedule", ingest_flags.schedule, "Temperature schedule")
      ->check(CLI::IsMember({"O", "A", "B", "C", "D"}));
  ingest->add_option("--epochs", ingest_flags.epochs, "Total training epochs");
  ingest->add_option("--eval-fraction", ingest_flags.eval_fraction, "Share of the train pool held out");
  ingest->add_flag("--stratified", ingest_flags.stratified, "Stratify eval split by dataset");
  ingest->add_option("--max-group", ingest_flags.max_group, "Questions per grouped prompt");
  ingest->add_option("--sampling", ingest_flags.sampling, "without_replacement | with_replacement");
  ingest->add_option("--similarity", ingest_flags.similarity, "max_length | generalized");
  ingest->add_flag("--refresh-predictions", ingest_flags.refresh,
                   "Score each epoch with the newest predictions");
  ingest->add_option("--model", ingest_flags.model, "Teacher model name");
  ingest->add_option("--temperature", ingest_flags.temperature, "Teacher sampling temperature");
  ingest->add_option("--template-dir", ingest_flags.template_dir, "Prompt template directory");

  auto* verbalize = app.add_subcommand("verbalize", "Render documents as layout-preserving text");
  add_common(verbalize);
  auto* prompt = app.add_subcommand("prompt", "Build teacher prompts");
  add_common(prompt);

  // label
  pl::LabelOptions label_opts;
  std::string label_model;
  auto* label = app.add_subcommand("label", "Query the teacher for every prompt");
  add_common(label);
  label->add_option("--endpoint", label_opts.endpoint_url, "Chat-completions endpoint URL");
  label->add_option("--model", label_model, "Teacher model (must match the run config)");
  label->add_flag("--stub-teacher", label_opts.stub_teacher, "Use the built-in offline teacher");
  label->add_option("--max-concurrent", label_opts.max_concurrent_requests, "Requests in flight");
  label->add_option("--max-retries", label_opts.max_retries, "Retries per request");
  label->add_option("--max-failures", label_opts.max_failures, "Abort after this many failures");

  // build-epoch
  pl::BuildEpochOptions epoch_opts;
  std::string epoch_predictions;
  auto* build_epoch = app.add_subcommand("build-epoch", "Sample the dataset for one epoch");
  add_common(build_epoch);
  build_epoch->add_option("--epoch", epoch_opts.epoch, "Epoch number (1-based)")->required();
  build_epoch->add_option("--predictions", epoch_predictions, "Student predictions file");

  pl::StubPredictOptions stub_opts;
  auto* stub_predict =
      app.add_subcommand("stub-predict", "Write deterministic stand-in student predictions");
  add_common(stub_predict);
  stub_predict->add_option("--epoch", stub_opts.epoch, "Epoch the predictions belong to")->required();

  // evaluate
  pl::EvaluateOptions eval_opts;
  std::string eval_predictions;
  int eval_epoch = -1;
  std::vector<std::string> overrides;
  auto* evaluate = app.add_subcommand("evaluate", "Score test predictions");
  add_common(evaluate);
  evaluate->add_option("--predictions", eval_predictions, "Student predictions file");
  evaluate->add_option("--epoch", eval_epoch, "Use predictions up to this epoch");
  evaluate->add_option("--anls-threshold", eval_opts.eval.anls_threshold, "ANLS cutoff");
  evaluate->add_option("--metric-override", overrides, "DATASET=METRIC (ANLS, Accuracy, TypeAwareAccuracy)");

  auto* report = app.add_subcommand("report", "Print metrics and curriculum statistics");
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      pl::write_synthetic_corpus(synth_out, synth_docs, synth_seed);
      std::cout << "wrote " << synth_docs << " synthetic documents to " << synth_out << "\n";
      return 0;
    }
    if (ingest->parsed()) {
      pl::IngestOptions opts;
      opts.corpus_path = ingest_flags.corpus;
      opts.load.format = df::ingest::parse_corpus_format(ingest_flags.format);
      opts.load.due_dataset = df::parse_dataset_tag(ingest_flags.due_dataset);
      opts.load.due_tool_name = ingest_flags.due_tool;
      print(pl::cmd_ingest(config_from(ingest_flags, run_dir, jobs), opts));
      return 0;
    }

    pl::RunConfig config = pl::load_run_config(run_dir);
    config.jobs = jobs;
    if (verbalize->parsed()) {
      print(pl::cmd_verbalize(config));
    } else if (prompt->parsed()) {
      print(pl::cmd_prompt(config));
    } else if (label->parsed()) {
      if (!label_model.empty() && label_model != config.teacher_model) {
        throw df::validation_error("--model " + label_model + " differs from the run config (" +
                                   config.teacher_model + "); re-run ingest in a new run directory");
      }
      print(pl::cmd_label(config, label_opts));
    } else if (build_epoch->parsed()) {
      epoch_opts.predictions_path = epoch_predictions;
      print(pl::cmd_build_epoch(config, epoch_opts));
    } else if (stub_predict->parsed()) {
      print(pl::cmd_stub_predict(config, stub_opts));
    } else if (evaluate->parsed()) {
      eval_opts.predictions_path = eval_predictions;
      if (eval_epoch >= 0) eval_opts.epoch = eval_epoch;
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw df::validation_error("--metric-override expects DATASET=METRIC");
        eval_opts.eval.metric_override[df::parse_dataset_tag(o.substr(0, eq))] =
            df::metrics::parse_metric_kind(o.substr(eq + 1));
      }
      print(pl::cmd_evaluate(config, eval_opts));
    } else if (report->parsed()) {
      print(pl::cmd_report(config));
    }
    return 0;
  } catch (const df::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
