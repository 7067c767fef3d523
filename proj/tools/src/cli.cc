#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "triggerlab/cli/commands.h"

namespace triggerlab::cli {

namespace {

Label label_option(const std::string& name, const char* flag) {
  auto l = parse_label(name);
  if (!l) throw ConfigError(std::string(flag) + ": unknown class '" + name + "'");
  return *l;
}

void report_error(std::ostream& err, const char* kind, const std::string& message) {
  err << nlohmann::json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Universal adversarial trigger search and inoculation for NLI classifiers",
               "triggerlab"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Global seed (overrides the config)");
  app.add_option("--out-dir", out_dir, "Run directory (overrides the config)");

  auto* synth = app.add_subcommand("synth", "Generate a planted-artifact corpus");
  auto* train = app.add_subcommand("train", "Train the classifier");
  std::string train_corpus;
  std::optional<int> epochs;
  train->add_option("--train", train_corpus, "Training JSON-lines file");
  train->add_option("--epochs", epochs, "Training epochs");

  auto* attack = app.add_subcommand("attack", "Search a universal trigger for one class");
  std::string attack_class, attack_mode, attack_target;
  std::size_t attack_count = 0;
  attack->add_option("--class", attack_class, "Attacked class (not needed for --mode random)");
  attack->add_option("--mode", attack_mode, "targeted | untargeted | best | random");
  attack->add_option("--target", attack_target, "Target class for targeted mode");
  attack->add_option("--count", attack_count, "Number of random triggers");

  auto* analyze = app.add_subcommand("analyze", "Word/label correlation report");
  std::optional<std::size_t> k;
  std::optional<std::uint64_t> min_count;
  std::string side, analyze_corpus;
  analyze->add_option("--k", k, "Words per class");
  analyze->add_option("--side", side, "hypothesis | premise | both");
  analyze->add_option("--min-count", min_count, "Minimum word count");
  analyze->add_option("--corpus", analyze_corpus, "JSON-lines file (default: training corpus)");

  auto* build_sets = app.add_subcommand("build-sets", "Build challenge and augmented datasets");

  auto* inoculate = app.add_subcommand("inoculate", "Fine-tune on the trigger-augmented set");
  std::string inoc_dataset, inoc_checkpoint;
  inoculate->add_option("--dataset", inoc_dataset, "Fine-tuning JSON-lines file");
  inoculate->add_option("--checkpoint", inoc_checkpoint, "Checkpoint to fine-tune");

  auto* evaluate = app.add_subcommand("evaluate", "Per-class accuracy on a dataset");
  EvalRequest eval_req;
  evaluate->add_option("--dataset", eval_req.dataset, "JSON-lines file")->required();
  evaluate->add_option("--name", eval_req.name, "Report name")->required();
  evaluate->add_option("--triggers", eval_req.triggers, "Trigger description for the report");
  evaluate->add_option("--checkpoint", eval_req.checkpoint, "Checkpoint to evaluate");

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage and write a manifest");
  auto* report = app.add_subcommand("report", "Render the run directory's evaluation tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    cfg.apply_seed();
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    if (synth->parsed()) {
      cmd_synth(cfg, out);
    } else if (train->parsed()) {
      if (!train_corpus.empty()) cfg.paths.train = train_corpus;
      if (epochs) {
        cfg.train.epochs = *epochs;
        cfg.train.validate();
      }
      cmd_train(cfg, out);
    } else if (attack->parsed()) {
      AttackRequest req;
      req.mode = attack_mode;
      req.count = attack_count;
      if (attack_mode != "random") {
        if (attack_class.empty()) throw ConfigError("attack: --class is required");
        req.attacked_class = label_option(attack_class, "--class");
      }
      if (!attack_target.empty()) req.target = label_option(attack_target, "--target");
      cmd_attack(cfg, req, out);
    } else if (analyze->parsed()) {
      if (k) cfg.analysis.k = *k;
      if (min_count) cfg.analysis.min_count = *min_count;
      if (!side.empty()) cfg.analysis.side = parse_side(side);
      if (!analyze_corpus.empty()) cfg.paths.train = analyze_corpus;
      cmd_analyze(cfg, out);
    } else if (build_sets->parsed()) {
      cmd_build_sets(cfg, out);
    } else if (inoculate->parsed()) {
      if (!inoc_dataset.empty()) cfg.paths.dataset = inoc_dataset;
      if (!inoc_checkpoint.empty()) cfg.paths.checkpoint = inoc_checkpoint;
      cmd_inoculate(cfg, out);
    } else if (evaluate->parsed()) {
      cmd_evaluate(cfg, eval_req, out);
    } else if (pipeline->parsed()) {
      cmd_pipeline(cfg, out);
    } else if (report->parsed()) {
      cmd_report(cfg, out);
    }
  } catch (const ConfigError& e) {
    report_error(err, "config", e.what());
    return kExitUsage;
  } catch (const StageError& e) {
    report_error(err, "stage", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    report_error(err, "runtime", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace triggerlab::cli
