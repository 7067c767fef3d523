#include "triggerlab/cli/commands.h"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <functional>
#include <fstream>
#include <iostream>
#include <sstream>

#include "triggerlab/analysis.h"
#include "triggerlab/cli/manifest.h"
#include "triggerlab/synthetic.h"

namespace triggerlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kValidationSeedOffset = 1000;
constexpr std::uint64_t kRandomTriggerSeedOffset = 2;

json provenance(const RunConfig& cfg, std::string_view command) {
  return {{"command", command}, {"seed", cfg.seed}, {"config", cfg.snapshot()}};
}

void write_json(const fs::path& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_examples(const fs::path& path, std::span<const Example> examples) {
  std::ostringstream os;
  write_snli_jsonl(os, examples);
  write_file_atomic(path, os.str());
}

void write_challenge(const fs::path& path, std::span<const ChallengeExample> set) {
  std::ostringstream os;
  write_challenge_jsonl(os, set);
  write_file_atomic(path, os.str());
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec || !fs::is_directory(cfg.out_dir)) {
    throw ConfigError("cannot create output directory " + cfg.out_dir.string());
  }
}

// Explicit paths win; a synthetic config falls back to the files cmd_synth
// writes into the run directory.
std::string corpus_path(const RunConfig& cfg, const std::string& configured,
                        const char* synth_file, const char* what) {
  if (!configured.empty()) return configured;
  if (cfg.synthetic) return (cfg.out_dir / synth_file).string();
  throw ConfigError(std::string(what) + " path not configured");
}

std::string train_path(const RunConfig& cfg) {
  return corpus_path(cfg, cfg.paths.train, "train.jsonl", "training corpus");
}

std::string validation_path(const RunConfig& cfg) {
  return corpus_path(cfg, cfg.paths.validation, "validation.jsonl", "validation corpus");
}

std::vector<Example> load_corpus(const std::string& path, std::string_view split,
                                 const char* what) {
  require_file(path, what);
  LoadResult r = load_snli_jsonl(path, split);
  if (r.examples.empty()) throw Error(std::string(what) + " has no labelled examples: " + path);
  return std::move(r.examples);
}

struct LoadedModel {
  Vocabulary vocab;
  Checkpoint checkpoint;
  std::string checkpoint_sha256;
};

Vocabulary load_vocab(const RunConfig& cfg) {
  require_file(cfg.vocab_path().string(), "vocabulary");
  return Vocabulary::from_json(read_json(cfg.vocab_path()));
}

LoadedModel load_model(const RunConfig& cfg, const fs::path& checkpoint) {
  require_file(checkpoint.string(), "checkpoint");
  Vocabulary vocab = load_vocab(cfg);
  Checkpoint ckpt = load_checkpoint(checkpoint, vocab.hash());
  if (ckpt.params.vocab_size() != vocab.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(ckpt.params.vocab_size()) +
                          " embedding rows, vocabulary has " + std::to_string(vocab.size()));
  }
  return {std::move(vocab), std::move(ckpt), sha256_file(checkpoint)};
}

json history_json(const TrainHistory& history) {
  json epochs = json::array();
  for (std::size_t i = 0; i < history.size(); ++i) {
    epochs.push_back({{"epoch", i + 1},
                      {"mean_loss", history[i].mean_loss},
                      {"accuracy", history[i].accuracy}});
  }
  return epochs;
}

void print_history(std::ostream& out, const TrainHistory& history) {
  char line[96];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(line, sizeof line, "epoch %zu  loss %.6f  accuracy %.4f\n", i + 1,
                  history[i].mean_loss, history[i].accuracy);
    out << line;
  }
}

std::string trigger_file(Label l) {
  return "trigger_" + std::string(label_name(l)) + ".json";
}

void check_name(const std::string& name) {
  if (name.empty() || !std::all_of(name.begin(), name.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
      })) {
    throw ConfigError("evaluation name must be non-empty [A-Za-z0-9_-]: '" + name + "'");
  }
}

std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
  return buf;
}

}  // namespace

Artifacts cmd_synth(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.synthetic) throw ConfigError("synth: config has no 'synthetic' section");
  SyntheticSpec train_spec = *cfg.synthetic;
  SyntheticSpec val_spec = train_spec;
  val_spec.examples_per_class = cfg.synthetic_validation_per_class;
  val_spec.seed = train_spec.seed + kValidationSeedOffset;
  PlantedCorpus train_corpus = generate_planted_corpus(train_spec);
  PlantedCorpus val_corpus = generate_planted_corpus(val_spec);

  ensure_out_dir(cfg);
  write_examples(cfg.out_dir / "train.jsonl", train_corpus.examples);
  write_examples(cfg.out_dir / "validation.jsonl", val_corpus.examples);
  write_json(cfg.out_dir / "ground_truth.json",
             {{"provenance", provenance(cfg, "synth")},
              {"train", ground_truth_to_json(train_spec, train_corpus.ground_truth)},
              {"validation", ground_truth_to_json(val_spec, val_corpus.ground_truth)}});
  out << "synth: " << train_corpus.examples.size() << " train, "
      << val_corpus.examples.size() << " validation examples\n";
  return {"train.jsonl", "validation.jsonl", "ground_truth.json"};
}

Artifacts cmd_train(const RunConfig& cfg, std::ostream& out) {
  const std::string path = train_path(cfg);
  std::vector<Example> data = load_corpus(path, "train", "training corpus");
  std::optional<fs::path> glove;
  if (!cfg.paths.glove.empty()) {
    require_file(cfg.paths.glove, "embedding file");
    glove = cfg.paths.glove;
  }
  Vocabulary vocab = Vocabulary::build(data, cfg.model.min_count);
  ClassifierParams params = init_params(vocab, cfg.model.embed_dim, cfg.model.hidden_dim,
                                        cfg.model.use_premise, cfg.train.seed, glove);
  std::vector<TokenizedExample> encoded = encode_all(data, vocab, cfg.train.max_seq_len);
  out << "train: " << data.size() << " examples, vocabulary " << vocab.size() << "\n";
  TrainHistory history = train(params, encoded, cfg.train);
  print_history(out, history);

  ensure_out_dir(cfg);
  json prov = provenance(cfg, "train");
  prov["train_sha256"] = sha256_file(path);
  json vocab_json = vocab.to_json();
  vocab_json["provenance"] = prov;
  write_json(cfg.out_dir / "vocab.json", vocab_json);
  save_checkpoint({params, vocab.hash(), prov}, cfg.out_dir / "checkpoint.json");
  write_json(cfg.out_dir / "train_history.json",
             {{"provenance", prov},
              {"checkpoint_sha256", sha256_file(cfg.out_dir / "checkpoint.json")},
              {"epochs", history_json(history)}});
  return {"vocab.json", "checkpoint.json", "train_history.json"};
}

Artifacts cmd_attack(const RunConfig& cfg, const AttackRequest& req, std::ostream& out) {
  if (req.mode == "random") {
    LoadedModel m = load_model(cfg, cfg.checkpoint_path());
    const std::size_t count = req.count ? req.count : cfg.pipeline.num_random_triggers;
    const std::uint64_t seed = cfg.seed + kRandomTriggerSeedOffset;
    std::vector<Trigger> triggers = random_triggers(m.vocab, count, seed);
    json list = json::array();
    for (const auto& t : triggers) {
      list.push_back({{"tokens", t.tokens}, {"token_ids", t.token_ids}});
      out << "random trigger: " << join_tokens(t.tokens) << "\n";
    }
    ensure_out_dir(cfg);
    write_json(cfg.out_dir / "random_triggers.json",
               {{"provenance", provenance(cfg, "attack")},
                {"sample_seed", seed},
                {"vocab_hash", m.vocab.hash()},
                {"model_checkpoint_hash", m.checkpoint_sha256},
                {"triggers", list}});
    return {"random_triggers.json"};
  }

  AttackMode mode = cfg.attack_mode;
  if (req.mode == "best") {
    mode = AttackMode::kTargetedBest;
  } else if (!req.mode.empty()) {
    mode = parse_attack_mode(req.mode);
  }
  TriggerSearchConfig base = cfg.attack;
  base.attacked_class = req.attacked_class;
  if (req.target) base.target_label = req.target;
  if (mode == AttackMode::kTargeted && !base.target_label) {
    throw ConfigError("attack: targeted mode needs a target label");
  }
  if (mode != AttackMode::kTargeted) base.target_label.reset();

  LoadedModel m = load_model(cfg, cfg.checkpoint_path());
  base.validate(m.vocab);
  std::vector<Example> data = load_corpus(train_path(cfg), "train", "training corpus");
  std::vector<TokenizedExample> encoded = encode_all(data, m.vocab, base.max_seq_len);
  ClassTriggerResult r = find_class_trigger(m.checkpoint.params, m.vocab, encoded, base, mode);

  json j = trigger_to_json(r.trigger, m.vocab.hash(), m.checkpoint_sha256);
  j["attacked_class"] = label_name(req.attacked_class);
  j["mode"] = attack_mode_name(mode);
  j["clean_accuracy"] = r.clean_accuracy;
  j["attacked_accuracy"] = r.attacked_accuracy;
  json candidates = json::array();
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    const Trigger& c = r.candidates[i];
    candidates.push_back(
        {{"target_label",
          c.config.target_label ? json(label_name(*c.config.target_label)) : json(nullptr)},
         {"tokens", c.tokens},
         {"final_loss", c.final_loss},
         {"attacked_accuracy", r.candidate_accuracies[i]}});
  }
  j["candidates"] = candidates;
  j["provenance"] = provenance(cfg, "attack");

  ensure_out_dir(cfg);
  const std::string file = trigger_file(req.attacked_class);
  write_json(cfg.out_dir / file, j);
  out << "attack " << label_name(req.attacked_class) << ": trigger '"
      << join_tokens(r.trigger.tokens) << "'  accuracy " << percent(r.clean_accuracy)
      << " -> " << percent(r.attacked_accuracy) << "\n";
  return {file};
}

Artifacts cmd_analyze(const RunConfig& cfg, std::ostream& out) {
  const std::string path = train_path(cfg);
  std::vector<Example> data = load_corpus(path, "train", "corpus");
  CorrelationTable table = build_correlation_table(data, cfg.analysis.side, cfg.analysis.min_count);
  json j = correlation_report_json(table, cfg.analysis.k, cfg.analysis.rank_min_count);
  j["side"] = side_name(cfg.analysis.side);
  j["corpus_sha256"] = sha256_file(path);
  j["provenance"] = provenance(cfg, "analyze");
  ensure_out_dir(cfg);
  write_json(cfg.out_dir / "correlation_report.json", j);
  out << render_correlation_report(table, cfg.analysis.k, cfg.analysis.rank_min_count);
  return {"correlation_report.json"};
}

Artifacts cmd_build_sets(const RunConfig& cfg, std::ostream& out) {
  Vocabulary vocab = load_vocab(cfg);
  PerClassTriggers universal;
  std::vector<TriggerTokens> universal_list;
  for (Label l : kAllLabels) {
    const fs::path p = cfg.out_dir / trigger_file(l);
    require_file(p.string(), "trigger for class " + std::string(label_name(l)));
    Trigger t = trigger_from_json(read_json(p), vocab);
    universal[label_index(l)].push_back(t.tokens);
    universal_list.push_back(t.tokens);
  }
  const fs::path random_path = cfg.out_dir / "random_triggers.json";
  require_file(random_path.string(), "random trigger list");
  std::vector<TriggerTokens> random;
  const json random_json = read_json(random_path);
  for (const auto& t : random_json.at("triggers")) {
    random.push_back(trigger_from_json(t, vocab).tokens);
  }
  if (random.empty()) throw Error("random trigger list is empty");

  std::vector<Example> train_data = load_corpus(train_path(cfg), "train", "training corpus");
  std::vector<Example> val_data =
      load_corpus(validation_path(cfg), "validation", "validation corpus");

  const std::size_t n = cfg.pipeline.n_per_class;
  const std::size_t n_subset = cfg.pipeline.validation_subset_per_class
                                   ? cfg.pipeline.validation_subset_per_class
                                   : n;
  std::vector<Example> subset = sample_per_class(val_data, n_subset, cfg.seed);
  auto set_universal = build_challenge_set(val_data, universal, n, cfg.seed);
  auto set_random = build_random_challenge_set(val_data, random, n, cfg.seed);
  auto augmented = build_trigger_augmented(train_data, universal_list, cfg.pipeline.n_total,
                                           cfg.seed);
  PerClassTriggers random_assigned = assign_random_triggers(random, cfg.seed);

  ensure_out_dir(cfg);
  write_examples(cfg.out_dir / "validation_subset.jsonl", subset);
  write_challenge(cfg.out_dir / "challenge_universal.jsonl", set_universal);
  write_challenge(cfg.out_dir / "challenge_random.jsonl", set_random);
  write_challenge(cfg.out_dir / "trigger_augmented.jsonl", augmented);

  auto per_class_json = [](const PerClassTriggers& t) {
    json j = json::object();
    for (Label l : kAllLabels) {
      json list = json::array();
      for (const auto& tokens : t[label_index(l)]) list.push_back(join_tokens(tokens));
      j[std::string(label_name(l))] = list;
    }
    return j;
  };
  auto entry = [&](const std::string& file, std::size_t size, json extra) {
    extra["path"] = file;
    extra["size"] = size;
    extra["sha256"] = sha256_file(cfg.out_dir / file);
    return extra;
  };
  json universal_flat = json::array();
  for (const auto& t : universal_list) universal_flat.push_back(join_tokens(t));
  json datasets = {
      {"validation_subset",
       entry("validation_subset.jsonl", subset.size(), {{"n_per_class", n_subset}})},
      {"challenge_universal",
       entry("challenge_universal.jsonl", set_universal.size(),
             {{"n_per_class", n}, {"triggers", per_class_json(universal)}})},
      {"challenge_random",
       entry("challenge_random.jsonl", set_random.size(),
             {{"n_per_class", n}, {"triggers", per_class_json(random_assigned)}})},
      {"trigger_augmented",
       entry("trigger_augmented.jsonl", augmented.size(),
             {{"n_total", cfg.pipeline.n_total}, {"triggers", universal_flat}})}};
  write_json(cfg.out_dir / "datasets.json",
             {{"provenance", provenance(cfg, "build-sets")},
              {"sample_seed", cfg.seed},
              {"subset_shares_challenge_sample", n_subset == n},
              {"datasets", datasets}});
  out << "build-sets: subset " << subset.size() << ", universal " << set_universal.size()
      << ", random " << set_random.size() << ", augmented " << augmented.size() << "\n";
  return {"validation_subset.jsonl", "challenge_universal.jsonl", "challenge_random.jsonl",
          "trigger_augmented.jsonl", "datasets.json"};
}

Artifacts cmd_evaluate(const RunConfig& cfg, const EvalRequest& req, std::ostream& out) {
  check_name(req.name);
  require_file(req.dataset, "dataset");
  const fs::path checkpoint = req.checkpoint.empty() ? cfg.checkpoint_path() : fs::path(req.checkpoint);
  LoadedModel m = load_model(cfg, checkpoint);
  std::vector<Example> data = load_corpus(req.dataset, "eval", "dataset");
  EvalReport report = evaluate(m.checkpoint.params, m.vocab, data, req.name, req.triggers,
                               cfg.train.max_seq_len);
  json j = to_json(report);
  j["checkpoint_sha256"] = m.checkpoint_sha256;
  j["dataset_sha256"] = sha256_file(req.dataset);
  j["provenance"] = provenance(cfg, "evaluate");
  ensure_out_dir(cfg);
  const std::string file = "eval_" + req.name + ".json";
  write_json(cfg.out_dir / file, j);
  out << render_summary_table(std::span<const EvalReport>(&report, 1));
  return {file};
}

Artifacts cmd_inoculate(const RunConfig& cfg, std::ostream& out) {
  const std::string dataset = cfg.paths.dataset.empty()
                                  ? (cfg.out_dir / "trigger_augmented.jsonl").string()
                                  : cfg.paths.dataset;
  LoadedModel m = load_model(cfg, cfg.checkpoint_path());
  std::vector<Example> data = load_corpus(dataset, "augmented", "fine-tuning dataset");
  std::vector<TokenizedExample> encoded = encode_all(data, m.vocab, cfg.finetune.max_seq_len);
  InoculationResult r = inoculate(m.checkpoint.params, encoded, cfg.finetune);
  print_history(out, r.history);

  ensure_out_dir(cfg);
  json prov = provenance(cfg, "inoculate");
  prov["base_checkpoint_sha256"] = m.checkpoint_sha256;
  prov["dataset_sha256"] = sha256_file(dataset);
  save_checkpoint({r.params, m.vocab.hash(), prov}, cfg.out_dir / "checkpoint_finetuned.json");
  write_json(cfg.out_dir / "finetune_history.json",
             {{"provenance", prov},
              {"before_params_hash", r.before_hash},
              {"after_params_hash", r.after_hash},
              {"epochs", history_json(r.history)}});
  return {"checkpoint_finetuned.json", "finetune_history.json"};
}

PipelineResult cmd_pipeline(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.paths.checkpoint.empty() || !cfg.paths.vocab.empty() || !cfg.paths.dataset.empty()) {
    throw ConfigError("pipeline: paths.checkpoint, paths.vocab and paths.dataset must be unset");
  }
  const bool needs_synth = cfg.synthetic && (cfg.paths.train.empty() || cfg.paths.validation.empty());
  if (cfg.synthetic) {
    cfg.synthetic->validate();
  } else {
    require_file(train_path(cfg), "training corpus");
    require_file(validation_path(cfg), "validation corpus");
  }
  if (!cfg.paths.glove.empty()) require_file(cfg.paths.glove, "embedding file");
  ensure_out_dir(cfg);

  Manifest manifest(cfg.out_dir, cfg.snapshot(), cfg.seed);
  auto stage = [&](const std::string& name, const std::function<Artifacts()>& body) {
    out << "== " << name << "\n";
    manifest.begin_stage(name);
    Artifacts artifacts;
    try {
      artifacts = body();
    } catch (const std::exception& e) {
      manifest.fail(e.what());
      throw StageError(name, e.what());
    }
    manifest.complete_stage(artifacts);
  };

  if (needs_synth) stage("synth", [&] { return cmd_synth(cfg, out); });
  stage("train", [&] { return cmd_train(cfg, out); });
  stage("attack", [&] {
    Artifacts all;
    for (Label l : kAllLabels) {
      AttackRequest req;
      req.attacked_class = l;
      for (auto& a : cmd_attack(cfg, req, out)) all.push_back(a);
    }
    AttackRequest random;
    random.mode = "random";
    for (auto& a : cmd_attack(cfg, random, out)) all.push_back(a);
    return all;
  });
  stage("build-sets", [&] { return cmd_build_sets(cfg, out); });

  struct EvalSpec {
    const char* name;
    const char* file;
    const char* triggers;
  };
  const EvalSpec sets[] = {{"validation", "validation_subset.jsonl", "none"},
                           {"universal", "challenge_universal.jsonl", "universal"},
                           {"random", "challenge_random.jsonl", "random"}};
  auto evaluate_all = [&](const std::string& prefix, const std::string& model,
                          const fs::path& checkpoint) {
    Artifacts all;
    for (const auto& s : sets) {
      EvalRequest req{(cfg.out_dir / s.file).string(), prefix + "_" + s.name,
                      std::string(s.triggers) + " (" + model + ")", checkpoint.string()};
      for (auto& a : cmd_evaluate(cfg, req, out)) all.push_back(a);
    }
    return all;
  };
  stage("evaluate-pre", [&] { return evaluate_all("pre", "original", cfg.out_dir / "checkpoint.json"); });
  stage("inoculate", [&] { return cmd_inoculate(cfg, out); });
  stage("evaluate-post",
        [&] { return evaluate_all("post", "inoculated", cfg.out_dir / "checkpoint_finetuned.json"); });

  PipelineResult result;
  json outcome_json;
  stage("outcome", [&] {
    auto load = [&](const std::string& name) {
      return eval_report_from_json(read_json(cfg.out_dir / ("eval_" + name + ".json")));
    };
    result.pre_validation = load("pre_validation");
    result.pre_universal = load("pre_universal");
    result.pre_random = load("pre_random");
    result.post_validation = load("post_validation");
    result.post_universal = load("post_universal");
    result.outcome = classify_outcome(
        result.pre_validation.macro_accuracy(), result.pre_universal.macro_accuracy(),
        result.post_validation.macro_accuracy(), result.post_universal.macro_accuracy());
    json per_class = json::object();
    for (Label l : kAllLabels) {
      const std::size_t i = label_index(l);
      result.per_class[i] = classify_outcome(
          result.pre_validation.accuracy[i], result.pre_universal.accuracy[i],
          result.post_validation.accuracy[i], result.post_universal.accuracy[i]);
      per_class[std::string(label_name(l))] = to_json(result.per_class[i]);
    }
    json overall = to_json(result.outcome);
    overall["pre_original"] = result.pre_validation.macro_accuracy();
    overall["pre_challenge"] = result.pre_universal.macro_accuracy();
    overall["post_original"] = result.post_validation.macro_accuracy();
    overall["post_challenge"] = result.post_universal.macro_accuracy();
    outcome_json = {{"overall", overall}, {"per_class", per_class}};

    json file = outcome_json;
    file["provenance"] = provenance(cfg, "pipeline");
    write_json(cfg.out_dir / "outcome.json", file);

    const EvalReport post_random = load("post_random");
    const EvalReport rows[] = {result.pre_validation, result.pre_universal, result.pre_random,
                               result.post_validation, result.post_universal, post_random};
    std::string summary = "seed " + std::to_string(cfg.seed) + "\n" +
                          render_summary_table(rows) + "outcome: " +
                          std::string(outcome_name(result.outcome.kind)) + "\n";
    write_file_atomic(cfg.out_dir / "summary.txt", summary);
    out << summary;
    return Artifacts{"outcome.json", "summary.txt"};
  });
  manifest.finish(outcome_json);
  return result;
}

Artifacts cmd_report(const RunConfig& cfg, std::ostream& out) {
  const fs::path manifest_path = cfg.out_dir / "manifest.json";
  std::vector<std::string> eval_files;
  json manifest;
  if (fs::is_regular_file(manifest_path)) {
    manifest = read_json(manifest_path);
    for (const auto& stage : manifest.at("stages")) {
      for (const auto& a : stage.at("artifacts")) {
        const std::string p = a.at("path").get<std::string>();
        if (p.rfind("eval_", 0) == 0) eval_files.push_back(p);
      }
    }
  } else if (fs::is_directory(cfg.out_dir)) {
    for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
      const std::string p = entry.path().filename().string();
      if (p.rfind("eval_", 0) == 0 && entry.path().extension() == ".json") {
        eval_files.push_back(p);
      }
    }
    std::sort(eval_files.begin(), eval_files.end());
  }
  if (eval_files.empty()) {
    throw ConfigError("report: no evaluation reports in " + cfg.out_dir.string());
  }
  std::vector<EvalReport> reports;
  for (const auto& f : eval_files) {
    reports.push_back(eval_report_from_json(read_json(cfg.out_dir / f)));
  }
  std::string text = render_summary_table(reports) + "\n" + render_prediction_table(reports);
  if (!manifest.is_null() && manifest.value("status", "") == "complete") {
    const json& o = manifest.at("outcome").at("overall");
    text += "\noutcome: " + o.at("outcome").get<std::string>() + "\n";
    for (const auto& [name, c] : manifest.at("outcome").at("per_class").items()) {
      text += "  " + name + ": " + c.at("outcome").get<std::string>() + "\n";
    }
  }
  write_file_atomic(cfg.out_dir / "report.txt", text);
  out << text;
  return {"report.txt"};
}

}  // namespace triggerlab::cli
