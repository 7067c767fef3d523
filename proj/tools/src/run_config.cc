#include "triggerlab/cli/run_config.h"

#include <fstream>

namespace triggerlab::cli {

namespace {

nlohmann::json train_json_without_seed(const TrainConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("seed");
  return j;
}

}  // namespace

std::string_view attack_mode_name(AttackMode mode) {
  switch (mode) {
    case AttackMode::kTargetedBest:
      return "targeted-best";
    case AttackMode::kTargeted:
      return "targeted";
    case AttackMode::kUntargeted:
      return "untargeted";
  }
  return "?";
}

AttackMode parse_attack_mode(std::string_view name) {
  for (AttackMode m : {AttackMode::kTargetedBest, AttackMode::kTargeted,
                       AttackMode::kUntargeted}) {
    if (attack_mode_name(m) == name) return m;
  }
  throw ConfigError("unknown attack mode '" + std::string(name) + "'");
}

void RunConfig::apply_seed() {
  train.seed = seed;
  finetune.seed = seed + 1;
  attack.seed = seed;
  if (synthetic) synthetic->seed = seed;
}

nlohmann::json RunConfig::snapshot() const {
  nlohmann::json attack_json = to_json(attack);
  attack_json.erase("attacked_class");
  attack_json.erase("target_label");
  attack_json.erase("seed");
  attack_json["mode"] = attack_mode_name(attack_mode);
  nlohmann::json j = {
      {"seed", seed},
      {"paths",
       {{"train", paths.train},
        {"validation", paths.validation},
        {"glove", paths.glove},
        {"checkpoint", paths.checkpoint},
        {"vocab", paths.vocab},
        {"dataset", paths.dataset}}},
      {"model",
       {{"embed_dim", model.embed_dim},
        {"hidden_dim", model.hidden_dim},
        {"use_premise", model.use_premise},
        {"min_count", model.min_count}}},
      {"train", train_json_without_seed(train)},
      {"finetune", train_json_without_seed(finetune)},
      {"attack", attack_json},
      {"pipeline",
       {{"n_per_class", pipeline.n_per_class},
        {"validation_subset_per_class", pipeline.validation_subset_per_class},
        {"n_total", pipeline.n_total},
        {"num_random_triggers", pipeline.num_random_triggers}}},
      {"analysis",
       {{"k", analysis.k},
        {"min_count", analysis.min_count},
        {"rank_min_count", analysis.rank_min_count},
        {"side", side_name(analysis.side)}}}};
  if (synthetic) {
    nlohmann::json s = to_json(*synthetic);
    s.erase("seed");
    s["validation_per_class"] = synthetic_validation_per_class;
    j["synthetic"] = s;
  }
  return j;
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return paths.checkpoint.empty() ? out_dir / "checkpoint.json"
                                  : std::filesystem::path(paths.checkpoint);
}

std::filesystem::path RunConfig::vocab_path() const {
  return paths.vocab.empty() ? out_dir / "vocab.json" : std::filesystem::path(paths.vocab);
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    c.seed = j.value("seed", c.seed);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (auto it = j.find("paths"); it != j.end()) {
      c.paths.train = it->value("train", c.paths.train);
      c.paths.validation = it->value("validation", c.paths.validation);
      c.paths.glove = it->value("glove", c.paths.glove);
      c.paths.checkpoint = it->value("checkpoint", c.paths.checkpoint);
      c.paths.vocab = it->value("vocab", c.paths.vocab);
      c.paths.dataset = it->value("dataset", c.paths.dataset);
    }
    if (auto it = j.find("model"); it != j.end()) {
      c.model.embed_dim = it->value("embed_dim", c.model.embed_dim);
      c.model.hidden_dim = it->value("hidden_dim", c.model.hidden_dim);
      c.model.use_premise = it->value("use_premise", c.model.use_premise);
      c.model.min_count = it->value("min_count", c.model.min_count);
    }
    if (auto it = j.find("train"); it != j.end()) {
      c.train = train_config_from_json(*it, c.train);
    }
    if (auto it = j.find("finetune"); it != j.end()) {
      c.finetune = train_config_from_json(*it, c.finetune);
    }
    if (auto it = j.find("attack"); it != j.end()) {
      c.attack = trigger_config_from_json(*it, c.attack);
      if (it->contains("mode")) c.attack_mode = parse_attack_mode(it->at("mode").get<std::string>());
    }
    if (auto it = j.find("pipeline"); it != j.end()) {
      c.pipeline.n_per_class = it->value("n_per_class", c.pipeline.n_per_class);
      c.pipeline.validation_subset_per_class =
          it->value("validation_subset_per_class", c.pipeline.validation_subset_per_class);
      c.pipeline.n_total = it->value("n_total", c.pipeline.n_total);
      c.pipeline.num_random_triggers =
          it->value("num_random_triggers", c.pipeline.num_random_triggers);
    }
    if (auto it = j.find("analysis"); it != j.end()) {
      c.analysis.k = it->value("k", c.analysis.k);
      c.analysis.min_count = it->value("min_count", c.analysis.min_count);
      c.analysis.rank_min_count = it->value("rank_min_count", c.analysis.rank_min_count);
      if (it->contains("side")) c.analysis.side = parse_side(it->at("side").get<std::string>());
    }
    if (auto it = j.find("synthetic"); it != j.end()) {
      c.synthetic = synthetic_spec_from_json(*it);
      c.synthetic_validation_per_class =
          it->value("validation_per_class", c.synthetic_validation_per_class);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.train.validate();
  c.finetune.validate();
  c.apply_seed();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path not configured");
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError(what + " not found: " + path);
  }
}

}  // namespace triggerlab::cli
