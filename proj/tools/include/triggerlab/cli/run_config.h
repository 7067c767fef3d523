#ifndef TRIGGERLAB_CLI_RUN_CONFIG_H_
#define TRIGGERLAB_CLI_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "triggerlab/analysis.h"
#include "triggerlab/attack.h"
#include "triggerlab/model.h"
#include "triggerlab/pipeline.h"
#include "triggerlab/synthetic.h"

namespace triggerlab::cli {

struct Paths {
  std::string train;
  std::string validation;
  std::string glove;
  std::string checkpoint;  // defaults to <out_dir>/checkpoint.json
  std::string vocab;       // defaults to <out_dir>/vocab.json
  std::string dataset;     // evaluate / inoculate input
};

struct ModelConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  bool use_premise = true;
  std::uint64_t min_count = 3;
};

struct PipelineSizes {
  std::size_t n_per_class = 1000;
  // Per-class size of the untriggered validation subset; 0 = n_per_class.
  std::size_t validation_subset_per_class = 0;
  std::size_t n_total = 6000;
  std::size_t num_random_triggers = 6;
};

struct AnalysisConfig {
  std::size_t k = 5;
  std::uint64_t min_count = 1;       // table construction
  std::uint64_t rank_min_count = 1;  // ranking views
  Side side = Side::kHypothesis;
};

// One run's configuration. Component seeds are all derived from `seed`.
struct RunConfig {
  std::uint64_t seed = 13;
  std::filesystem::path out_dir = "run";
  Paths paths;
  ModelConfig model;
  TrainConfig train;
  TrainConfig finetune = default_finetune_config();
  TriggerSearchConfig attack;
  AttackMode attack_mode = AttackMode::kTargetedBest;
  PipelineSizes pipeline;
  AnalysisConfig analysis;
  std::optional<SyntheticSpec> synthetic;
  std::size_t synthetic_validation_per_class = 1000;

  // Pushes `seed` into every component config.
  void apply_seed();
  // Everything except out_dir; embedded in every artifact.
  nlohmann::json snapshot() const;

  std::filesystem::path checkpoint_path() const;
  std::filesystem::path vocab_path() const;
};

std::string_view attack_mode_name(AttackMode mode);
AttackMode parse_attack_mode(std::string_view name);

// Missing fields keep their defaults. Throws ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Throws ConfigError unless `path` names an existing file.
void require_file(const std::string& path, const std::string& what);

}  // namespace triggerlab::cli

#endif  // TRIGGERLAB_CLI_RUN_CONFIG_H_
