#ifndef TRIGGERLAB_CLI_COMMANDS_H_
#define TRIGGERLAB_CLI_COMMANDS_H_

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "triggerlab/cli/run_config.h"
#include "triggerlab/pipeline.h"

namespace triggerlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Every command writes only under cfg.out_dir and returns the artifact paths
// it wrote, relative to that directory.
using Artifacts = std::vector<std::string>;

Artifacts cmd_synth(const RunConfig& cfg, std::ostream& out);
Artifacts cmd_train(const RunConfig& cfg, std::ostream& out);

struct AttackRequest {
  Label attacked_class = Label::kEntailment;
  // "targeted-best" (alias "best"), "targeted", "untargeted" or "random";
  // empty = the configured attack mode.
  std::string mode;
  std::optional<Label> target;
  std::size_t count = 0;  // random mode; 0 = pipeline.num_random_triggers
};
Artifacts cmd_attack(const RunConfig& cfg, const AttackRequest& req, std::ostream& out);

Artifacts cmd_analyze(const RunConfig& cfg, std::ostream& out);

// Reads trigger_<class>.json and random_triggers.json from the run directory.
Artifacts cmd_build_sets(const RunConfig& cfg, std::ostream& out);

struct EvalRequest {
  std::string dataset;     // JSON-lines path
  std::string name;        // report written to eval_<name>.json
  std::string triggers;    // description copied into the report
  std::string checkpoint;  // empty = cfg.checkpoint_path()
};
Artifacts cmd_evaluate(const RunConfig& cfg, const EvalRequest& req, std::ostream& out);

// Fine-tunes on paths.dataset (default <out_dir>/trigger_augmented.jsonl).
Artifacts cmd_inoculate(const RunConfig& cfg, std::ostream& out);

struct PipelineResult {
  InoculationOutcome outcome;  // on macro-averaged accuracies
  std::array<InoculationOutcome, kNumLabels> per_class;
  EvalReport pre_validation, pre_universal, pre_random, post_validation, post_universal;
};

// Thrown by cmd_pipeline; the manifest records the failed stage.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

PipelineResult cmd_pipeline(const RunConfig& cfg, std::ostream& out);

// Renders the run directory's evaluation reports; writes report.txt.
Artifacts cmd_report(const RunConfig& cfg, std::ostream& out);

// Parses argv, dispatches, and maps failures to exit codes:
// 0 success, 1 usage/config error, 2 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace triggerlab::cli

#endif  // TRIGGERLAB_CLI_COMMANDS_H_
