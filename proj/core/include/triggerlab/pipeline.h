#ifndef TRIGGERLAB_PIPELINE_H_
#define TRIGGERLAB_PIPELINE_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "triggerlab/attack.h"
#include "triggerlab/common.h"
#include "triggerlab/corpus.h"
#include "triggerlab/model.h"

namespace triggerlab {

using TriggerTokens = std::vector<std::string>;
// Triggers assigned to each gold class; several per class are cycled.
using PerClassTriggers = std::array<std::vector<TriggerTokens>, kNumLabels>;

struct ChallengeExample {
  Example example;  // hypothesis already carries the trigger prefix
  TriggerTokens trigger_tokens;
  std::string source_split;
  std::string source_id;

  bool operator==(const ChallengeExample&) const = default;
};

std::string join_tokens(const TriggerTokens& tokens);

// Stratified sample; each example gets its gold class's trigger prepended.
std::vector<ChallengeExample> build_challenge_set(std::span<const Example> validation,
                                                  const PerClassTriggers& triggers,
                                                  std::size_t n_per_class,
                                                  std::uint64_t seed,
                                                  const std::string& split = "validation");

// Same sampling as build_challenge_set; the random triggers are dealt to the
// classes round-robin after a seeded shuffle.
std::vector<ChallengeExample> build_random_challenge_set(
    std::span<const Example> validation, std::span<const TriggerTokens> random_triggers,
    std::size_t n_per_class, std::uint64_t seed,
    const std::string& split = "validation");

// Deals random triggers to classes the way build_random_challenge_set does.
PerClassTriggers assign_random_triggers(std::span<const TriggerTokens> random_triggers,
                                        std::uint64_t seed);

// Class-balanced sample of n_total training examples; half are returned
// unmodified, the other half get a universal trigger prepended so that every
// (trigger, gold class) cell count differs by at most one.
std::vector<ChallengeExample> build_trigger_augmented(
    std::span<const Example> train, std::span<const TriggerTokens> triggers,
    std::size_t n_total, std::uint64_t seed, const std::string& split = "train");

std::vector<Example> plain_examples(std::span<const ChallengeExample> set);
void write_challenge_jsonl(std::ostream& out, std::span<const ChallengeExample> set);

struct EvalReport {
  std::string dataset;
  std::string triggers;  // free-form description, e.g. "universal"
  std::array<double, kNumLabels> accuracy{};
  // matrix[gold][pred]: fraction of gold examples predicted pred.
  std::array<std::array<double, kNumLabels>, kNumLabels> matrix{};
  std::array<std::size_t, kNumLabels> n_per_class{};

  double macro_accuracy() const;
  bool operator==(const EvalReport&) const = default;
};

EvalReport evaluate(const ClassifierParams& params,
                    std::span<const TokenizedExample> dataset,
                    const std::string& name = "", const std::string& triggers = "");
EvalReport evaluate(const ClassifierParams& params, const Vocabulary& vocab,
                    std::span<const Example> dataset, const std::string& name = "",
                    const std::string& triggers = "",
                    std::size_t max_seq_len = kDefaultMaxSeqLen);

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);
// Prediction distribution per gold class (one block per report).
std::string render_prediction_table(std::span<const EvalReport> reports);
// Dataset / triggers / per-class accuracy rows.
std::string render_summary_table(std::span<const EvalReport> reports);

struct InoculationResult {
  ClassifierParams params;
  std::string before_hash;
  std::string after_hash;
  TrainHistory history;
};

inline TrainConfig default_finetune_config() {
  TrainConfig c;
  c.epochs = 1;
  c.learning_rate = 2e-4;
  return c;
}

// Fine-tunes a copy of `params` with a fresh optimizer.
InoculationResult inoculate(const ClassifierParams& params,
                            std::span<const TokenizedExample> augmented,
                            const TrainConfig& cfg = default_finetune_config());

enum class OutcomeKind { kReducedGap, kUnchanged, kDecreased };

std::string_view outcome_name(OutcomeKind kind);

struct InoculationOutcome {
  OutcomeKind kind = OutcomeKind::kUnchanged;
  double gap_before = 0.0;  // pre_orig - pre_chal
  double gap_after = 0.0;   // post_orig - post_chal
  double orig_delta = 0.0;  // post_orig - pre_orig
  double chal_delta = 0.0;  // post_chal - pre_chal
};

inline constexpr double kOutcomeOrigTolerance = 0.05;
inline constexpr double kOutcomeGapFraction = 0.5;

// Decreased if clean accuracy fell by more than orig_tolerance; otherwise
// ReducedGap if a positive gap shrank by at least gap_fraction of itself;
// otherwise Unchanged. Inputs must lie in [0, 1].
InoculationOutcome classify_outcome(double pre_orig, double pre_chal, double post_orig,
                                    double post_chal,
                                    double orig_tolerance = kOutcomeOrigTolerance,
                                    double gap_fraction = kOutcomeGapFraction);

nlohmann::json to_json(const InoculationOutcome& outcome);

// Accuracy on `examples` with `trigger` prepended (empty trigger = clean).
double triggered_accuracy(const ClassifierParams& params,
                          std::span<const TokenizedExample> examples,
                          std::span<const TokenId> trigger,
                          std::size_t max_seq_len = kDefaultMaxSeqLen);

struct ClassTriggerResult {
  Trigger trigger;
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  // Every candidate search that was run, in target order.
  std::vector<Trigger> candidates;
  std::vector<double> candidate_accuracies;
};

enum class AttackMode { kTargetedBest, kTargeted, kUntargeted };

// Searches a trigger for base.attacked_class on its examples in `train`.
// kTargetedBest runs a targeted search toward each other class and keeps the
// one with the lowest attacked-class accuracy (first on ties); kTargeted uses
// base.target_label; kUntargeted clears it.
ClassTriggerResult find_class_trigger(const ClassifierParams& params,
                                      const Vocabulary& vocab,
                                      std::span<const TokenizedExample> train,
                                      const TriggerSearchConfig& base, AttackMode mode);

struct TransferReports {
  EvalReport source;  // model A
  EvalReport target;  // model B
};

// Builds one challenge set from model A's triggers and evaluates both models.
TransferReports transfer_evaluate(const PerClassTriggers& triggers_from_a,
                                  const ClassifierParams& model_a,
                                  const std::string& vocab_hash_a,
                                  const ClassifierParams& model_b,
                                  const std::string& vocab_hash_b,
                                  const Vocabulary& vocab,
                                  std::span<const Example> validation,
                                  std::size_t n_per_class, std::uint64_t seed,
                                  std::size_t max_seq_len = kDefaultMaxSeqLen);

}  // namespace triggerlab

#endif  // TRIGGERLAB_PIPELINE_H_
