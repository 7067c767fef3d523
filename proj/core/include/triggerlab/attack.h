#ifndef TRIGGERLAB_ATTACK_H_
#define TRIGGERLAB_ATTACK_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "triggerlab/common.h"
#include "triggerlab/corpus.h"
#include "triggerlab/model.h"

namespace triggerlab {

// Targeted: minimize cross-entropy toward `target`.
// Untargeted: minimize the negative cross-entropy of each example's gold
// label, i.e. push every example away from its own class.
struct AttackObjective {
  std::optional<Label> target;

  bool targeted() const { return target.has_value(); }
  double loss(const Logits& logits, Label gold) const;
};

struct TriggerSearchConfig {
  std::size_t trigger_len = 1;
  std::string init_token = "the";
  Label attacked_class = Label::kEntailment;
  std::optional<Label> target_label;  // nullopt = untargeted
  std::size_t top_k = 20;
  std::size_t batch_size = 128;
  std::size_t max_passes = 10;
  bool rescore = true;
  std::uint64_t seed = 0;
  std::size_t max_seq_len = kDefaultMaxSeqLen;

  AttackObjective objective() const { return {target_label}; }
  // Throws ConfigError; init_token must be a non-reserved vocabulary entry.
  void validate(const Vocabulary& vocab) const;
};

nlohmann::json to_json(const TriggerSearchConfig& cfg);
TriggerSearchConfig trigger_config_from_json(const nlohmann::json& j,
                                             TriggerSearchConfig defaults = {});

struct Trigger {
  std::vector<TokenId> token_ids;
  std::vector<std::string> tokens;
  // Mean attack loss on the search batch: the initial value followed by the
  // value after every adopted replacement.
  std::vector<double> loss_trace;
  double final_loss = 0.0;
  TriggerSearchConfig config;
};

struct CandidateScore {
  TokenId token = 0;
  double score = 0.0;  // (e_token - e_current) . grad

  bool operator==(const CandidateScore&) const = default;
};

Trigger init_trigger(const TriggerSearchConfig& cfg, const Vocabulary& vocab);

// Prepends `trigger` to the hypothesis, keeping the first max_seq_len ids.
TokenizedExample apply_trigger(const TokenizedExample& ex,
                               std::span<const TokenId> trigger,
                               std::size_t max_seq_len = kDefaultMaxSeqLen);

// First-order estimate of the loss change from swapping the embedding at a
// trigger position for each non-reserved vocabulary row. Returns the top_k
// lowest scores, ascending, ties by token id.
std::vector<CandidateScore> candidate_scores(std::span<const double> grad,
                                             const Matrix& embeddings,
                                             TokenId current, std::size_t top_k);

// Mean attack loss over `examples` with `trigger` prepended.
double mean_attack_loss(const ClassifierParams& params,
                        std::span<const TokenizedExample> examples,
                        std::span<const TokenId> trigger,
                        const AttackObjective& objective,
                        std::size_t max_seq_len = kDefaultMaxSeqLen);

// Greedy coordinate search. A batch of cfg.batch_size examples is drawn once
// from cfg.seed; every pass visits each trigger position, ranks candidates
// with candidate_scores and (if cfg.rescore) adopts the candidate with the
// lowest true batch loss when it strictly improves. Stops after max_passes
// or after a pass without replacement.
Trigger search_trigger(const ClassifierParams& params, const Vocabulary& vocab,
                       std::span<const TokenizedExample> examples,
                       const TriggerSearchConfig& cfg);

struct OracleResult {
  TokenId token = 0;
  double mean_loss = 0.0;
};

inline constexpr std::size_t kOracleVocabLimit = 5000;

// Exhaustive single-token minimizer of mean_attack_loss; ties by token id.
OracleResult brute_force_trigger_oracle(const ClassifierParams& params,
                                        std::span<const TokenizedExample> examples,
                                        const AttackObjective& objective,
                                        const Vocabulary& vocab,
                                        std::size_t max_seq_len = kDefaultMaxSeqLen);

// `count` single-token triggers drawn uniformly without replacement from the
// non-reserved vocabulary. `accept`, when given, restricts the pool.
std::vector<Trigger> random_triggers(const Vocabulary& vocab, std::size_t count,
                                     std::uint64_t seed,
                                     const std::function<bool(TokenId)>& accept = {});

nlohmann::json trigger_to_json(const Trigger& trigger, const std::string& vocab_hash,
                               const std::string& model_hash);
Trigger trigger_from_json(const nlohmann::json& j, const Vocabulary& vocab);

}  // namespace triggerlab

#endif  // TRIGGERLAB_ATTACK_H_
