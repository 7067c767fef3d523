#include "triggerlab/attack.h"

#include <algorithm>
#include <numeric>
#include <random>

namespace triggerlab {

double AttackObjective::loss(const Logits& logits, Label gold) const {
  return target ? cross_entropy(logits, *target) : -cross_entropy(logits, gold);
}

void TriggerSearchConfig::validate(const Vocabulary& vocab) const {
  if (trigger_len < 1) throw ConfigError("attack: trigger_len must be >= 1");
  if (top_k < 1) throw ConfigError("attack: top_k must be >= 1");
  if (batch_size < 1) throw ConfigError("attack: batch_size must be >= 1");
  if (max_seq_len <= trigger_len) {
    throw ConfigError("attack: max_seq_len must exceed trigger_len");
  }
  if (target_label && *target_label == attacked_class) {
    throw ConfigError("attack: target label equals attacked class '" +
                      std::string(label_name(attacked_class)) + "'");
  }
  if (!vocab.find(init_token)) {
    throw ConfigError("attack: init token '" + init_token + "' not in vocabulary");
  }
}

nlohmann::json to_json(const TriggerSearchConfig& cfg) {
  return {{"trigger_len", cfg.trigger_len},
          {"init_token", cfg.init_token},
          {"attacked_class", label_name(cfg.attacked_class)},
          {"target_label", cfg.target_label
                               ? nlohmann::json(label_name(*cfg.target_label))
                               : nlohmann::json(nullptr)},
          {"top_k", cfg.top_k},
          {"batch_size", cfg.batch_size},
          {"max_passes", cfg.max_passes},
          {"rescore", cfg.rescore},
          {"seed", cfg.seed},
          {"max_seq_len", cfg.max_seq_len}};
}

TriggerSearchConfig trigger_config_from_json(const nlohmann::json& j,
                                             TriggerSearchConfig c) {
  auto label_field = [&](const char* name) -> std::optional<Label> {
    const auto& v = j.at(name);
    if (v.is_null()) return std::nullopt;
    auto l = parse_label(v.get<std::string>());
    if (!l) throw ConfigError(std::string("attack: unknown label in '") + name + "'");
    return l;
  };
  try {
    c.trigger_len = j.value("trigger_len", c.trigger_len);
    c.init_token = j.value("init_token", c.init_token);
    if (j.contains("attacked_class")) {
      auto l = label_field("attacked_class");
      if (!l) throw ConfigError("attack: attacked_class may not be null");
      c.attacked_class = *l;
    }
    if (j.contains("target_label")) c.target_label = label_field("target_label");
    c.top_k = j.value("top_k", c.top_k);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_passes = j.value("max_passes", c.max_passes);
    c.rescore = j.value("rescore", c.rescore);
    c.seed = j.value("seed", c.seed);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("attack config: ") + e.what());
  }
  return c;
}

Trigger init_trigger(const TriggerSearchConfig& cfg, const Vocabulary& vocab) {
  auto id = vocab.find(cfg.init_token);
  if (!id) {
    throw ConfigError("attack: init token '" + cfg.init_token + "' not in vocabulary");
  }
  Trigger t;
  t.token_ids.assign(cfg.trigger_len, *id);
  t.tokens.assign(cfg.trigger_len, cfg.init_token);
  t.config = cfg;
  return t;
}

TokenizedExample apply_trigger(const TokenizedExample& ex,
                               std::span<const TokenId> trigger,
                               std::size_t max_seq_len) {
  TokenizedExample out;
  out.premise_ids = ex.premise_ids;
  out.gold = ex.gold;
  out.hypothesis_ids.reserve(trigger.size() + ex.hypothesis_ids.size());
  out.hypothesis_ids.assign(trigger.begin(), trigger.end());
  out.hypothesis_ids.insert(out.hypothesis_ids.end(), ex.hypothesis_ids.begin(),
                            ex.hypothesis_ids.end());
  if (out.hypothesis_ids.size() > max_seq_len) out.hypothesis_ids.resize(max_seq_len);
  return out;
}

std::vector<CandidateScore> candidate_scores(std::span<const double> grad,
                                             const Matrix& embeddings,
                                             TokenId current, std::size_t top_k) {
  if (grad.size() != embeddings.cols()) {
    throw Error("candidate_scores: gradient dimension mismatch");
  }
  auto cur = embeddings.row(current);
  std::vector<CandidateScore> scores;
  scores.reserve(embeddings.rows());
  for (TokenId v = 0; v < embeddings.rows(); ++v) {
    if (Vocabulary::is_reserved(v)) continue;
    auto e = embeddings.row(v);
    double s = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) s += (e[k] - cur[k]) * grad[k];
    scores.push_back({v, s});
  }
  auto less = [](const CandidateScore& a, const CandidateScore& b) {
    return a.score < b.score || (a.score == b.score && a.token < b.token);
  };
  const std::size_t k = std::min(top_k, scores.size());
  std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k),
                    scores.end(), less);
  scores.resize(k);
  return scores;
}

double mean_attack_loss(const ClassifierParams& params,
                        std::span<const TokenizedExample> examples,
                        std::span<const TokenId> trigger,
                        const AttackObjective& objective, std::size_t max_seq_len) {
  if (examples.empty()) throw Error("mean_attack_loss: no examples");
  double sum = 0.0;
  for (const auto& ex : examples) {
    sum += objective.loss(forward(params, apply_trigger(ex, trigger, max_seq_len)),
                          ex.gold);
  }
  return sum / static_cast<double>(examples.size());
}

Trigger search_trigger(const ClassifierParams& params, const Vocabulary& vocab,
                       std::span<const TokenizedExample> examples,
                       const TriggerSearchConfig& cfg) {
  cfg.validate(vocab);
  if (examples.empty()) throw Error("search_trigger: no examples");
  for (const auto& ex : examples) {
    if (ex.gold != cfg.attacked_class) {
      throw Error("search_trigger: example with gold '" +
                  std::string(label_name(ex.gold)) + "' in attack set for '" +
                  std::string(label_name(cfg.attacked_class)) + "'");
    }
  }
  if (params.vocab_size() != vocab.size()) {
    throw Error("search_trigger: model and vocabulary sizes differ");
  }

  // Fixed search batch; the full set in input order when it fits.
  std::vector<TokenizedExample> batch;
  if (examples.size() <= cfg.batch_size) {
    batch.assign(examples.begin(), examples.end());
  } else {
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> idx(examples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    batch.reserve(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(examples[idx[i]]);
  }

  const AttackObjective objective = cfg.objective();
  std::vector<Label> grad_labels;
  for (const auto& ex : batch) grad_labels.push_back(objective.target.value_or(ex.gold));
  const double grad_sign = objective.targeted() ? 1.0 : -1.0;

  Trigger trig = init_trigger(cfg, vocab);
  double current = mean_attack_loss(params, batch, trig.token_ids, objective, cfg.max_seq_len);
  trig.loss_trace.push_back(current);

  std::vector<TokenizedExample> triggered(batch.size());
  for (std::size_t pass = 0; pass < cfg.max_passes; ++pass) {
    bool changed = false;
    for (std::size_t pos = 0; pos < cfg.trigger_len; ++pos) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        triggered[i] = apply_trigger(batch[i], trig.token_ids, cfg.max_seq_len);
      }
      const std::size_t positions[] = {pos};
      auto g = embedding_gradient(params, triggered, grad_labels, positions);
      auto& grad = g.per_position[0];
      for (double& v : grad) v *= grad_sign;
      auto candidates =
          candidate_scores(grad, params.embeddings, trig.token_ids[pos], cfg.top_k);

      std::optional<TokenId> adopt;
      double adopt_loss = current;
      if (cfg.rescore) {
        std::vector<TokenId> trial = trig.token_ids;
        for (const auto& c : candidates) {
          if (c.token == trig.token_ids[pos]) continue;
          trial[pos] = c.token;
          double l = mean_attack_loss(params, batch, trial, objective, cfg.max_seq_len);
          if (l < adopt_loss) {
            adopt_loss = l;
            adopt = c.token;
          }
        }
      } else {
        for (const auto& c : candidates) {
          if (c.token == trig.token_ids[pos]) continue;
          if (c.score < 0.0) {
            adopt = c.token;
            std::vector<TokenId> trial = trig.token_ids;
            trial[pos] = c.token;
            adopt_loss = mean_attack_loss(params, batch, trial, objective, cfg.max_seq_len);
          }
          break;
        }
      }
      if (adopt) {
        trig.token_ids[pos] = *adopt;
        trig.tokens[pos] = vocab.token(*adopt);
        current = adopt_loss;
        trig.loss_trace.push_back(current);
        changed = true;
      }
    }
    if (!changed) break;
  }
  trig.final_loss = current;
  return trig;
}

OracleResult brute_force_trigger_oracle(const ClassifierParams& params,
                                        std::span<const TokenizedExample> examples,
                                        const AttackObjective& objective,
                                        const Vocabulary& vocab,
                                        std::size_t max_seq_len) {
  if (vocab.size() > kOracleVocabLimit) {
    throw Error("brute_force_trigger_oracle: vocabulary of " +
                std::to_string(vocab.size()) + " exceeds limit " +
                std::to_string(kOracleVocabLimit));
  }
  std::optional<OracleResult> best;
  for (TokenId v = 0; v < vocab.size(); ++v) {
    if (Vocabulary::is_reserved(v)) continue;
    const TokenId trig[] = {v};
    double l = mean_attack_loss(params, examples, trig, objective, max_seq_len);
    if (!best || l < best->mean_loss) best = OracleResult{v, l};
  }
  if (!best) throw Error("brute_force_trigger_oracle: no candidate tokens");
  return *best;
}

std::vector<Trigger> random_triggers(const Vocabulary& vocab, std::size_t count,
                                     std::uint64_t seed,
                                     const std::function<bool(TokenId)>& accept) {
  if (count < 1) throw ConfigError("random_triggers: count must be >= 1");
  std::vector<TokenId> pool;
  for (TokenId v = 0; v < vocab.size(); ++v) {
    if (Vocabulary::is_reserved(v)) continue;
    if (accept && !accept(v)) continue;
    pool.push_back(v);
  }
  if (count > pool.size()) {
    throw Error("random_triggers: requested " + std::to_string(count) +
                " triggers from a pool of " + std::to_string(pool.size()));
  }
  std::mt19937_64 rng(seed);
  std::vector<Trigger> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    Trigger t;
    t.token_ids = {pool[i]};
    t.tokens = {vocab.token(pool[i])};
    t.config.seed = seed;
    out.push_back(std::move(t));
  }
  return out;
}

nlohmann::json trigger_to_json(const Trigger& t, const std::string& vocab_hash,
                               const std::string& model_hash) {
  return {{"tokens", t.tokens},
          {"token_ids", t.token_ids},
          {"config", to_json(t.config)},
          {"loss_trace", t.loss_trace},
          {"final_loss", t.final_loss},
          {"vocab_hash", vocab_hash},
          {"model_checkpoint_hash", model_hash}};
}

Trigger trigger_from_json(const nlohmann::json& j, const Vocabulary& vocab) {
  try {
    if (j.contains("vocab_hash") && j.at("vocab_hash").get<std::string>() != vocab.hash()) {
      throw Error("trigger: vocabulary hash mismatch");
    }
    Trigger t;
    t.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& tok : t.tokens) {
      auto id = vocab.find(tok);
      if (!id) throw Error("trigger: token '" + tok + "' not in vocabulary");
      t.token_ids.push_back(*id);
    }
    if (j.contains("config")) t.config = trigger_config_from_json(j.at("config"));
    t.loss_trace = j.value("loss_trace", std::vector<double>{});
    t.final_loss = j.value("final_loss", 0.0);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trigger: ") + e.what());
  }
}

}  // namespace triggerlab
