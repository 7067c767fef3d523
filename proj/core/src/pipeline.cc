#include "triggerlab/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace triggerlab {

namespace {

ChallengeExample with_trigger(const Example& src, const TriggerTokens& trigger,
                              const std::string& split) {
  ChallengeExample c;
  c.example = src;
  c.trigger_tokens = trigger;
  c.source_split = split;
  c.source_id = src.id;
  if (!trigger.empty()) c.example.hypothesis = join_tokens(trigger) + " " + src.hypothesis;
  return c;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string join_tokens(const TriggerTokens& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

std::vector<ChallengeExample> build_challenge_set(std::span<const Example> validation,
                                                  const PerClassTriggers& triggers,
                                                  std::size_t n_per_class,
                                                  std::uint64_t seed,
                                                  const std::string& split) {
  for (Label l : kAllLabels) {
    if (triggers[label_index(l)].empty()) {
      throw Error("build_challenge_set: no trigger for class '" +
                  std::string(label_name(l)) + "'");
    }
  }
  auto sample = sample_per_class(validation, n_per_class, seed);
  std::array<std::size_t, kNumLabels> next{};
  std::vector<ChallengeExample> out;
  out.reserve(sample.size());
  for (const Example& ex : sample) {
    const auto& list = triggers[label_index(ex.gold)];
    const auto& trig = list[next[label_index(ex.gold)]++ % list.size()];
    out.push_back(with_trigger(ex, trig, split));
  }
  return out;
}

PerClassTriggers assign_random_triggers(std::span<const TriggerTokens> random_triggers,
                                        std::uint64_t seed) {
  if (random_triggers.empty()) throw Error("random challenge set: no random triggers");
  std::vector<TriggerTokens> pool(random_triggers.begin(), random_triggers.end());
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  PerClassTriggers out;
  if (pool.size() < kNumLabels) {
    for (std::size_t c = 0; c < kNumLabels; ++c) out[c].push_back(pool[c % pool.size()]);
  } else {
    for (std::size_t i = 0; i < pool.size(); ++i) out[i % kNumLabels].push_back(pool[i]);
  }
  return out;
}

std::vector<ChallengeExample> build_random_challenge_set(
    std::span<const Example> validation, std::span<const TriggerTokens> random_triggers,
    std::size_t n_per_class, std::uint64_t seed, const std::string& split) {
  return build_challenge_set(validation, assign_random_triggers(random_triggers, seed),
                             n_per_class, seed, split);
}

std::vector<ChallengeExample> build_trigger_augmented(
    std::span<const Example> train, std::span<const TriggerTokens> triggers,
    std::size_t n_total, std::uint64_t seed, const std::string& split) {
  if (n_total == 0 || n_total % 2 != 0) {
    throw ConfigError("trigger-augmented: n_total must be even and positive");
  }
  if (triggers.empty()) throw Error("trigger-augmented: no universal triggers");
  std::mt19937_64 rng(seed);
  const std::size_t modified_total = n_total / 2;
  const std::size_t n_triggers = triggers.size();

  std::vector<ChallengeExample> out;
  out.reserve(n_total);
  for (Label l : kAllLabels) {
    const std::size_t c = label_index(l);
    const std::size_t take = n_total / kNumLabels + (c < n_total % kNumLabels ? 1 : 0);
    const std::size_t modify =
        modified_total / kNumLabels + (c < modified_total % kNumLabels ? 1 : 0);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train[i].gold == l) idx.push_back(i);
    }
    if (idx.size() < take) {
      throw Error("trigger-augmented: class '" + std::string(label_name(l)) + "' has " +
                  std::to_string(idx.size()) + " examples, need " + std::to_string(take));
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t r = 0; r < take; ++r) {
      const Example& ex = train[idx[r]];
      if (r < modify) {
        out.push_back(with_trigger(ex, triggers[(r + c) % n_triggers], split));
      } else {
        out.push_back(with_trigger(ex, {}, split));
      }
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<Example> plain_examples(std::span<const ChallengeExample> set) {
  std::vector<Example> out;
  out.reserve(set.size());
  for (const auto& c : set) out.push_back(c.example);
  return out;
}

void write_challenge_jsonl(std::ostream& out, std::span<const ChallengeExample> set) {
  for (const auto& c : set) {
    nlohmann::json j = {{"sentence1", c.example.premise},
                        {"sentence2", c.example.hypothesis},
                        {"gold_label", label_name(c.example.gold)},
                        {"pairID", c.example.id},
                        {"trigger", join_tokens(c.trigger_tokens)},
                        {"source_split", c.source_split},
                        {"source_id", c.source_id}};
    out << j.dump() << '\n';
  }
}

double EvalReport::macro_accuracy() const {
  return (accuracy[0] + accuracy[1] + accuracy[2]) / static_cast<double>(kNumLabels);
}

EvalReport evaluate(const ClassifierParams& params,
                    std::span<const TokenizedExample> dataset, const std::string& name,
                    const std::string& triggers) {
  std::array<std::array<std::size_t, kNumLabels>, kNumLabels> counts{};
  for (const auto& ex : dataset) {
    ++counts[label_index(ex.gold)][label_index(predict(params, ex))];
  }
  EvalReport r;
  r.dataset = name;
  r.triggers = triggers;
  for (std::size_t g = 0; g < kNumLabels; ++g) {
    std::size_t n = std::accumulate(counts[g].begin(), counts[g].end(), std::size_t{0});
    if (n == 0) {
      throw Error("evaluate: class '" + std::string(label_name(label_from_index(g))) +
                  "' absent from dataset '" + name + "'");
    }
    r.n_per_class[g] = n;
    for (std::size_t p = 0; p < kNumLabels; ++p) {
      r.matrix[g][p] = static_cast<double>(counts[g][p]) / static_cast<double>(n);
    }
    r.accuracy[g] = r.matrix[g][g];
  }
  return r;
}

EvalReport evaluate(const ClassifierParams& params, const Vocabulary& vocab,
                    std::span<const Example> dataset, const std::string& name,
                    const std::string& triggers, std::size_t max_seq_len) {
  auto tokenized = encode_all(dataset, vocab, max_seq_len);
  return evaluate(params, tokenized, name, triggers);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json acc = nlohmann::json::object();
  nlohmann::json matrix = nlohmann::json::object();
  nlohmann::json n = nlohmann::json::object();
  for (Label l : kAllLabels) {
    const std::string key(label_name(l));
    acc[key] = r.accuracy[label_index(l)];
    matrix[key] = r.matrix[label_index(l)];
    n[key] = r.n_per_class[label_index(l)];
  }
  return {{"dataset", r.dataset},
          {"triggers", r.triggers},
          {"accuracy", acc},
          {"macro_accuracy", r.macro_accuracy()},
          {"prediction_distribution", matrix},
          {"n_per_class", n}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.triggers = j.value("triggers", "");
    for (Label l : kAllLabels) {
      const std::string key(label_name(l));
      r.accuracy[label_index(l)] = j.at("accuracy").at(key).get<double>();
      r.matrix[label_index(l)] =
          j.at("prediction_distribution").at(key).get<std::array<double, kNumLabels>>();
      r.n_per_class[label_index(l)] = j.at("n_per_class").at(key).get<std::size_t>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("eval report: ") + e.what());
  }
}

std::string render_prediction_table(std::span<const EvalReport> reports) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-15s %-28s %8s %8s %8s\n", "Ground Truth", "Data",
                "E%", "N%", "C%");
  os << buf;
  for (Label g : kAllLabels) {
    bool first = true;
    for (const auto& r : reports) {
      const auto& row = r.matrix[label_index(g)];
      std::snprintf(buf, sizeof buf, "%-15s %-28s %8s %8s %8s\n",
                    first ? std::string(label_name(g)).c_str() : "", r.dataset.c_str(),
                    percent(row[0]).c_str(), percent(row[1]).c_str(),
                    percent(row[2]).c_str());
      os << buf;
      first = false;
    }
  }
  return os.str();
}

std::string render_summary_table(std::span<const EvalReport> reports) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-28s %-28s %14s %12s %17s\n", "Dataset",
                "Triggers (Model)", "Entailment (%)", "Neutral (%)", "Contradiction (%)");
  os << buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-28s %-28s %14s %12s %17s\n", r.dataset.c_str(),
                  r.triggers.c_str(), percent(r.accuracy[0]).c_str(),
                  percent(r.accuracy[1]).c_str(), percent(r.accuracy[2]).c_str());
    os << buf;
  }
  return os.str();
}

InoculationResult inoculate(const ClassifierParams& params,
                            std::span<const TokenizedExample> augmented,
                            const TrainConfig& cfg) {
  InoculationResult r;
  r.params = params;
  r.before_hash = params.hash();
  r.history = train(r.params, augmented, cfg);
  r.after_hash = r.params.hash();
  return r;
}

std::string_view outcome_name(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::kReducedGap:
      return "ReducedGap";
    case OutcomeKind::kUnchanged:
      return "Unchanged";
    case OutcomeKind::kDecreased:
      return "Decreased";
  }
  return "?";
}

InoculationOutcome classify_outcome(double pre_orig, double pre_chal, double post_orig,
                                    double post_chal, double orig_tolerance,
                                    double gap_fraction) {
  for (double v : {pre_orig, pre_chal, post_orig, post_chal}) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("classify_outcome: accuracy outside [0,1]");
  }
  InoculationOutcome o;
  o.gap_before = pre_orig - pre_chal;
  o.gap_after = post_orig - post_chal;
  o.orig_delta = post_orig - pre_orig;
  o.chal_delta = post_chal - pre_chal;
  if (post_orig < pre_orig - orig_tolerance) {
    o.kind = OutcomeKind::kDecreased;
  } else if (pre_orig > pre_chal &&
             o.gap_before - o.gap_after >= gap_fraction * o.gap_before) {
    o.kind = OutcomeKind::kReducedGap;
  } else {
    o.kind = OutcomeKind::kUnchanged;
  }
  return o;
}

nlohmann::json to_json(const InoculationOutcome& o) {
  return {{"outcome", outcome_name(o.kind)},
          {"gap_before", o.gap_before},
          {"gap_after", o.gap_after},
          {"orig_delta", o.orig_delta},
          {"chal_delta", o.chal_delta}};
}

double triggered_accuracy(const ClassifierParams& params,
                          std::span<const TokenizedExample> examples,
                          std::span<const TokenId> trigger, std::size_t max_seq_len) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    if (predict(params, apply_trigger(ex, trigger, max_seq_len)) == ex.gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

ClassTriggerResult find_class_trigger(const ClassifierParams& params,
                                      const Vocabulary& vocab,
                                      std::span<const TokenizedExample> train,
                                      const TriggerSearchConfig& base, AttackMode mode) {
  std::vector<TokenizedExample> attacked;
  for (const auto& ex : train) {
    if (ex.gold == base.attacked_class) attacked.push_back(ex);
  }
  if (attacked.empty()) {
    throw Error("attack: no examples of class '" +
                std::string(label_name(base.attacked_class)) + "'");
  }

  std::vector<TriggerSearchConfig> configs;
  switch (mode) {
    case AttackMode::kTargetedBest:
      for (Label l : kAllLabels) {
        if (l == base.attacked_class) continue;
        TriggerSearchConfig c = base;
        c.target_label = l;
        configs.push_back(c);
      }
      break;
    case AttackMode::kTargeted:
      if (!base.target_label) throw ConfigError("attack: targeted mode needs a target label");
      configs.push_back(base);
      break;
    case AttackMode::kUntargeted: {
      TriggerSearchConfig c = base;
      c.target_label.reset();
      configs.push_back(c);
      break;
    }
  }

  ClassTriggerResult r;
  r.clean_accuracy = triggered_accuracy(params, attacked, {}, base.max_seq_len);
  std::size_t best = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    r.candidates.push_back(search_trigger(params, vocab, attacked, configs[i]));
    r.candidate_accuracies.push_back(triggered_accuracy(
        params, attacked, r.candidates.back().token_ids, base.max_seq_len));
    if (r.candidate_accuracies[i] < r.candidate_accuracies[best]) best = i;
  }
  r.trigger = r.candidates[best];
  r.attacked_accuracy = r.candidate_accuracies[best];
  return r;
}

TransferReports transfer_evaluate(const PerClassTriggers& triggers_from_a,
                                  const ClassifierParams& model_a,
                                  const std::string& vocab_hash_a,
                                  const ClassifierParams& model_b,
                                  const std::string& vocab_hash_b,
                                  const Vocabulary& vocab,
                                  std::span<const Example> validation,
                                  std::size_t n_per_class, std::uint64_t seed,
                                  std::size_t max_seq_len) {
  if (vocab_hash_a != vocab_hash_b || vocab_hash_a != vocab.hash()) {
    throw Error("transfer_evaluate: models do not share a vocabulary");
  }
  auto set = build_challenge_set(validation, triggers_from_a, n_per_class, seed);
  auto tokenized = encode_all(plain_examples(set), vocab, max_seq_len);
  return {evaluate(model_a, tokenized, "challenge (model A)", "universal from A"),
          evaluate(model_b, tokenized, "challenge (model B)", "universal from A")};
}

}  // namespace triggerlab
