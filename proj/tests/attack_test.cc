#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>
#include <set>

#include "test_util.h"
#include "triggerlab/analysis.h"
#include "triggerlab/attack.h"
#include "triggerlab/synthetic.h"

namespace triggerlab {
namespace {

using testing::make_vocab;
using testing::random_example;
using testing::random_params;

std::vector<std::string> words(std::size_t n) {
  std::vector<std::string> w = {"the", "a"};
  for (std::size_t i = w.size(); i < n; ++i) w.push_back("w" + std::to_string(i));
  return w;
}

std::vector<TokenizedExample> class_examples(std::size_t n, std::size_t vocab, Label gold,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TokenizedExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto ex = random_example(vocab, 6, rng);
    ex.gold = gold;
    out.push_back(ex);
  }
  return out;
}

TEST(InitTrigger, Examples) {
  Vocabulary v = make_vocab(words(10));
  TriggerSearchConfig cfg;
  Trigger t = init_trigger(cfg, v);
  EXPECT_EQ(t.tokens, std::vector<std::string>{"the"});
  cfg.trigger_len = 3;
  cfg.init_token = "a";
  EXPECT_EQ(init_trigger(cfg, v).tokens, (std::vector<std::string>{"a", "a", "a"}));
  cfg.init_token = "absent";
  EXPECT_THROW(init_trigger(cfg, v), ConfigError);
}

TEST(TriggerConfig, TargetEqualToAttackedClassRejected) {
  Vocabulary v = make_vocab(words(10));
  TriggerSearchConfig cfg;
  cfg.attacked_class = Label::kNeutral;
  cfg.target_label = Label::kNeutral;
  EXPECT_THROW(cfg.validate(v), ConfigError);
  cfg.target_label = Label::kContradiction;
  EXPECT_NO_THROW(cfg.validate(v));
  EXPECT_EQ(to_json(trigger_config_from_json(to_json(cfg))), to_json(cfg));
}

TEST(ApplyTrigger, PrependsToHypothesis) {
  Vocabulary v = make_vocab({"nobody", "a", "woman", "makes", "purchase", "shop"});
  Example e{"a woman in a shop", "A woman makes a purchase.", Label::kEntailment, "x"};
  TokenizedExample ex = encode(e, v);
  const TokenId trig[] = {*v.find("nobody")};
  TokenizedExample out = apply_trigger(ex, trig);
  EXPECT_EQ(decode(out.hypothesis_ids, v),
            (std::vector<std::string>{"nobody", "a", "woman", "makes", "a", "purchase"}));
  EXPECT_EQ(out.premise_ids, ex.premise_ids);
  EXPECT_EQ(out.gold, ex.gold);
  EXPECT_EQ(out.hypothesis_ids.size(), ex.hypothesis_ids.size() + 1);
  EXPECT_EQ(apply_trigger(ex, {}), ex);
}

TEST(ApplyTrigger, TruncatesAfterPrepending) {
  TokenizedExample ex{{2}, {2, 3, 4, 5}, Label::kNeutral};
  const TokenId trig[] = {7, 8};
  EXPECT_EQ(apply_trigger(ex, trig, 4).hypothesis_ids, (std::vector<TokenId>{7, 8, 2, 3}));
}

TEST(CandidateScores, ZeroGradient) {
  Matrix e(8, 2, 0.5);
  const double g[] = {0.0, 0.0};
  auto s = candidate_scores(g, e, 3, 3);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], (CandidateScore{2, 0.0}));
  EXPECT_EQ(s[1], (CandidateScore{3, 0.0}));
  EXPECT_EQ(s[2], (CandidateScore{4, 0.0}));
}

TEST(CandidateScores, HandExample) {
  // Rows 0 and 1 are reserved; e1=(1,0), e2=(0,1), e3=(-1,0) at ids 2..4.
  Matrix e(5, 2);
  e(2, 0) = 1;
  e(3, 1) = 1;
  e(4, 0) = -1;
  const double g[] = {1.0, 0.0};
  auto s = candidate_scores(g, e, 2, 3);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], (CandidateScore{4, -2.0}));
  EXPECT_EQ(s[1], (CandidateScore{3, -1.0}));
  EXPECT_EQ(s[2], (CandidateScore{2, 0.0}));
}

TEST(CandidateScores, MatchesDirectDotProducts) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Matrix e(40, 5);
  for (double& x : e.values()) x = n(rng);
  std::vector<double> g(5);
  for (double& x : g) x = n(rng);
  auto s = candidate_scores(g, e, 7, 38);
  ASSERT_EQ(s.size(), 38u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    double dot = 0;
    for (std::size_t k = 0; k < 5; ++k) dot += (e(s[i].token, k) - e(7, k)) * g[k];
    EXPECT_NEAR(s[i].score, dot, 1e-12);
    if (i > 0) {
      EXPECT_LE(s[i - 1].score, s[i].score);
    }
    EXPECT_FALSE(Vocabulary::is_reserved(s[i].token));
  }
}

TEST(Oracle, InputIgnoringModelPicksSmallestId) {
  Vocabulary v = make_vocab(words(20));
  ClassifierParams p = zero_params(v.size(), 3, 4, true);
  p.b2 = {0.3, -0.2, 0.1};
  auto ex = class_examples(10, v.size(), Label::kEntailment, 1);
  OracleResult r = brute_force_trigger_oracle(p, ex, {Label::kContradiction}, v);
  EXPECT_EQ(r.token, 2u);
}

// Full-vocab rescoring with one trigger token is exhaustive search.
TEST(Search, EqualsOracleUnderFullRescoring) {
  Vocabulary v = make_vocab(words(60));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ClassifierParams p = random_params(v.size(), 6, 8, true, 50 + seed, 0.7);
    auto ex = class_examples(40, v.size(), Label::kEntailment, seed);
    for (std::optional<Label> target : {std::optional(Label::kNeutral), std::optional<Label>()}) {
      TriggerSearchConfig cfg;
      cfg.target_label = target;
      cfg.top_k = v.size();
      cfg.max_passes = 1;
      cfg.batch_size = ex.size();
      cfg.seed = seed;
      Trigger t = search_trigger(p, v, ex, cfg);
      OracleResult o = brute_force_trigger_oracle(p, ex, cfg.objective(), v);
      EXPECT_EQ(t.token_ids[0], o.token) << "seed " << seed;
      EXPECT_DOUBLE_EQ(t.final_loss, o.mean_loss);
      const TokenId the[] = {*v.find("the")};
      EXPECT_LE(o.mean_loss, mean_attack_loss(p, ex, the, cfg.objective()));
    }
  }
}

TEST(Search, LossTraceStrictlyDecreasesAndIsDeterministic) {
  Vocabulary v = make_vocab(words(80));
  ClassifierParams p = random_params(v.size(), 6, 8, true, 7, 0.7);
  auto ex = class_examples(300, v.size(), Label::kNeutral, 7);
  TriggerSearchConfig cfg;
  cfg.attacked_class = Label::kNeutral;
  cfg.target_label = Label::kEntailment;
  cfg.trigger_len = 3;
  cfg.top_k = 10;
  cfg.seed = 7;
  Trigger t = search_trigger(p, v, ex, cfg);
  ASSERT_GE(t.loss_trace.size(), 2u);
  for (std::size_t i = 1; i < t.loss_trace.size(); ++i) {
    EXPECT_LT(t.loss_trace[i], t.loss_trace[i - 1]);
  }
  EXPECT_EQ(t.final_loss, t.loss_trace.back());
  Trigger again = search_trigger(p, v, ex, cfg);
  EXPECT_EQ(again.token_ids, t.token_ids);
  EXPECT_EQ(again.loss_trace, t.loss_trace);

  cfg.rescore = false;
  Trigger fast = search_trigger(p, v, ex, cfg);
  EXPECT_EQ(fast.token_ids.size(), 3u);
}

TEST(Search, OracleDominance) {
  Vocabulary v = make_vocab(words(50));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ClassifierParams p = random_params(v.size(), 5, 6, true, 90 + seed, 0.7);
    auto ex = class_examples(30, v.size(), Label::kContradiction, seed);
    TriggerSearchConfig cfg;
    cfg.attacked_class = Label::kContradiction;
    cfg.target_label = Label::kEntailment;
    cfg.top_k = 5;
    cfg.seed = seed;
    Trigger t = search_trigger(p, v, ex, cfg);
    OracleResult o = brute_force_trigger_oracle(p, ex, cfg.objective(), v);
    EXPECT_GE(t.final_loss, o.mean_loss - 1e-15);
  }
}

TEST(Search, RejectsEmptyOrMixedInput) {
  Vocabulary v = make_vocab(words(10));
  ClassifierParams p = random_params(v.size(), 3, 3, true, 1);
  TriggerSearchConfig cfg;
  cfg.target_label = Label::kNeutral;
  EXPECT_THROW(search_trigger(p, v, {}, cfg), Error);
  auto ex = class_examples(4, v.size(), Label::kEntailment, 1);
  ex[2].gold = Label::kNeutral;
  EXPECT_THROW(search_trigger(p, v, ex, cfg), Error);
}

TEST(Search, RecoversPlantedArtifact) {
  SyntheticSpec s;
  s.seed = 5;
  s.rules = {{"blorp", Label::kContradiction, 1.0, 0.15}};
  PlantedCorpus c = generate_planted_corpus(s);
  Vocabulary v = Vocabulary::build(c.examples, 3);
  auto data = encode_all(c.examples, v, kDefaultMaxSeqLen);
  ClassifierParams p = init_params(v, 16, 32, true, 5);
  TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 32;
  tc.learning_rate = 3e-3;
  tc.seed = 5;
  train(p, data, tc);

  std::vector<TokenizedExample> entail;
  for (const auto& ex : data) {
    if (ex.gold == Label::kEntailment) entail.push_back(ex);
  }
  TriggerSearchConfig cfg;
  cfg.target_label = Label::kContradiction;
  cfg.seed = 5;
  Trigger t = search_trigger(p, v, entail, cfg);
  auto table = build_correlation_table(c.examples);
  auto [label, score] = correlation_score(table, t.tokens[0]);
  EXPECT_EQ(label, Label::kContradiction);
  EXPECT_EQ(score, 1.0);
}

// Score of a perturbed row predicts the loss change to first order.
TEST(Linearization, ErrorShrinksWithPerturbation) {
  Vocabulary v = make_vocab(words(30));
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  for (int draw = 0; draw < 5; ++draw) {
    ClassifierParams p = random_params(v.size(), 6, 10, true, 300 + draw, 0.7);
    // The last vocabulary row never occurs in the examples, so moving it only
    // affects the trigger slot.
    auto ex = class_examples(20, v.size() - 1, Label::kEntailment, draw);
    const AttackObjective obj{Label::kContradiction};
    const TokenId cur = 2, spare = static_cast<TokenId>(v.size() - 1);
    std::vector<TokenizedExample> triggered;
    const TokenId trig[] = {cur};
    for (const auto& e : ex) triggered.push_back(apply_trigger(e, trig));
    const std::size_t pos[] = {0};
    auto g = embedding_gradient(p, triggered, Label::kContradiction, pos).per_position[0];
    std::vector<double> u(6);
    double norm = 0;
    for (double& x : u) {
      x = n(rng);
      norm += x * x;
    }
    for (double& x : u) x /= std::sqrt(norm);

    const double base = mean_attack_loss(p, ex, trig, obj);
    std::vector<double> errors;
    for (double delta : {1e-2, 1e-3, 1e-4}) {
      ClassifierParams q = p;
      for (std::size_t k = 0; k < 6; ++k) q.embeddings(spare, k) = p.embeddings(cur, k) + delta * u[k];
      auto scores = candidate_scores(g, q.embeddings, cur, v.size());
      double predicted = 0;
      for (const auto& s : scores) {
        if (s.token == spare) predicted = s.score;
      }
      const TokenId repl[] = {spare};
      const double actual = mean_attack_loss(q, ex, repl, obj) - base;
      errors.push_back(std::abs(predicted - actual) / std::abs(actual));
    }
    EXPECT_LE(errors[1], 0.15 * errors[0]) << "draw " << draw;
    EXPECT_LE(errors[2], 0.15 * errors[1]) << "draw " << draw;
  }
}

TEST(RandomTriggers, ReproducibleAndDistinct) {
  Vocabulary v = make_vocab(words(30));
  auto a = random_triggers(v, 10, 4);
  auto b = random_triggers(v, 10, 4);
  std::set<TokenId> seen;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].token_ids, b[i].token_ids);
    EXPECT_FALSE(Vocabulary::is_reserved(a[i].token_ids[0]));
    seen.insert(a[i].token_ids[0]);
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_THROW(random_triggers(v, 31, 4), Error);
  EXPECT_THROW(random_triggers(v, 0, 4), ConfigError);
  auto even = random_triggers(v, 5, 1, [](TokenId id) { return id % 2 == 0; });
  for (const auto& t : even) EXPECT_EQ(t.token_ids[0] % 2, 0u);
}

TEST(RandomTriggers, UniformUnderChiSquared) {
  Vocabulary v = make_vocab(words(50));
  std::vector<double> counts(v.size(), 0.0);
  const int draws = 10000;
  for (int s = 0; s < draws; ++s) ++counts[random_triggers(v, 1, s)[0].token_ids[0]];
  const double expected = static_cast<double>(draws) / 50;
  double chi2 = 0;
  for (TokenId id = 2; id < v.size(); ++id) {
    chi2 += (counts[id] - expected) * (counts[id] - expected) / expected;
  }
  boost::math::chi_squared dist(49);
  const double p_value = 1.0 - boost::math::cdf(dist, chi2);
  EXPECT_GT(p_value, 0.01) << "chi2 = " << chi2;
}

TEST(TriggerJson, RoundTripAndHashCheck) {
  Vocabulary v = make_vocab(words(10));
  Trigger t = init_trigger(TriggerSearchConfig{}, v);
  t.loss_trace = {1.5, 1.25};
  t.final_loss = 1.25;
  auto j = trigger_to_json(t, v.hash(), "model");
  Trigger back = trigger_from_json(j, v);
  EXPECT_EQ(back.token_ids, t.token_ids);
  EXPECT_EQ(back.loss_trace, t.loss_trace);
  j["vocab_hash"] = "other";
  EXPECT_THROW(trigger_from_json(j, v), Error);
}

}  // namespace
}  // namespace triggerlab
