#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "test_util.h"
#include "triggerlab/analysis.h"
#include "triggerlab/synthetic.h"

namespace triggerlab {
namespace {

Example ex(const std::string& hyp, Label l) { return {"premise text", hyp, l, ""}; }

TEST(CorrelationTable, MajorityAndScore) {
  std::vector<Example> data = {ex("zap", Label::kContradiction), ex("zap", Label::kContradiction),
                               ex("zap zip", Label::kContradiction), ex("zap", Label::kEntailment)};
  auto table = build_correlation_table(data);
  const WordStats& s = table.at("zap");
  EXPECT_EQ(s.total, 4u);
  EXPECT_EQ(s.majority, Label::kContradiction);
  EXPECT_EQ(s.score, 0.75);
  EXPECT_EQ(correlation_score(table, "zip"), std::make_pair(Label::kContradiction, 1.0));
  EXPECT_THROW(table.at("unknown"), Error);
  EXPECT_THROW(correlation_score(table, "unknown"), Error);
}

TEST(CorrelationTable, PerOccurrenceAndSides) {
  std::vector<Example> data = {{"cat cat", "dog dog dog", Label::kNeutral, ""}};
  EXPECT_EQ(build_correlation_table(data, Side::kHypothesis).at("dog").total, 3u);
  EXPECT_FALSE(build_correlation_table(data, Side::kHypothesis).contains("cat"));
  EXPECT_EQ(build_correlation_table(data, Side::kPremise).at("cat").total, 2u);
  auto both = build_correlation_table(data, Side::kBoth);
  EXPECT_EQ(both.size(), 2u);
  EXPECT_EQ(parse_side("both"), Side::kBoth);
  EXPECT_THROW(parse_side("left"), ConfigError);
}

TEST(CorrelationTable, MinCountAndEmpty) {
  std::vector<Example> data = {ex("a a b", Label::kNeutral)};
  auto table = build_correlation_table(data, Side::kHypothesis, 2);
  EXPECT_TRUE(table.contains("a"));
  EXPECT_FALSE(table.contains("b"));
  EXPECT_THROW(build_correlation_table(data, Side::kHypothesis, 5), Error);
  EXPECT_THROW(build_correlation_table({}, Side::kHypothesis), Error);
}

std::vector<Example> random_corpus(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> w(0, 25), len(1, 6), lab(0, 2);
  std::vector<Example> out;
  for (int i = 0; i < 300; ++i) {
    std::string hyp;
    for (int k = 0, n = len(rng); k < n; ++k) hyp += "w" + std::to_string(w(rng)) + " ";
    out.push_back(ex(hyp, label_from_index(lab(rng))));
  }
  return out;
}

TEST(CorrelationTable, Invariants) {
  auto data = random_corpus(3);
  auto table = build_correlation_table(data);
  for (const auto& [word, s] : table.words()) {
    EXPECT_EQ(s.by_label[0] + s.by_label[1] + s.by_label[2], s.total);
    const auto mx = *std::max_element(s.by_label.begin(), s.by_label.end());
    EXPECT_EQ(s.score, static_cast<double>(mx) / s.total);
    EXPECT_EQ(s.by_label[label_index(s.majority)], mx);
  }
}

TEST(CorrelationTable, OrderIndependent) {
  auto data = random_corpus(4);
  auto table = build_correlation_table(data);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(data.begin(), data.end(), rng);
    EXPECT_EQ(build_correlation_table(data), table);
  }
}

TEST(CorrelationTable, ScaleFreeUnderDuplication) {
  auto data = random_corpus(5);
  auto table = build_correlation_table(data);
  auto doubled = data;
  doubled.insert(doubled.end(), data.begin(), data.end());
  auto t2 = build_correlation_table(doubled);
  ASSERT_EQ(t2.size(), table.size());
  for (const auto& [word, s] : table.words()) {
    EXPECT_EQ(t2.at(word).score, s.score);
    EXPECT_EQ(t2.at(word).total, 2 * s.total);
    EXPECT_EQ(t2.at(word).majority, s.majority);
  }
}

TEST(TopCorrelated, PlantedOrdering) {
  SyntheticSpec s;
  s.seed = 6;
  s.rules = {{"certain", Label::kContradiction, 1.0, 0.1},
             {"likely", Label::kContradiction, 0.9, 0.1}};
  PlantedCorpus c = generate_planted_corpus(s);
  auto table = build_correlation_table(c.examples);
  auto top = top_correlated(table, Label::kContradiction, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].word, "certain");
  EXPECT_EQ(top[1].word, "likely");
  EXPECT_EQ(correlation_score(table, "certain"), std::make_pair(Label::kContradiction, 1.0));
  // Generator ground truth: total occurrences of the two words.
  const auto& gt = c.ground_truth;
  EXPECT_EQ(cumulative_frequency(table, Label::kContradiction, 2),
            gt.at("certain")[2] + gt.at("certain")[0] + gt.at("certain")[1] +
                gt.at("likely")[0] + gt.at("likely")[1] + gt.at("likely")[2]);
}

TEST(TopCorrelated, KLargerThanAvailableAndEmptyBucket) {
  std::vector<Example> data = {ex("a b", Label::kNeutral), ex("c", Label::kEntailment)};
  auto table = build_correlation_table(data);
  EXPECT_EQ(top_correlated(table, Label::kNeutral, 10).size(), 2u);
  EXPECT_TRUE(top_correlated(table, Label::kContradiction, 5).empty());
  EXPECT_EQ(cumulative_frequency(table, Label::kContradiction, 5), 0u);
  EXPECT_EQ(cumulative_frequency(table, Label::kNeutral, 5), 2u);
}

TEST(TopCorrelated, TieBreaks) {
  std::vector<Example> data = {ex("b b a a z", Label::kNeutral), ex("c", Label::kNeutral)};
  auto top = top_correlated(build_correlation_table(data), Label::kNeutral, 4);
  ASSERT_EQ(top.size(), 4u);
  EXPECT_EQ(top[0].word, "a");  // score 1, count 2, word asc
  EXPECT_EQ(top[1].word, "b");
  EXPECT_EQ(top[2].word, "c");
  EXPECT_EQ(top[3].word, "z");
  EXPECT_EQ(top_correlated(build_correlation_table(data), Label::kNeutral, 4, 2).size(), 2u);
}

TEST(Report, JsonAndTextHonorK) {
  auto table = build_correlation_table(random_corpus(8));
  auto j = correlation_report_json(table, 3, 1);
  for (Label l : kAllLabels) {
    EXPECT_LE(j.at("classes").at(std::string(label_name(l))).at("top").size(), 3u);
  }
  std::string text = render_correlation_report(table, 3, 1);
  EXPECT_NE(text.find("cumulative frequency"), std::string::npos);
}

}  // namespace
}  // namespace triggerlab
