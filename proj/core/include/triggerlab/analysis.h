#ifndef TRIGGERLAB_ANALYSIS_H_
#define TRIGGERLAB_ANALYSIS_H_

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "triggerlab/common.h"
#include "triggerlab/corpus.h"

namespace triggerlab {

enum class Side { kHypothesis, kPremise, kBoth };

std::string_view side_name(Side side);
Side parse_side(std::string_view name);

// p(l | w) = count(w, l) / count(w) for one word.
struct WordStats {
  std::array<std::uint64_t, kNumLabels> by_label{};
  std::uint64_t total = 0;
  Label majority = Label::kEntailment;  // ties -> lowest label code
  double score = 0.0;                   // count(w, majority) / count(w)

  bool operator==(const WordStats&) const = default;
};

class CorrelationTable {
 public:
  // Words with total count below min_count are dropped.
  static CorrelationTable from_counts(const WordLabelCounts& counts,
                                      std::uint64_t min_count = 1);

  const std::map<std::string, WordStats>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  bool contains(const std::string& word) const { return words_.count(word) > 0; }
  // Throws Error for unknown words.
  const WordStats& at(const std::string& word) const;

  bool operator==(const CorrelationTable&) const = default;

 private:
  std::map<std::string, WordStats> words_;
};

WordLabelCounts count_words(std::span<const Example> examples, Side side);

// Per-occurrence counting. Throws Error if nothing survives min_count.
CorrelationTable build_correlation_table(std::span<const Example> examples,
                                         Side side = Side::kHypothesis,
                                         std::uint64_t min_count = 1);

std::pair<Label, double> correlation_score(const CorrelationTable& table,
                                           const std::string& word);

struct RankedWord {
  std::string word;
  double score = 0.0;
  std::uint64_t count = 0;

  bool operator==(const RankedWord&) const = default;
};

// Words whose majority class is `label`, by score desc, count desc, word asc.
// Words with fewer than min_count occurrences are skipped.
std::vector<RankedWord> top_correlated(const CorrelationTable& table, Label label,
                                       std::size_t k, std::uint64_t min_count = 1);

// Sum of counts over top_correlated(table, label, k, min_count).
std::uint64_t cumulative_frequency(const CorrelationTable& table, Label label,
                                   std::size_t k, std::uint64_t min_count = 1);

nlohmann::json correlation_report_json(const CorrelationTable& table, std::size_t k,
                                       std::uint64_t rank_min_count);
// Word / majority class / score / count per label block.
std::string render_correlation_report(const CorrelationTable& table, std::size_t k,
                                      std::uint64_t rank_min_count);

}  // namespace triggerlab

#endif  // TRIGGERLAB_ANALYSIS_H_
