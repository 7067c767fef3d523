#include "triggerlab/analysis.h"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace triggerlab {

std::string_view side_name(Side side) {
  switch (side) {
    case Side::kHypothesis:
      return "hypothesis";
    case Side::kPremise:
      return "premise";
    case Side::kBoth:
      return "both";
  }
  return "?";
}

Side parse_side(std::string_view name) {
  for (Side s : {Side::kHypothesis, Side::kPremise, Side::kBoth}) {
    if (side_name(s) == name) return s;
  }
  throw ConfigError("unknown side '" + std::string(name) + "'");
}

CorrelationTable CorrelationTable::from_counts(const WordLabelCounts& counts,
                                               std::uint64_t min_count) {
  CorrelationTable t;
  for (const auto& [word, by_label] : counts) {
    WordStats s;
    s.by_label = by_label;
    for (auto n : by_label) s.total += n;
    if (s.total == 0 || s.total < min_count) continue;
    std::size_t best = 0;
    for (std::size_t l = 1; l < kNumLabels; ++l) {
      if (by_label[l] > by_label[best]) best = l;
    }
    s.majority = label_from_index(best);
    s.score = static_cast<double>(by_label[best]) / static_cast<double>(s.total);
    t.words_.emplace(word, s);
  }
  return t;
}

const WordStats& CorrelationTable::at(const std::string& word) const {
  auto it = words_.find(word);
  if (it == words_.end()) throw Error("correlation table: unknown word '" + word + "'");
  return it->second;
}

WordLabelCounts count_words(std::span<const Example> examples, Side side) {
  WordLabelCounts counts;
  for (const Example& ex : examples) {
    const std::size_t l = label_index(ex.gold);
    if (side != Side::kHypothesis) {
      for (const auto& t : tokenize(ex.premise)) ++counts[t][l];
    }
    if (side != Side::kPremise) {
      for (const auto& t : tokenize(ex.hypothesis)) ++counts[t][l];
    }
  }
  return counts;
}

CorrelationTable build_correlation_table(std::span<const Example> examples, Side side,
                                         std::uint64_t min_count) {
  if (examples.empty()) throw Error("build_correlation_table: no examples");
  CorrelationTable t = CorrelationTable::from_counts(count_words(examples, side), min_count);
  if (t.size() == 0) {
    throw Error("build_correlation_table: no word reaches min_count=" +
                std::to_string(min_count));
  }
  return t;
}

std::pair<Label, double> correlation_score(const CorrelationTable& table,
                                           const std::string& word) {
  const WordStats& s = table.at(word);
  return {s.majority, s.score};
}

std::vector<RankedWord> top_correlated(const CorrelationTable& table, Label label,
                                       std::size_t k, std::uint64_t min_count) {
  std::vector<RankedWord> out;
  for (const auto& [word, s] : table.words()) {
    if (s.majority == label && s.total >= min_count) out.push_back({word, s.score, s.total});
  }
  std::sort(out.begin(), out.end(), [](const RankedWord& a, const RankedWord& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.count != b.count) return a.count > b.count;
    return a.word < b.word;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

std::uint64_t cumulative_frequency(const CorrelationTable& table, Label label,
                                   std::size_t k, std::uint64_t min_count) {
  std::uint64_t sum = 0;
  for (const auto& r : top_correlated(table, label, k, min_count)) sum += r.count;
  return sum;
}

nlohmann::json correlation_report_json(const CorrelationTable& table, std::size_t k,
                                       std::uint64_t rank_min_count) {
  nlohmann::json classes = nlohmann::json::object();
  for (Label l : kAllLabels) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : top_correlated(table, l, k, rank_min_count)) {
      rows.push_back({{"word", r.word},
                      {"majority_class", label_index(l)},
                      {"score", r.score},
                      {"count", r.count}});
    }
    classes[std::string(label_name(l))] = {
        {"top", rows},
        {"cumulative_frequency", cumulative_frequency(table, l, k, rank_min_count)}};
  }
  return {{"k", k},
          {"rank_min_count", rank_min_count},
          {"words", table.size()},
          {"classes", classes}};
}

std::string render_correlation_report(const CorrelationTable& table, std::size_t k,
                                      std::uint64_t rank_min_count) {
  std::ostringstream os;
  char buf[128];
  for (Label l : kAllLabels) {
    auto rows = top_correlated(table, l, k, rank_min_count);
    std::snprintf(buf, sizeof buf, "%s (%zu)\n", std::string(label_name(l)).c_str(),
                  label_index(l));
    os << buf;
    std::snprintf(buf, sizeof buf, "  %-20s %8s %8s %10s\n", "word", "majority",
                  "score", "count");
    os << buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "  %-20s %8zu %8.2f %10llu\n", r.word.c_str(),
                    label_index(l), r.score, static_cast<unsigned long long>(r.count));
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "  cumulative frequency (top %zu): %llu\n\n", k,
                  static_cast<unsigned long long>(
                      cumulative_frequency(table, l, k, rank_min_count)));
    os << buf;
  }
  return os.str();
}

}  // namespace triggerlab
