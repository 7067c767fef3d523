#ifndef TRIGGERLAB_SYNTHETIC_H_
#define TRIGGERLAB_SYNTHETIC_H_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "triggerlab/common.h"
#include "triggerlab/corpus.h"

namespace triggerlab {

// A giveaway word w planted into hypotheses so that count(w, label) /
// count(w) realizes `probability`. `coverage` is the fraction of `label`
// examples that receive w (or of the other classes when probability is 0).
struct PlantedRule {
  std::string token;
  Label label = Label::kContradiction;
  double probability = 1.0;
  double coverage = 0.15;
};

// Premise/hypothesis pairs built from topic words. The label is carried by
// the relation between premise topic a and hypothesis topic b:
//   entailment     b == a
//   contradiction  b == a + num_topics/2  (mod num_topics)
//   neutral        any other topic
// so every non-planted hypothesis word is label-neutral on its own. A
// `label_noise` fraction of examples draws b uniformly instead.
struct SyntheticSpec {
  std::size_t vocab_size = 60;  // generated word types, planted excluded
  std::size_t examples_per_class = 3000;
  std::vector<PlantedRule> rules;
  std::uint64_t seed = 0;

  std::size_t num_topics = 4;
  std::size_t premise_len = 8;
  std::size_t hypothesis_len = 5;
  // Probability that a hypothesis slot holds a topic word rather than a
  // function word. The first slot is always a topic word.
  double topic_density = 0.6;
  double label_noise = 0.1;

  void validate() const;
};

struct PlantedCorpus {
  std::vector<Example> examples;
  // Exact realized hypothesis-side per-occurrence counts for every word.
  WordLabelCounts ground_truth;
};

// Throws ConfigError for invalid or infeasible specs.
PlantedCorpus generate_planted_corpus(const SyntheticSpec& spec);

// Function words shared by all topics; always contains "the" and "a".
const std::vector<std::string>& synthetic_function_words();

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
nlohmann::json ground_truth_to_json(const SyntheticSpec& spec,
                                    const WordLabelCounts& counts);

}  // namespace triggerlab

#endif  // TRIGGERLAB_SYNTHETIC_H_
