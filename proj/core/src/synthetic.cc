#include "triggerlab/synthetic.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <set>

namespace triggerlab {

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

std::size_t syllable_count() { return kConsonants.size() * kVowels.size(); }

std::string syllable(std::size_t i) {
  return {kConsonants[i / kVowels.size()], kVowels[i % kVowels.size()]};
}

// Two-syllable pseudo-word; distinct for distinct i < syllable_count()^2.
std::string pseudo_word(std::size_t i) {
  std::size_t n = syllable_count();
  // Stride through the second syllable so neighbouring ids look unrelated.
  return syllable((i * 37) % n) + syllable(i / n);
}

std::size_t max_generated_words() {
  return synthetic_function_words().size() + syllable_count() * syllable_count();
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

struct RuleCounts {
  std::size_t in_label = 0;
  std::size_t in_others = 0;
};

RuleCounts rule_counts(const PlantedRule& r, std::size_t per_class) {
  RuleCounts c;
  if (r.probability > 0.0) {
    c.in_label = static_cast<std::size_t>(
        std::llround(r.coverage * static_cast<double>(per_class)));
    c.in_others = static_cast<std::size_t>(std::llround(
        static_cast<double>(c.in_label) * (1.0 - r.probability) / r.probability));
  } else {
    c.in_others = static_cast<std::size_t>(
        std::llround(r.coverage * static_cast<double>(per_class)));
  }
  return c;
}

std::string render(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  s += '.';
  return s;
}

}  // namespace

const std::vector<std::string>& synthetic_function_words() {
  static const std::vector<std::string> kWords = {"the", "a",  "of",  "in",
                                                  "on",  "is", "and", "with"};
  return kWords;
}

void SyntheticSpec::validate() const {
  const std::size_t n_func = synthetic_function_words().size();
  if (num_topics < 3) throw ConfigError("synthetic: num_topics must be >= 3");
  if (vocab_size < n_func + 2 * num_topics) {
    throw ConfigError("synthetic: vocab_size must be >= " +
                      std::to_string(n_func + 2 * num_topics));
  }
  if (vocab_size > max_generated_words()) {
    throw ConfigError("synthetic: vocab_size exceeds " +
                      std::to_string(max_generated_words()));
  }
  if (examples_per_class == 0) {
    throw ConfigError("synthetic: examples_per_class must be >= 1");
  }
  if (premise_len == 0 || hypothesis_len == 0) {
    throw ConfigError("synthetic: sentence lengths must be >= 1");
  }
  if (!(topic_density >= 0.0 && topic_density <= 1.0) ||
      !(label_noise >= 0.0 && label_noise <= 1.0)) {
    throw ConfigError("synthetic: topic_density and label_noise must be in [0,1]");
  }
  std::set<std::string> seen;
  for (const PlantedRule& r : rules) {
    if (!(r.probability >= 0.0 && r.probability <= 1.0)) {
      throw ConfigError("synthetic: rule '" + r.token +
                        "' probability outside [0,1]");
    }
    if (!(r.coverage > 0.0 && r.coverage <= 1.0)) {
      throw ConfigError("synthetic: rule '" + r.token +
                        "' coverage outside (0,1]");
    }
    auto toks = tokenize(r.token);
    if (toks.size() != 1 || toks[0] != r.token) {
      throw ConfigError("synthetic: planted token '" + r.token +
                        "' is not a single normalized token");
    }
    if (!seen.insert(r.token).second) {
      throw ConfigError("synthetic: planted token '" + r.token + "' repeated");
    }
  }
}

PlantedCorpus generate_planted_corpus(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t per_class = spec.examples_per_class;
  const std::size_t k = spec.num_topics;
  const auto& func = synthetic_function_words();

  std::vector<std::vector<std::string>> topic_words(k);
  std::set<std::string> generated(func.begin(), func.end());
  for (std::size_t j = 0; j + func.size() < spec.vocab_size; ++j) {
    std::string w = pseudo_word(j);
    generated.insert(w);
    topic_words[j % k].push_back(std::move(w));
  }
  for (const PlantedRule& r : spec.rules) {
    if (generated.count(r.token)) {
      throw ConfigError("synthetic: planted token '" + r.token +
                        "' collides with a generated word");
    }
    RuleCounts c = rule_counts(r, per_class);
    if (c.in_label + c.in_others == 0) {
      throw ConfigError("synthetic: rule '" + r.token +
                        "' plants no occurrences at this corpus size");
    }
    if (c.in_label > per_class || (c.in_others + 1) / 2 > per_class) {
      throw ConfigError("synthetic: rule '" + r.token +
                        "' is infeasible: needs more carriers than examples");
    }
  }

  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution topic_slot(spec.topic_density);
  std::bernoulli_distribution noisy(spec.label_noise);

  auto sentence = [&](std::size_t topic, std::size_t len) {
    std::vector<std::string> toks(len);
    std::size_t forced = uniform_index(rng, len);
    const auto& pool = topic_words[topic];
    for (std::size_t i = 0; i < len; ++i) {
      if (i == forced || topic_slot(rng)) {
        toks[i] = pool[uniform_index(rng, pool.size())];
      } else {
        toks[i] = func[uniform_index(rng, func.size())];
      }
    }
    return toks;
  };

  struct Draft {
    std::vector<std::string> premise, hypothesis;
    Label gold;
  };
  // by_class[l][i]
  std::vector<std::vector<Draft>> by_class(kNumLabels);
  for (Label l : kAllLabels) {
    auto& drafts = by_class[label_index(l)];
    drafts.reserve(per_class);
    for (std::size_t i = 0; i < per_class; ++i) {
      std::size_t a = i % k;
      std::size_t b = a;
      if (noisy(rng)) {
        b = uniform_index(rng, k);
      } else if (l == Label::kContradiction) {
        b = (a + k / 2) % k;
      } else if (l == Label::kNeutral) {
        // Uniform over topics that are neither a nor its opposite.
        std::vector<std::size_t> other;
        for (std::size_t t = 0; t < k; ++t) {
          if (t != a && t != (a + k / 2) % k) other.push_back(t);
        }
        b = other[uniform_index(rng, other.size())];
      }
      drafts.push_back({sentence(a, spec.premise_len),
                        sentence(b, spec.hypothesis_len), l});
    }
  }

  auto plant_into = [&](std::vector<Draft>& drafts, std::size_t count,
                        const std::string& token) {
    std::vector<std::size_t> idx(drafts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = i + uniform_index(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
      auto& hyp = drafts[idx[i]].hypothesis;
      std::size_t pos = uniform_index(rng, hyp.size() + 1);
      hyp.insert(hyp.begin() + static_cast<std::ptrdiff_t>(pos), token);
    }
  };

  for (const PlantedRule& r : spec.rules) {
    RuleCounts c = rule_counts(r, per_class);
    plant_into(by_class[label_index(r.label)], c.in_label, r.token);
    std::vector<Label> others;
    for (Label l : kAllLabels) {
      if (l != r.label) others.push_back(l);
    }
    std::size_t first = (c.in_others + 1) / 2;
    plant_into(by_class[label_index(others[0])], first, r.token);
    plant_into(by_class[label_index(others[1])], c.in_others - first, r.token);
  }

  PlantedCorpus out;
  out.examples.reserve(per_class * kNumLabels);
  for (auto& drafts : by_class) {
    for (Draft& d : drafts) {
      for (const auto& t : d.hypothesis) ++out.ground_truth[t][label_index(d.gold)];
      out.examples.push_back({render(d.premise), render(d.hypothesis), d.gold, {}});
    }
  }
  std::shuffle(out.examples.begin(), out.examples.end(), rng);
  for (std::size_t i = 0; i < out.examples.size(); ++i) {
    out.examples[i].id = "synth-" + std::to_string(spec.seed) + "-" + std::to_string(i);
  }
  return out;
}

nlohmann::json to_json(const SyntheticSpec& spec) {
  nlohmann::json rules = nlohmann::json::array();
  for (const PlantedRule& r : spec.rules) {
    rules.push_back({{"token", r.token},
                     {"label", label_name(r.label)},
                     {"probability", r.probability},
                     {"coverage", r.coverage}});
  }
  return {{"vocab_size", spec.vocab_size},
          {"examples_per_class", spec.examples_per_class},
          {"rules", rules},
          {"seed", spec.seed},
          {"num_topics", spec.num_topics},
          {"premise_len", spec.premise_len},
          {"hypothesis_len", spec.hypothesis_len},
          {"topic_density", spec.topic_density},
          {"label_noise", spec.label_noise}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.vocab_size = j.value("vocab_size", s.vocab_size);
    s.examples_per_class = j.value("examples_per_class", s.examples_per_class);
    s.seed = j.value("seed", s.seed);
    s.num_topics = j.value("num_topics", s.num_topics);
    s.premise_len = j.value("premise_len", s.premise_len);
    s.hypothesis_len = j.value("hypothesis_len", s.hypothesis_len);
    s.topic_density = j.value("topic_density", s.topic_density);
    s.label_noise = j.value("label_noise", s.label_noise);
    for (const auto& r : j.value("rules", nlohmann::json::array())) {
      PlantedRule rule;
      rule.token = r.at("token").get<std::string>();
      auto label = parse_label(r.at("label").get<std::string>());
      if (!label) throw ConfigError("synthetic: unknown rule label");
      rule.label = *label;
      rule.probability = r.at("probability").get<double>();
      rule.coverage = r.value("coverage", rule.coverage);
      s.rules.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

nlohmann::json ground_truth_to_json(const SyntheticSpec& spec,
                                    const WordLabelCounts& counts) {
  nlohmann::json c = nlohmann::json::object();
  for (const auto& [word, by_label] : counts) c[word] = by_label;
  return {{"spec", to_json(spec)}, {"seed", spec.seed}, {"counts", c}};
}

}  // namespace triggerlab
