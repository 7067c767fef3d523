#include "triggerlab/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>

namespace triggerlab {

namespace {

const nlohmann::json& require_string(const nlohmann::json& obj,
                                     const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError("line " + std::to_string(line) + ": missing string field '" +
                         field + "'",
                     line);
  }
  return *it;
}

}  // namespace

LoadResult parse_snli_jsonl(std::istream& in, std::string_view split) {
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) +
                           ": malformed JSON: " + e.what(),
                       line_no);
    }
    if (!obj.is_object()) {
      throw ParseError("line " + std::to_string(line_no) + ": not an object",
                       line_no);
    }
    const std::string& gold = require_string(obj, "gold_label", line_no)
                                  .get_ref<const std::string&>();
    if (gold == "-") {
      ++result.skipped;
      continue;
    }
    auto label = parse_label(gold);
    if (!label) {
      throw ParseError("line " + std::to_string(line_no) +
                           ": unknown gold_label '" + gold + "'",
                       line_no);
    }
    Example ex;
    ex.premise = require_string(obj, "sentence1", line_no).get<std::string>();
    ex.hypothesis = require_string(obj, "sentence2", line_no).get<std::string>();
    ex.gold = *label;
    if (auto it = obj.find("pairID"); it != obj.end() && it->is_string()) {
      ex.id = it->get<std::string>();
    } else {
      ex.id = std::string(split) + ":" + std::to_string(line_no);
    }
    result.examples.push_back(std::move(ex));
  }
  if (in.bad()) throw Error("read error in " + std::string(split));
  return result;
}

LoadResult load_snli_jsonl(const std::filesystem::path& path,
                           std::string_view split) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return parse_snli_jsonl(in, split);
}

void write_snli_jsonl(std::ostream& out, std::span<const Example> examples) {
  for (const Example& ex : examples) {
    nlohmann::json j = {{"sentence1", ex.premise},
                        {"sentence2", ex.hypothesis},
                        {"gold_label", label_name(ex.gold)},
                        {"pairID", ex.id}};
    out << j.dump() << '\n';
  }
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() &&
           std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    std::size_t start = i;
    while (i < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    std::size_t b = start, e = i;
    while (b < e && std::ispunct(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(text[e - 1]))) --e;
    if (b == e) continue;
    std::string tok(text.substr(b, e - b));
    for (char& c : tok) {
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

Vocabulary Vocabulary::build(std::span<const Example> examples,
                             std::uint64_t min_count) {
  if (examples.empty()) throw Error("build_vocabulary: no examples");
  std::map<std::string, std::uint64_t> counts;
  for (const Example& ex : examples) {
    for (auto& t : tokenize(ex.premise)) ++counts[t];
    for (auto& t : tokenize(ex.hypothesis)) ++counts[t];
  }
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  if (kept.empty()) {
    throw Error("build_vocabulary: no token reaches min_count=" +
                std::to_string(min_count));
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  std::vector<std::string> tokens = {std::string(kUnkToken),
                                     std::string(kPadToken)};
  std::vector<std::uint64_t> freqs = {0, 0};
  for (auto& [tok, n] : kept) {
    tokens.push_back(tok);
    freqs.push_back(n);
  }
  return from_tokens(std::move(tokens), std::move(freqs), min_count);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens,
                                   std::vector<std::uint64_t> frequencies,
                                   std::uint64_t min_count) {
  if (tokens.size() < 2 || tokens[kUnk] != kUnkToken ||
      tokens[kPad] != kPadToken) {
    throw ParseError("vocabulary: reserved entries missing");
  }
  if (frequencies.size() != tokens.size()) {
    throw ParseError("vocabulary: token/frequency length mismatch");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.frequencies_ = std::move(frequencies);
  v.min_count_ = min_count;
  v.index();
  return v;
}

void Vocabulary::index() {
  ids_.clear();
  std::string joined;
  for (TokenId i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], i).second) {
      throw ParseError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
    joined += tokens_[i];
    joined += '\n';
  }
  hash_ = sha256_hex(joined);
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end() || is_reserved(it->second)) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
  return find(token).value_or(kUnk);
}

nlohmann::json Vocabulary::to_json() const {
  return {{"format_version", 1},
          {"min_count", min_count_},
          {"hash", hash_},
          {"tokens", tokens_},
          {"frequencies", frequencies_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  try {
    Vocabulary v = from_tokens(j.at("tokens").get<std::vector<std::string>>(),
                               j.at("frequencies").get<std::vector<std::uint64_t>>(),
                               j.at("min_count").get<std::uint64_t>());
    if (auto it = j.find("hash"); it != j.end() && *it != v.hash()) {
      throw ParseError("vocabulary: stored hash does not match tokens");
    }
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("vocabulary: ") + e.what());
  }
}

TokenizedExample encode(const Example& example, const Vocabulary& vocab,
                        std::size_t max_seq_len) {
  auto side = [&](const std::string& text, const char* name) {
    auto toks = tokenize(text);
    if (toks.empty()) {
      throw Error(std::string("encode: empty ") + name + " in example '" +
                  example.id + "'");
    }
    std::vector<TokenId> ids;
    std::size_t n = std::min(toks.size(), max_seq_len);
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(vocab.id(toks[i]));
    return ids;
  };
  TokenizedExample out;
  out.premise_ids = side(example.premise, "premise");
  out.hypothesis_ids = side(example.hypothesis, "hypothesis");
  out.gold = example.gold;
  return out;
}

std::vector<TokenizedExample> encode_all(std::span<const Example> examples,
                                         const Vocabulary& vocab,
                                         std::size_t max_seq_len) {
  std::vector<TokenizedExample> out;
  out.reserve(examples.size());
  for (const Example& ex : examples) out.push_back(encode(ex, vocab, max_seq_len));
  return out;
}

std::vector<std::string> decode(std::span<const TokenId> ids,
                                const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(vocab.token(id));
  return out;
}

std::vector<Example> sample_per_class(std::span<const Example> examples,
                                      std::size_t n_per_class,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Example> out;
  out.reserve(n_per_class * kNumLabels);
  for (Label l : kAllLabels) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (examples[i].gold == l) idx.push_back(i);
    }
    if (idx.size() < n_per_class) {
      throw Error("sample_per_class: class '" + std::string(label_name(l)) +
                  "' has " + std::to_string(idx.size()) + " examples, need " +
                  std::to_string(n_per_class));
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < n_per_class; ++i) out.push_back(examples[idx[i]]);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace triggerlab
