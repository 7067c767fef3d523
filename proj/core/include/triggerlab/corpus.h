#ifndef TRIGGERLAB_CORPUS_H_
#define TRIGGERLAB_CORPUS_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "triggerlab/common.h"

namespace triggerlab {

struct Example {
  std::string premise;
  std::string hypothesis;
  Label gold = Label::kEntailment;
  std::string id;

  bool operator==(const Example&) const = default;
};

// Per-word occurrence counts split by gold label.
using WordLabelCounts =
    std::map<std::string, std::array<std::uint64_t, kNumLabels>>;

struct LoadResult {
  std::vector<Example> examples;
  // Lines whose gold_label was "-" (no annotator consensus).
  std::size_t skipped = 0;
};

// Reads SNLI-style JSON lines: sentence1, sentence2, gold_label, optional
// pairID. Unknown extra fields are ignored. Throws ParseError with the
// offending line number on malformed JSON or an unknown label.
LoadResult load_snli_jsonl(const std::filesystem::path& path,
                           std::string_view split);
LoadResult parse_snli_jsonl(std::istream& in, std::string_view split);

void write_snli_jsonl(std::ostream& out, std::span<const Example> examples);

// Lowercase, split on whitespace, strip leading/trailing ASCII punctuation
// from each token, drop empties. Idempotent.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kPad = 1;
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kPadToken = "<pad>";

  // Counts tokens over premises and hypotheses. Ids are assigned by
  // descending frequency, ties broken lexicographically.
  static Vocabulary build(std::span<const Example> examples,
                          std::uint64_t min_count = 3);

  // Rebuilds from a full id-ordered token list (reserved entries included).
  static Vocabulary from_tokens(std::vector<std::string> tokens,
                                std::vector<std::uint64_t> frequencies,
                                std::uint64_t min_count);

  std::size_t size() const { return tokens_.size(); }
  std::optional<TokenId> find(std::string_view token) const;
  // UNK for unknown tokens.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::uint64_t frequency(TokenId id) const { return frequencies_.at(id); }
  std::uint64_t min_count() const { return min_count_; }
  static bool is_reserved(TokenId id) { return id == kUnk || id == kPad; }

  const std::vector<std::string>& tokens() const { return tokens_; }

  // SHA-256 over the id-ordered token list; identifies a vocabulary in
  // checkpoints and trigger artifacts.
  const std::string& hash() const { return hash_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& o) const {
    return tokens_ == o.tokens_ && frequencies_ == o.frequencies_;
  }

 private:
  void index();

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> frequencies_;
  std::unordered_map<std::string, TokenId> ids_;
  std::uint64_t min_count_ = 0;
  std::string hash_;
};

struct TokenizedExample {
  std::vector<TokenId> premise_ids;
  std::vector<TokenId> hypothesis_ids;
  Label gold = Label::kEntailment;

  bool operator==(const TokenizedExample&) const = default;
};

inline constexpr std::size_t kDefaultMaxSeqLen = 128;

// OOV tokens map to UNK; each side keeps its first max_seq_len ids.
TokenizedExample encode(const Example& example, const Vocabulary& vocab,
                        std::size_t max_seq_len = kDefaultMaxSeqLen);
std::vector<TokenizedExample> encode_all(std::span<const Example> examples,
                                         const Vocabulary& vocab,
                                         std::size_t max_seq_len);
std::vector<std::string> decode(std::span<const TokenId> ids,
                                const Vocabulary& vocab);

// Exactly n_per_class examples of every label, drawn without replacement,
// returned in a seed-determined shuffled order.
std::vector<Example> sample_per_class(std::span<const Example> examples,
                                      std::size_t n_per_class,
                                      std::uint64_t seed);

}  // namespace triggerlab

#endif  // TRIGGERLAB_CORPUS_H_
