#ifndef TRIGGERLAB_COMMON_H_
#define TRIGGERLAB_COMMON_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace triggerlab {

using TokenId = std::uint32_t;

// NLI label scheme. Integer codes are part of every file format.
enum class Label : int { kEntailment = 0, kNeutral = 1, kContradiction = 2 };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::array<Label, kNumLabels> kAllLabels = {
    Label::kEntailment, Label::kNeutral, Label::kContradiction};

constexpr std::size_t label_index(Label l) { return static_cast<std::size_t>(l); }
constexpr Label label_from_index(std::size_t i) { return static_cast<Label>(i); }

// "entailment" / "neutral" / "contradiction".
std::string_view label_name(Label l);
// Inverse of label_name; nullopt for anything else.
std::optional<Label> parse_label(std::string_view name);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. line() is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Invalid user-supplied configuration (bad flag combination, bad value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Writes via a sibling temporary file and rename so readers never observe a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace triggerlab

#endif  // TRIGGERLAB_COMMON_H_
