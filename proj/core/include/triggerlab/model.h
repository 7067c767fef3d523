#ifndef TRIGGERLAB_MODEL_H_
#define TRIGGERLAB_MODEL_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "triggerlab/common.h"
#include "triggerlab/corpus.h"

namespace triggerlab {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Mean-pooled premise/hypothesis embeddings -> ReLU hidden layer -> 3 logits.
//   x = [mean(premise) , mean(hypothesis)]   (premise part omitted when
//                                              use_premise is false)
//   h = relu(x W1 + b1),  logits = h W2 + b2
// PAD tokens are excluded from the means.
struct ClassifierParams {
  Matrix embeddings;  // V x D
  Matrix w1;          // (2D or D) x H
  std::vector<double> b1;
  Matrix w2;          // H x 3
  std::vector<double> b2;
  bool use_premise = true;

  std::size_t vocab_size() const { return embeddings.rows(); }
  std::size_t embed_dim() const { return embeddings.cols(); }
  std::size_t hidden_dim() const { return b1.size(); }
  std::size_t input_dim() const { return use_premise ? 2 * embed_dim() : embed_dim(); }

  // Throws Error if shapes disagree or any entry is non-finite.
  void validate() const;
  // SHA-256 over the canonical checkpoint serialization of the arrays.
  std::string hash() const;

  bool operator==(const ClassifierParams&) const = default;
};

ClassifierParams zero_params(std::size_t vocab_size, std::size_t embed_dim,
                             std::size_t hidden_dim, bool use_premise);

using Logits = std::array<double, kNumLabels>;

// Replaces the embedding looked up at one hypothesis position.
struct EmbeddingOverride {
  std::size_t position = 0;
  std::span<const double> vector;
};

struct ForwardCache {
  std::vector<double> input;   // pooled x
  std::vector<double> hidden_pre;
  std::vector<double> hidden;
  std::size_t premise_count = 0;     // non-PAD tokens pooled
  std::size_t hypothesis_count = 0;
};

Logits forward(const ClassifierParams& params, const TokenizedExample& ex,
               ForwardCache* cache = nullptr,
               std::optional<EmbeddingOverride> override_at = std::nullopt);

std::array<double, kNumLabels> softmax(const Logits& logits);
// Cross-entropy of softmax(logits) at `gold`, max-subtracted.
double cross_entropy(const Logits& logits, Label gold);
// Ties resolve to the smallest label code.
Label argmax_label(const Logits& logits);
Label predict(const ClassifierParams& params, const TokenizedExample& ex);

struct EmbeddingGradient {
  // One D-vector per requested hypothesis position: batch mean of
  // dLoss/d(embedding at that position).
  std::vector<std::vector<double>> per_position;
  double mean_loss = 0.0;
};

// Cross-entropy toward labels[i] for batch[i].
EmbeddingGradient embedding_gradient(const ClassifierParams& params,
                                     std::span<const TokenizedExample> batch,
                                     std::span<const Label> labels,
                                     std::span<const std::size_t> positions);
// Cross-entropy toward the same label for every example.
EmbeddingGradient embedding_gradient(const ClassifierParams& params,
                                     std::span<const TokenizedExample> batch,
                                     Label label,
                                     std::span<const std::size_t> positions);

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  int epochs = 3;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t max_seq_len = kDefaultMaxSeqLen;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j,
                                   TrainConfig defaults = {});

struct EpochStats {
  double mean_loss = 0.0;
  double accuracy = 0.0;  // of predictions made before each update

  bool operator==(const EpochStats&) const = default;
};

using TrainHistory = std::vector<EpochStats>;

// Minibatch training with a fresh optimizer state. Example order is
// reshuffled every epoch from cfg.seed. Throws Error on non-finite loss.
TrainHistory train(ClassifierParams& params,
                   std::span<const TokenizedExample> data,
                   const TrainConfig& cfg);

double accuracy(const ClassifierParams& params,
                std::span<const TokenizedExample> data);

// Embeddings ~ U(-0.1, 0.1), dense weights Xavier-uniform, biases zero.
// Rows of tokens found in `glove_path` are copied from it.
ClassifierParams init_params(const Vocabulary& vocab, std::size_t embed_dim,
                             std::size_t hidden_dim, bool use_premise,
                             std::uint64_t seed,
                             const std::optional<std::filesystem::path>& glove_path =
                                 std::nullopt);

// Returns the number of vocabulary rows overwritten. Throws ParseError when
// a line's dimension differs from the embedding dimension.
std::size_t load_glove(std::istream& in, const Vocabulary& vocab,
                       Matrix& embeddings);

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ClassifierParams params;
  std::string vocab_hash;
  // Free-form config snapshot; round-trips verbatim.
  nlohmann::json provenance = nlohmann::json::object();
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// When expected_vocab_hash is given it must match the stored one.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_vocab_hash =
                               std::nullopt);

}  // namespace triggerlab

#endif  // TRIGGERLAB_MODEL_H_
