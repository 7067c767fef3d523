#include "triggerlab/model.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>

namespace triggerlab {

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_ids(const ClassifierParams& p, std::span<const TokenId> ids) {
  for (TokenId id : ids) {
    if (id >= p.vocab_size()) {
      throw Error("token id " + std::to_string(id) +
                  " out of range for embedding matrix with " +
                  std::to_string(p.vocab_size()) + " rows");
    }
  }
}

struct ParamGrads {
  Matrix embeddings, w1, w2;
  std::vector<double> b1, b2;

  explicit ParamGrads(const ClassifierParams& p)
      : embeddings(p.vocab_size(), p.embed_dim()),
        w1(p.w1.rows(), p.w1.cols()),
        w2(p.w2.rows(), p.w2.cols()),
        b1(p.b1.size()),
        b2(p.b2.size()) {}

  void zero() {
    for (auto* m : {&embeddings, &w1, &w2}) {
      std::fill(m->values().begin(), m->values().end(), 0.0);
    }
    std::fill(b1.begin(), b1.end(), 0.0);
    std::fill(b2.begin(), b2.end(), 0.0);
  }
};

// Backpropagates dLoss/dlogits to the pooled input. Accumulates dense
// parameter gradients into `grads` when given.
std::vector<double> backprop_to_input(const ClassifierParams& p,
                                      const ForwardCache& cache,
                                      const std::array<double, kNumLabels>& dlogits,
                                      ParamGrads* grads) {
  const std::size_t hdim = p.hidden_dim();
  std::vector<double> dz(hdim);
  for (std::size_t k = 0; k < hdim; ++k) {
    double dh = 0.0;
    for (std::size_t c = 0; c < kNumLabels; ++c) dh += p.w2(k, c) * dlogits[c];
    dz[k] = cache.hidden_pre[k] > 0.0 ? dh : 0.0;
  }
  if (grads) {
    for (std::size_t k = 0; k < hdim; ++k) {
      for (std::size_t c = 0; c < kNumLabels; ++c) {
        grads->w2(k, c) += cache.hidden[k] * dlogits[c];
      }
      grads->b1[k] += dz[k];
    }
    for (std::size_t c = 0; c < kNumLabels; ++c) grads->b2[c] += dlogits[c];
  }
  const std::size_t in = p.input_dim();
  std::vector<double> dx(in, 0.0);
  for (std::size_t i = 0; i < in; ++i) {
    auto w_row = p.w1.row(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < hdim; ++k) acc += w_row[k] * dz[k];
    dx[i] = acc;
    if (grads) {
      const double xi = cache.input[i];
      if (xi != 0.0) {
        auto g_row = grads->w1.row(i);
        for (std::size_t k = 0; k < hdim; ++k) g_row[k] += xi * dz[k];
      }
    }
  }
  return dx;
}

std::array<double, kNumLabels> ce_grad(const Logits& logits, Label gold,
                                       double scale) {
  auto prob = softmax(logits);
  prob[label_index(gold)] -= 1.0;
  for (double& v : prob) v *= scale;
  return prob;
}

void scatter_side(std::span<const TokenId> ids, std::size_t count,
                  std::span<const double> dpooled, Matrix& emb_grad) {
  if (count == 0) return;
  const double inv = 1.0 / static_cast<double>(count);
  for (TokenId id : ids) {
    if (id == Vocabulary::kPad) continue;
    auto g = emb_grad.row(id);
    for (std::size_t d = 0; d < g.size(); ++d) g[d] += dpooled[d] * inv;
  }
}

struct AdamState {
  std::vector<double> m, v;
};

}  // namespace

void ClassifierParams::validate() const {
  const std::size_t d = embed_dim(), h = hidden_dim();
  if (vocab_size() == 0 || d == 0 || h == 0) {
    throw Error("params: empty dimension");
  }
  if (w1.rows() != input_dim() || w1.cols() != h || w2.rows() != h ||
      w2.cols() != kNumLabels || b2.size() != kNumLabels) {
    throw Error("params: inconsistent shapes");
  }
  for (auto v : {embeddings.values(), w1.values(), w2.values(),
                 std::span<const double>(b1), std::span<const double>(b2)}) {
    if (!all_finite(v)) throw Error("params: non-finite entry");
  }
}

std::string ClassifierParams::hash() const {
  Checkpoint c{*this, "", nlohmann::json::object()};
  return sha256_hex(serialize_checkpoint(c));
}

ClassifierParams zero_params(std::size_t vocab_size, std::size_t embed_dim,
                             std::size_t hidden_dim, bool use_premise) {
  ClassifierParams p;
  p.use_premise = use_premise;
  p.embeddings = Matrix(vocab_size, embed_dim);
  p.w1 = Matrix(use_premise ? 2 * embed_dim : embed_dim, hidden_dim);
  p.b1.assign(hidden_dim, 0.0);
  p.w2 = Matrix(hidden_dim, kNumLabels);
  p.b2.assign(kNumLabels, 0.0);
  return p;
}

Logits forward(const ClassifierParams& p, const TokenizedExample& ex,
               ForwardCache* cache, std::optional<EmbeddingOverride> override_at) {
  const std::size_t d = p.embed_dim();
  check_ids(p, ex.hypothesis_ids);
  if (p.use_premise) check_ids(p, ex.premise_ids);
  if (override_at) {
    if (override_at->position >= ex.hypothesis_ids.size() ||
        ex.hypothesis_ids[override_at->position] == Vocabulary::kPad) {
      throw Error("forward: override position is out of range or PAD");
    }
    if (override_at->vector.size() != d) {
      throw Error("forward: override vector has wrong dimension");
    }
  }

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.input.assign(p.input_dim(), 0.0);
  c.premise_count = 0;
  c.hypothesis_count = 0;

  std::size_t offset = 0;
  if (p.use_premise) {
    for (TokenId id : ex.premise_ids) {
      if (id == Vocabulary::kPad) continue;
      auto e = p.embeddings.row(id);
      for (std::size_t k = 0; k < d; ++k) c.input[k] += e[k];
      ++c.premise_count;
    }
    if (c.premise_count) {
      for (std::size_t k = 0; k < d; ++k) c.input[k] /= static_cast<double>(c.premise_count);
    }
    offset = d;
  }
  for (std::size_t j = 0; j < ex.hypothesis_ids.size(); ++j) {
    TokenId id = ex.hypothesis_ids[j];
    if (id == Vocabulary::kPad) continue;
    std::span<const double> e = p.embeddings.row(id);
    if (override_at && override_at->position == j) e = override_at->vector;
    for (std::size_t k = 0; k < d; ++k) c.input[offset + k] += e[k];
    ++c.hypothesis_count;
  }
  if (c.hypothesis_count) {
    for (std::size_t k = 0; k < d; ++k) {
      c.input[offset + k] /= static_cast<double>(c.hypothesis_count);
    }
  }

  const std::size_t hdim = p.hidden_dim();
  c.hidden_pre.assign(p.b1.begin(), p.b1.end());
  for (std::size_t i = 0; i < c.input.size(); ++i) {
    const double xi = c.input[i];
    if (xi == 0.0) continue;
    auto w_row = p.w1.row(i);
    for (std::size_t k = 0; k < hdim; ++k) c.hidden_pre[k] += xi * w_row[k];
  }
  c.hidden.resize(hdim);
  for (std::size_t k = 0; k < hdim; ++k) c.hidden[k] = std::max(0.0, c.hidden_pre[k]);

  Logits logits;
  for (std::size_t o = 0; o < kNumLabels; ++o) {
    double acc = p.b2[o];
    for (std::size_t k = 0; k < hdim; ++k) acc += c.hidden[k] * p.w2(k, o);
    logits[o] = acc;
  }
  return logits;
}

std::array<double, kNumLabels> softmax(const Logits& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::array<double, kNumLabels> out;
  double z = 0.0;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

double cross_entropy(const Logits& logits, Label gold) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  return std::log(z) + m - logits[label_index(gold)];
}

Label argmax_label(const Logits& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumLabels; ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return label_from_index(best);
}

Label predict(const ClassifierParams& params, const TokenizedExample& ex) {
  return argmax_label(forward(params, ex));
}

EmbeddingGradient embedding_gradient(const ClassifierParams& params,
                                     std::span<const TokenizedExample> batch,
                                     std::span<const Label> labels,
                                     std::span<const std::size_t> positions) {
  if (batch.empty()) throw Error("embedding_gradient: empty batch");
  if (labels.size() != batch.size()) {
    throw Error("embedding_gradient: label count does not match batch");
  }
  const std::size_t d = params.embed_dim();
  const std::size_t offset = params.use_premise ? d : 0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  EmbeddingGradient out;
  out.per_position.assign(positions.size(), std::vector<double>(d, 0.0));
  ForwardCache cache;
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TokenizedExample& ex = batch[b];
    for (std::size_t pos : positions) {
      if (pos >= ex.hypothesis_ids.size()) {
        throw Error("embedding_gradient: position " + std::to_string(pos) +
                    " out of range for hypothesis of length " +
                    std::to_string(ex.hypothesis_ids.size()));
      }
    }
    Logits logits = forward(params, ex, &cache);
    loss_sum += cross_entropy(logits, labels[b]);
    auto dx = backprop_to_input(params, cache, ce_grad(logits, labels[b], inv_b),
                                nullptr);
    if (cache.hypothesis_count == 0) continue;
    const double inv_n = 1.0 / static_cast<double>(cache.hypothesis_count);
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (ex.hypothesis_ids[positions[i]] == Vocabulary::kPad) continue;
      auto& g = out.per_position[i];
      for (std::size_t k = 0; k < d; ++k) g[k] += dx[offset + k] * inv_n;
    }
  }
  out.mean_loss = loss_sum * inv_b;
  return out;
}

EmbeddingGradient embedding_gradient(const ClassifierParams& params,
                                     std::span<const TokenizedExample> batch,
                                     Label label,
                                     std::span<const std::size_t> positions) {
  std::vector<Label> labels(batch.size(), label);
  return embedding_gradient(params, batch, labels, positions);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (max_seq_len < 1) throw ConfigError("train: max_seq_len must be >= 1");
  if (optimizer == OptimizerKind::kAdam &&
      !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw ConfigError("train: invalid Adam hyper-parameters");
  }
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"optimizer", cfg.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"epsilon", cfg.epsilon},
          {"seed", cfg.seed},
          {"max_seq_len", cfg.max_seq_len}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    std::string opt = j.value("optimizer",
                              std::string(c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"));
    if (opt == "adam") {
      c.optimizer = OptimizerKind::kAdam;
    } else if (opt == "sgd") {
      c.optimizer = OptimizerKind::kSgd;
    } else {
      throw ConfigError("train: unknown optimizer '" + opt + "'");
    }
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

TrainHistory train(ClassifierParams& params,
                   std::span<const TokenizedExample> data,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw Error("train: no training data");
  params.validate();
  TrainHistory history;
  if (cfg.epochs == 0) return history;

  const std::size_t d = params.embed_dim();
  ParamGrads grads(params);
  std::vector<std::pair<std::span<double>, std::span<double>>> slots = {
      {params.embeddings.values(), grads.embeddings.values()},
      {params.w1.values(), grads.w1.values()},
      {std::span<double>(params.b1), std::span<double>(grads.b1)},
      {params.w2.values(), grads.w2.values()},
      {std::span<double>(params.b2), std::span<double>(grads.b2)}};
  std::vector<AdamState> adam(slots.size());
  for (std::size_t s = 0; s < slots.size(); ++s) {
    adam[s].m.assign(slots[s].first.size(), 0.0);
    adam[s].v.assign(slots[s].first.size(), 0.0);
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  ForwardCache cache;
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      grads.zero();
      for (std::size_t i = start; i < end; ++i) {
        const TokenizedExample& ex = data[order[i]];
        Logits logits = forward(params, ex, &cache);
        const double loss = cross_entropy(logits, ex.gold);
        if (!std::isfinite(loss)) {
          throw Error("train: non-finite loss at epoch " + std::to_string(epoch) +
                      ", example " + std::to_string(order[i]));
        }
        loss_sum += loss;
        if (argmax_label(logits) == ex.gold) ++correct;
        auto dx = backprop_to_input(params, cache, ce_grad(logits, ex.gold, scale),
                                    &grads);
        std::size_t offset = 0;
        if (params.use_premise) {
          scatter_side(ex.premise_ids, cache.premise_count,
                       std::span<const double>(dx).subspan(0, d), grads.embeddings);
          offset = d;
        }
        scatter_side(ex.hypothesis_ids, cache.hypothesis_count,
                     std::span<const double>(dx).subspan(offset, d), grads.embeddings);
      }

      ++step;
      if (cfg.optimizer == OptimizerKind::kSgd) {
        for (auto& [w, g] : slots) {
          for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * g[i];
        }
      } else {
        const double t = static_cast<double>(step);
        const double lr_t = cfg.learning_rate *
                            std::sqrt(1.0 - std::pow(cfg.beta2, t)) /
                            (1.0 - std::pow(cfg.beta1, t));
        for (std::size_t s = 0; s < slots.size(); ++s) {
          auto [w, g] = slots[s];
          auto& m = adam[s].m;
          auto& v = adam[s].v;
          for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            w[i] -= lr_t * m[i] / (std::sqrt(v[i]) + cfg.epsilon);
          }
        }
      }
    }
    const double n = static_cast<double>(data.size());
    history.push_back({loss_sum / n, static_cast<double>(correct) / n});
  }
  return history;
}

double accuracy(const ClassifierParams& params,
                std::span<const TokenizedExample> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    if (predict(params, ex) == ex.gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::size_t load_glove(std::istream& in, const Vocabulary& vocab,
                       Matrix& embeddings) {
  std::string line;
  std::size_t line_no = 0, matched = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    values.clear();
    std::string field;
    while (ls >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError("glove line " + std::to_string(line_no) +
                             ": bad number '" + field + "'",
                         line_no);
      }
    }
    if (values.size() != embeddings.cols()) {
      throw ParseError("glove line " + std::to_string(line_no) + ": dimension " +
                           std::to_string(values.size()) + " != model dimension " +
                           std::to_string(embeddings.cols()),
                       line_no);
    }
    if (auto id = vocab.find(word)) {
      std::copy(values.begin(), values.end(), embeddings.row(*id).begin());
      ++matched;
    }
  }
  return matched;
}

ClassifierParams init_params(const Vocabulary& vocab, std::size_t embed_dim,
                             std::size_t hidden_dim, bool use_premise,
                             std::uint64_t seed,
                             const std::optional<std::filesystem::path>& glove_path) {
  if (embed_dim == 0 || hidden_dim == 0) {
    throw ConfigError("init_params: dimensions must be >= 1");
  }
  ClassifierParams p = zero_params(vocab.size(), embed_dim, hidden_dim, use_premise);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> emb(-0.1, 0.1);
  for (double& v : p.embeddings.values()) v = emb(rng);
  auto xavier = [&](Matrix& m) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& v : m.values()) v = u(rng);
  };
  xavier(p.w1);
  xavier(p.w2);
  if (glove_path) {
    std::ifstream in(*glove_path);
    if (!in) throw Error("cannot open GloVe file " + glove_path->string());
    load_glove(in, vocab, p.embeddings);
  }
  return p;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const ClassifierParams& p = ckpt.params;
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["dims"] = {{"vocab_size", p.vocab_size()},
               {"embed_dim", p.embed_dim()},
               {"hidden_dim", p.hidden_dim()},
               {"input_dim", p.input_dim()},
               {"use_premise", p.use_premise}};
  j["vocab_hash"] = ckpt.vocab_hash;
  j["provenance"] = ckpt.provenance;
  auto arr = [](std::span<const double> v) {
    return nlohmann::json(std::vector<double>(v.begin(), v.end()));
  };
  j["arrays"] = {{"embeddings", arr(p.embeddings.values())},
                 {"w1", arr(p.w1.values())},
                 {"b1", arr(p.b1)},
                 {"w2", arr(p.w2.values())},
                 {"b2", arr(p.b2)}};
  return j.dump() + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint: corrupted: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw CheckpointError("checkpoint: format version " + std::to_string(version) +
                            " unsupported (expected " +
                            std::to_string(kCheckpointFormatVersion) + ")");
    }
    const auto& dims = j.at("dims");
    const auto v = dims.at("vocab_size").get<std::size_t>();
    const auto d = dims.at("embed_dim").get<std::size_t>();
    const auto h = dims.at("hidden_dim").get<std::size_t>();
    const bool use_premise = dims.at("use_premise").get<bool>();
    Checkpoint c;
    c.params = zero_params(v, d, h, use_premise);
    c.vocab_hash = j.at("vocab_hash").get<std::string>();
    c.provenance = j.value("provenance", nlohmann::json::object());
    const auto& arrays = j.at("arrays");
    auto fill = [&](const char* name, std::span<double> dst) {
      const auto& src = arrays.at(name);
      if (!src.is_array() || src.size() != dst.size()) {
        throw CheckpointError(std::string("checkpoint: array '") + name +
                              "' has wrong size");
      }
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i].get<double>();
    };
    fill("embeddings", c.params.embeddings.values());
    fill("w1", c.params.w1.values());
    fill("b1", c.params.b1);
    fill("w2", c.params.w2.values());
    fill("b2", c.params.b2);
    c.params.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.params.validate();
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_vocab_hash) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw CheckpointError(e.what());
  }
  Checkpoint c = parse_checkpoint(text);
  if (expected_vocab_hash && *expected_vocab_hash != c.vocab_hash) {
    throw CheckpointError("checkpoint: vocabulary hash mismatch (checkpoint " +
                          c.vocab_hash + ", vocabulary " + *expected_vocab_hash + ")");
  }
  return c;
}

}  // namespace triggerlab
