#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qamatch/encoder.hpp"
#include "qamatch/ops.hpp"
#include "qamatch/text.hpp"

namespace qamatch {

enum class Variant { SiameseBert, CrossedBertSiamese, CrossedBertMultiScaleCnn, CrossedBertBiGru };

// CLI spelling: siamese-bert, crossed-bert, crossed-cnn, crossed-bigru.
std::string to_string(Variant variant);
Variant parse_variant(std::string_view name);
Pooling parse_pooling(std::string_view name);
CrossSchedule parse_cross_schedule(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::CrossedBertSiamese;
  EncoderConfig encoder;
  // Used by the two pooled variants; head variants pool internally.
  Pooling pooling = Pooling::MeanUsefulToken;
  std::optional<CnnHeadConfig> cnn;
  std::optional<GruHeadConfig> gru;
  std::size_t max_len = 32;
  std::size_t vocab_size = 0;
  // Segment id used for the answer branch (question branch uses 0).
  std::int32_t answer_segment = 0;

  // Fills encoder.mode and the required head config from `variant`.
  static ModelConfig for_variant(Variant variant);

  // Throws ConfigError on any inconsistency.
  void validate() const;
  std::size_t output_dim() const;

  // Canonical key=value text (fixed key order).
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  bool operator==(const ModelConfig& other) const { return to_text() == other.to_text(); }
};

struct NamedTensor {
  std::string path;
  Tensor* tensor;
};

struct ConstNamedTensor {
  std::string path;
  const Tensor* tensor;
};

struct ModelParams {
  EmbeddingTables embeddings;
  std::vector<EncoderLayerParams> layers;
  std::optional<CnnHeadParams> cnn;
  std::optional<GruHeadParams> gru;

  // Seeded initialization; embeddings uniform in [-0.05, 0.05].
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  // Every trainable tensor in a fixed order with a stable path name.
  std::vector<NamedTensor> named();
  std::vector<ConstNamedTensor> named() const;
  std::size_t count() const;

  void set_requires_grad(bool on);
  void zero_grad();
};

struct PooledPair {
  Var question;
  Var answer;
};

// The four architectures. Sequences must be encoded with cfg.max_len.
PooledPair forward_pair(Tape& tape, const EncodedSequence& question, const EncodedSequence& answer,
                        const ModelConfig& cfg, const ModelParams& params);

// Sentence representation for the siamese variant, where branches are independent.
Var represent_siamese(Tape& tape, const EncodedSequence& seq, std::int32_t segment, const ModelConfig& cfg,
                      const ModelParams& params);

constexpr double kCosineEps = 1e-12;

// (q . a) / (|q| |a| + 1e-12) clamped to [-1, 1]. DimensionError on size mismatch.
double cosine(std::span<const double> q, std::span<const double> a);
inline Var cosine(Var q, Var a) { return op::cosine(q, a, kCosineEps); }

struct LossConfig {
  double margin = 0.1;

  void validate() const;
};

// max{0, M - sim_pos + sim_neg}
double margin_loss(double sim_pos, double sim_neg, const LossConfig& cfg);
// Differentiable form; the hinge point itself has zero gradient.
Var margin_loss(Var sim_pos, Var sim_neg, const LossConfig& cfg);

// Configuration, vocabulary and parameters bundled for scoring.
class Model {
 public:
  Model(ModelConfig config, Vocabulary vocab, ModelParams params);
  // Fresh model with seeded parameters; sets config.vocab_size from `vocab`.
  static Model create(ModelConfig config, Vocabulary vocab, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

  EncodedSequence encode(std::string_view text) const { return qamatch::encode(text, vocab_, config_.max_len); }
  PooledPair forward(Tape& tape, const EncodedSequence& question, const EncodedSequence& answer) const {
    return forward_pair(tape, question, answer, config_, params_);
  }

  double score(std::string_view question, std::string_view answer) const;
  // Cosine of the question against each answer; the question representation
  // is computed once when the variant allows it.
  std::vector<double> score_candidates(const EncodedSequence& question,
                                       std::span<const EncodedSequence> answers) const;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  ModelParams params_;
};

}  // namespace qamatch
