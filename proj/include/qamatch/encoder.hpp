#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qamatch/random.hpp"
#include "qamatch/tape.hpp"

namespace qamatch {

enum class EncoderMode { Siamese, Crossed };
// Which layers let a branch attend over the other branch's tokens.
enum class CrossSchedule { EveryLayer, LastLayer };
enum class Pooling { FirstToken, MeanToken, MeanUsefulToken };

std::string to_string(EncoderMode mode);
std::string to_string(CrossSchedule schedule);
std::string to_string(Pooling pooling);

struct EncoderConfig {
  std::size_t dim = 32;
  std::size_t layers = 1;
  std::size_t heads = 1;
  std::size_t ffn_dim = 64;
  EncoderMode mode = EncoderMode::Siamese;
  CrossSchedule cross = CrossSchedule::EveryLayer;

  // Throws ConfigError.
  void validate() const;
};

struct AttentionParams {
  Tensor query_w, query_b;
  Tensor key_w, key_b;
  Tensor value_w, value_b;
  Tensor out_w, out_b;
};

// Post-norm transformer layer: attention, residual + norm, ReLU feed-forward,
// residual + norm.
struct EncoderLayerParams {
  AttentionParams attn;
  Tensor norm1_gain, norm1_bias;
  Tensor ffn_in_w, ffn_in_b;
  Tensor ffn_out_w, ffn_out_b;
  Tensor norm2_gain, norm2_bias;

  static EncoderLayerParams init(const EncoderConfig& cfg, Rng& rng);
};

// Per-branch token representations [L x d] plus the useful-token mask.
struct TokenStates {
  Var states;
  std::vector<std::uint8_t> mask;
};

// One branch through self-attention layers only.
TokenStates encode_self(const TokenStates& branch, const EncoderConfig& cfg, std::span<const EncoderLayerParams> layers);

// Both branches run through the same layers independently.
std::pair<TokenStates, TokenStates> encode_siamese(const TokenStates& question, const TokenStates& answer,
                                                   const EncoderConfig& cfg,
                                                   std::span<const EncoderLayerParams> layers);

// Queries come from the branch's own states; keys and values from both
// branches' states (own rows first, 2L rows total) on crossing layers.
std::pair<TokenStates, TokenStates> encode_crossed(const TokenStates& question, const TokenStates& answer,
                                                   const EncoderConfig& cfg,
                                                   std::span<const EncoderLayerParams> layers);

// [L x d] -> [d]. Throws ContractError when the mask selects nothing.
Var pool(const TokenStates& tokens, Pooling strategy);

struct CnnHeadConfig {
  std::vector<std::size_t> kernel_sizes = {2, 3};
  std::size_t feature_maps = 8;

  std::size_t output_dim() const { return kernel_sizes.size() * feature_maps; }
  // Throws ConfigError on empty/zero/oversized kernels or zero feature maps.
  void validate(std::size_t max_len) const;
};

// weight[i]: [k_i * d x N] (one column per filter), bias[i]: [N].
struct CnnHeadParams {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;

  static CnnHeadParams init(const CnnHeadConfig& cfg, std::size_t dim, Rng& rng);
};

// Multi-scale convolution over token rows (PAD rows zeroed), ReLU, max over
// positions, concatenated in kernel-size order. Output [|K| * N].
Var cnn_head(const TokenStates& tokens, const CnnHeadConfig& cfg, const CnnHeadParams& params);

struct GruHeadConfig {
  std::size_t hidden = 8;

  std::size_t output_dim() const { return 2 * hidden; }
  void validate() const;
};

// Gate weights act on [h_{t-1}, x_t]: shape [(h + d) x h], biases [h].
struct GruCellParams {
  Tensor reset_w, reset_b;
  Tensor update_w, update_b;
  Tensor cand_w, cand_b;

  static GruCellParams init(std::size_t hidden, std::size_t input_dim, Rng& rng);
};

struct GruHeadParams {
  GruCellParams forward;
  GruCellParams backward;

  static GruHeadParams init(const GruHeadConfig& cfg, std::size_t dim, Rng& rng);
};

// Runs one GRU direction from h_0 = 0 over the rows of `inputs` [L x d].
// Row t of the result is the state after consuming input row t, whichever
// direction the scan runs.
Var gru_scan(Var inputs, const GruCellParams& cell, bool reverse);

// Forward and backward scans over token rows (PAD rows zeroed), states
// concatenated per position and averaged over useful positions. Output [2h].
Var bigru_head(const TokenStates& tokens, const GruHeadConfig& cfg, const GruHeadParams& params);

}  // namespace qamatch
