#include "qamatch/encoder.hpp"

#include <cmath>

#include "qamatch/errors.hpp"
#include "qamatch/ops.hpp"

namespace qamatch {

std::string to_string(EncoderMode mode) { return mode == EncoderMode::Siamese ? "siamese" : "crossed"; }

std::string to_string(CrossSchedule schedule) { return schedule == CrossSchedule::EveryLayer ? "every" : "last"; }

std::string to_string(Pooling pooling) {
  switch (pooling) {
    case Pooling::FirstToken: return "first";
    case Pooling::MeanToken: return "mean";
    case Pooling::MeanUsefulToken: return "mean-useful";
  }
  return "?";
}

void EncoderConfig::validate() const {
  if (dim == 0) throw ConfigError("hidden dimension must be positive");
  if (layers < 1) throw ConfigError("encoder needs at least one layer");
  if (heads < 1) throw ConfigError("encoder needs at least one head");
  if (dim % heads != 0) {
    throw ConfigError("hidden dimension " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (ffn_dim == 0) throw ConfigError("feed-forward dimension must be positive");
}

namespace {

Tensor uniform(Shape shape, Rng& rng, double bound) {
  Tensor t(std::move(shape));
  fill_uniform(t, rng, bound);
  return t;
}

struct Projection {
  Var query, key, value;
};

Projection project(Var x, const AttentionParams& p) {
  Tape& t = *x.tape();
  auto affine = [&](const Tensor& w, const Tensor& b) { return op::add_bias(op::matmul(x, t.leaf(w)), t.leaf(b)); };
  return {affine(p.query_w, p.query_b), affine(p.key_w, p.key_b), affine(p.value_w, p.value_b)};
}

// Multi-head attention of `own` queries over `own` keys, followed by `other`
// keys when crossing.
Var attend(const Projection& own, const Projection* other, std::span<const std::uint8_t> key_mask,
           std::size_t heads, const AttentionParams& p) {
  Tape& t = *own.query.tape();
  Var keys = other ? op::concat_rows(own.key, other->key) : own.key;
  Var values = other ? op::concat_rows(own.value, other->value) : own.value;
  const std::size_t rows = own.query.shape()[0], dim = own.query.shape()[1], n_keys = keys.shape()[0];
  const std::size_t head_dim = dim / heads;

  // PAD keys get an additive -1e9 before the softmax.
  Tensor bias({rows, n_keys});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n_keys; ++j) bias[i * n_keys + j] = key_mask[j] ? 0.0 : -1e9;

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> contexts;
  for (std::size_t h = 0; h < heads; ++h) {
    Var q = heads == 1 ? own.query : op::slice_cols(own.query, h * head_dim, head_dim);
    Var k = heads == 1 ? keys : op::slice_cols(keys, h * head_dim, head_dim);
    Var v = heads == 1 ? values : op::slice_cols(values, h * head_dim, head_dim);
    Var scores = op::add_constant(op::scale(op::matmul(q, op::transpose(k)), inv_sqrt), bias);
    contexts.push_back(op::matmul(op::softmax_rows(scores), v));
  }
  Var context = heads == 1 ? contexts[0] : op::concat_cols(contexts);
  return op::add_bias(op::matmul(context, t.leaf(p.out_w)), t.leaf(p.out_b));
}

Var finish_layer(Var x, Var attended, const EncoderLayerParams& p) {
  Tape& t = *x.tape();
  Var h = op::layer_norm_rows(op::add(x, attended), t.leaf(p.norm1_gain), t.leaf(p.norm1_bias));
  Var inner = op::relu(op::add_bias(op::matmul(h, t.leaf(p.ffn_in_w)), t.leaf(p.ffn_in_b)));
  Var ffn = op::add_bias(op::matmul(inner, t.leaf(p.ffn_out_w)), t.leaf(p.ffn_out_b));
  return op::layer_norm_rows(op::add(h, ffn), t.leaf(p.norm2_gain), t.leaf(p.norm2_bias));
}

void check_branch(const TokenStates& branch, const EncoderConfig& cfg) {
  const Shape& s = branch.states.shape();
  if (s.size() != 2 || s[1] != cfg.dim || branch.mask.size() != s[0]) {
    throw DimensionError("branch input " + shape_str(s) + " with mask of " + std::to_string(branch.mask.size()) +
                         " does not match hidden dimension " + std::to_string(cfg.dim));
  }
}

void check_layer_count(const EncoderConfig& cfg, std::span<const EncoderLayerParams> layers) {
  if (layers.size() != cfg.layers) {
    throw DimensionError("expected " + std::to_string(cfg.layers) + " layer parameter sets, got " +
                         std::to_string(layers.size()));
  }
}

std::vector<std::uint8_t> joined(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::vector<std::uint8_t> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::pair<TokenStates, TokenStates> run_crossed(const TokenStates& question, const TokenStates& answer,
                                                const EncoderConfig& cfg, std::span<const EncoderLayerParams> layers) {
  cfg.validate();
  check_branch(question, cfg);
  check_branch(answer, cfg);
  check_layer_count(cfg, layers);
  const auto q_keys = joined(question.mask, answer.mask);
  const auto a_keys = joined(answer.mask, question.mask);

  Var xq = question.states, xa = answer.states;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    const bool cross = (cfg.cross == CrossSchedule::EveryLayer || l + 1 == layers.size());
    const Projection pq = project(xq, p.attn), pa = project(xa, p.attn);
    Var aq = cross ? attend(pq, &pa, q_keys, cfg.heads, p.attn) : attend(pq, nullptr, question.mask, cfg.heads, p.attn);
    Var aa = cross ? attend(pa, &pq, a_keys, cfg.heads, p.attn) : attend(pa, nullptr, answer.mask, cfg.heads, p.attn);
    xq = finish_layer(xq, aq, p);
    xa = finish_layer(xa, aa, p);
  }
  return {TokenStates{xq, question.mask}, TokenStates{xa, answer.mask}};
}

}  // namespace

EncoderLayerParams EncoderLayerParams::init(const EncoderConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.dim, f = cfg.ffn_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  EncoderLayerParams p;
  p.attn.query_w = uniform({d, d}, rng, bound);
  p.attn.query_b = Tensor({d});
  p.attn.key_w = uniform({d, d}, rng, bound);
  p.attn.key_b = Tensor({d});
  p.attn.value_w = uniform({d, d}, rng, bound);
  p.attn.value_b = Tensor({d});
  p.attn.out_w = uniform({d, d}, rng, bound);
  p.attn.out_b = Tensor({d});
  p.norm1_gain = Tensor({d}, 1.0);
  p.norm1_bias = Tensor({d});
  p.ffn_in_w = uniform({d, f}, rng, bound);
  p.ffn_in_b = Tensor({f});
  p.ffn_out_w = uniform({f, d}, rng, bound);
  p.ffn_out_b = Tensor({d});
  p.norm2_gain = Tensor({d}, 1.0);
  p.norm2_bias = Tensor({d});
  return p;
}

TokenStates encode_self(const TokenStates& branch, const EncoderConfig& cfg, std::span<const EncoderLayerParams> layers) {
  cfg.validate();
  check_branch(branch, cfg);
  check_layer_count(cfg, layers);
  Var x = branch.states;
  for (const auto& p : layers) x = finish_layer(x, attend(project(x, p.attn), nullptr, branch.mask, cfg.heads, p.attn), p);
  return TokenStates{x, branch.mask};
}

std::pair<TokenStates, TokenStates> encode_siamese(const TokenStates& question, const TokenStates& answer,
                                                   const EncoderConfig& cfg,
                                                   std::span<const EncoderLayerParams> layers) {
  return {encode_self(question, cfg, layers), encode_self(answer, cfg, layers)};
}

std::pair<TokenStates, TokenStates> encode_crossed(const TokenStates& question, const TokenStates& answer,
                                                   const EncoderConfig& cfg,
                                                   std::span<const EncoderLayerParams> layers) {
  return run_crossed(question, answer, cfg, layers);
}

Var pool(const TokenStates& tokens, Pooling strategy) {
  const Shape& s = tokens.states.shape();
  if (s.size() != 2 || tokens.mask.size() != s[0]) {
    throw DimensionError("pool: states " + shape_str(s) + " with mask of " + std::to_string(tokens.mask.size()));
  }
  switch (strategy) {
    case Pooling::FirstToken:
      return op::reshape(op::slice_rows(tokens.states, 0, 1), {s[1]});
    case Pooling::MeanToken: {
      const std::vector<std::uint8_t> all(s[0], 1);
      return op::masked_mean_rows(tokens.states, all);
    }
    case Pooling::MeanUsefulToken:
      return op::masked_mean_rows(tokens.states, tokens.mask);
  }
  throw ContractError("unknown pooling strategy");
}

// --- multi-scale CNN ---

void CnnHeadConfig::validate(std::size_t max_len) const {
  if (kernel_sizes.empty()) throw ConfigError("CNN head needs at least one kernel size");
  for (std::size_t k : kernel_sizes) {
    if (k == 0 || k > max_len) {
      throw ConfigError("kernel size " + std::to_string(k) + " must lie in [1, " + std::to_string(max_len) + "]");
    }
  }
  if (feature_maps == 0) throw ConfigError("CNN head needs at least one feature map");
}

CnnHeadParams CnnHeadParams::init(const CnnHeadConfig& cfg, std::size_t dim, Rng& rng) {
  CnnHeadParams p;
  for (std::size_t k : cfg.kernel_sizes) {
    const std::size_t fan_in = k * dim;
    p.weight.push_back(uniform({fan_in, cfg.feature_maps}, rng, 1.0 / std::sqrt(static_cast<double>(fan_in))));
    p.bias.emplace_back(Shape{cfg.feature_maps});
  }
  return p;
}

Var cnn_head(const TokenStates& tokens, const CnnHeadConfig& cfg, const CnnHeadParams& params) {
  const std::size_t len = tokens.states.shape()[0];
  cfg.validate(len);
  if (params.weight.size() != cfg.kernel_sizes.size() || params.bias.size() != cfg.kernel_sizes.size()) {
    throw DimensionError("CNN parameters do not match " + std::to_string(cfg.kernel_sizes.size()) + " kernel sizes");
  }
  Tape& t = *tokens.states.tape();
  Var rows = op::mask_rows(tokens.states, tokens.mask);
  std::vector<Var> pooled;
  for (std::size_t i = 0; i < cfg.kernel_sizes.size(); ++i) {
    Var windows = op::unfold_rows(rows, cfg.kernel_sizes[i]);
    Var response = op::relu(op::add_bias(op::matmul(windows, t.leaf(params.weight[i])), t.leaf(params.bias[i])));
    pooled.push_back(op::max_over_rows(response));
  }
  return pooled.size() == 1 ? pooled[0] : op::concat_cols(pooled);
}

// --- BiGRU ---

void GruHeadConfig::validate() const {
  if (hidden == 0) throw ConfigError("GRU hidden dimension must be positive");
}

GruCellParams GruCellParams::init(std::size_t hidden, std::size_t input_dim, Rng& rng) {
  const std::size_t fan_in = hidden + input_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  GruCellParams p;
  p.reset_w = uniform({fan_in, hidden}, rng, bound);
  p.reset_b = Tensor({hidden});
  p.update_w = uniform({fan_in, hidden}, rng, bound);
  p.update_b = Tensor({hidden});
  p.cand_w = uniform({fan_in, hidden}, rng, bound);
  p.cand_b = Tensor({hidden});
  return p;
}

GruHeadParams GruHeadParams::init(const GruHeadConfig& cfg, std::size_t dim, Rng& rng) {
  GruHeadParams p;
  p.forward = GruCellParams::init(cfg.hidden, dim, rng);
  p.backward = GruCellParams::init(cfg.hidden, dim, rng);
  return p;
}

Var gru_scan(Var inputs, const GruCellParams& cell, bool reverse) {
  const Shape& s = inputs.shape();
  const std::size_t hidden = cell.reset_b.size();
  if (s.size() != 2 || cell.reset_w.shape() != Shape{hidden + s[1], hidden}) {
    throw DimensionError("GRU cell " + shape_str(cell.reset_w.shape()) + " cannot consume inputs " + shape_str(s));
  }
  Tape& t = *inputs.tape();
  Var wr = t.leaf(cell.reset_w), br = t.leaf(cell.reset_b);
  Var wz = t.leaf(cell.update_w), bz = t.leaf(cell.update_b);
  Var wh = t.leaf(cell.cand_w), bh = t.leaf(cell.cand_b);

  const std::size_t len = s[0];
  Var h = t.constant(Tensor({1, hidden}));
  std::vector<Var> states(len);
  for (std::size_t step = 0; step < len; ++step) {
    const std::size_t row = reverse ? len - 1 - step : step;
    Var x = op::slice_rows(inputs, row, 1);
    Var hx = op::concat_cols(h, x);
    Var reset = op::sigmoid(op::add_bias(op::matmul(hx, wr), br));
    Var update = op::sigmoid(op::add_bias(op::matmul(hx, wz), bz));
    Var cand = op::tanh(op::add_bias(op::matmul(op::concat_cols(op::mul(reset, h), x), wh), bh));
    // h_t = (1 - z) * h_{t-1} + z * h~_t
    h = op::add(op::mul(op::affine(update, -1.0, 1.0), h), op::mul(update, cand));
    states[row] = h;
  }
  return op::concat_rows(states);
}

Var bigru_head(const TokenStates& tokens, const GruHeadConfig& cfg, const GruHeadParams& params) {
  cfg.validate();
  Var rows = op::mask_rows(tokens.states, tokens.mask);
  Var forward = gru_scan(rows, params.forward, false);
  Var backward = gru_scan(rows, params.backward, true);
  if (forward.shape()[1] != cfg.hidden) {
    throw DimensionError("GRU parameters have hidden size " + std::to_string(forward.shape()[1]) + ", config says " +
                         std::to_string(cfg.hidden));
  }
  return op::masked_mean_rows(op::concat_cols(forward, backward), tokens.mask);
}

}  // namespace qamatch
