#include "qamatch/model.hpp"

#include <algorithm>
#include <cmath>

#include "qamatch/errors.hpp"
#include "qamatch/keyvalue.hpp"

namespace qamatch {

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::SiameseBert: return "siamese-bert";
    case Variant::CrossedBertSiamese: return "crossed-bert";
    case Variant::CrossedBertMultiScaleCnn: return "crossed-cnn";
    case Variant::CrossedBertBiGru: return "crossed-bigru";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::SiameseBert, Variant::CrossedBertSiamese, Variant::CrossedBertMultiScaleCnn,
                 Variant::CrossedBertBiGru}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown architecture '" + std::string(name) +
                    "' (expected siamese-bert, crossed-bert, crossed-cnn or crossed-bigru)");
}

Pooling parse_pooling(std::string_view name) {
  for (auto p : {Pooling::FirstToken, Pooling::MeanToken, Pooling::MeanUsefulToken}) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown pooling '" + std::string(name) + "' (expected first, mean or mean-useful)");
}

CrossSchedule parse_cross_schedule(std::string_view name) {
  if (name == "every") return CrossSchedule::EveryLayer;
  if (name == "last") return CrossSchedule::LastLayer;
  throw ConfigError("unknown cross schedule '" + std::string(name) + "' (expected every or last)");
}

// --- ModelConfig ---

ModelConfig ModelConfig::for_variant(Variant variant) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.encoder.mode = variant == Variant::SiameseBert ? EncoderMode::Siamese : EncoderMode::Crossed;
  if (variant == Variant::CrossedBertMultiScaleCnn) cfg.cnn = CnnHeadConfig{};
  if (variant == Variant::CrossedBertBiGru) cfg.gru = GruHeadConfig{};
  return cfg;
}

void ModelConfig::validate() const {
  encoder.validate();
  const auto expected_mode = variant == Variant::SiameseBert ? EncoderMode::Siamese : EncoderMode::Crossed;
  if (encoder.mode != expected_mode) {
    throw ConfigError("architecture " + to_string(variant) + " needs a " + to_string(expected_mode) + " encoder");
  }
  if (max_len < 3) throw ConfigError("sequence length must be at least 3, got " + std::to_string(max_len));
  if (vocab_size < static_cast<std::size_t>(Vocabulary::kReserved)) {
    throw ConfigError("vocabulary size " + std::to_string(vocab_size) + " is below the reserved entries");
  }
  if (answer_segment != 0 && answer_segment != 1) throw ConfigError("answer segment must be 0 or 1");

  const bool wants_cnn = variant == Variant::CrossedBertMultiScaleCnn;
  const bool wants_gru = variant == Variant::CrossedBertBiGru;
  if (wants_cnn != cnn.has_value()) {
    throw ConfigError(wants_cnn ? "crossed-cnn needs a CNN head configuration"
                                : to_string(variant) + " does not take a CNN head");
  }
  if (wants_gru != gru.has_value()) {
    throw ConfigError(wants_gru ? "crossed-bigru needs a GRU head configuration"
                                : to_string(variant) + " does not take a GRU head");
  }
  if (cnn) cnn->validate(max_len);
  if (gru) gru->validate();
}

std::size_t ModelConfig::output_dim() const {
  if (cnn) return cnn->output_dim();
  if (gru) return gru->output_dim();
  return encoder.dim;
}

std::string ModelConfig::to_text() const {
  std::string out;
  auto put = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  put("arch", to_string(variant));
  put("hidden", std::to_string(encoder.dim));
  put("layers", std::to_string(encoder.layers));
  put("heads", std::to_string(encoder.heads));
  put("ffn", std::to_string(encoder.ffn_dim));
  put("cross", to_string(encoder.cross));
  put("max_len", std::to_string(max_len));
  put("pooling", to_string(pooling));
  put("answer_segment", std::to_string(answer_segment));
  if (cnn) {
    put("kernel_sizes", format_size_list(cnn->kernel_sizes));
    put("feature_maps", std::to_string(cnn->feature_maps));
  }
  if (gru) put("gru_hidden", std::to_string(gru->hidden));
  put("vocab_size", std::to_string(vocab_size));
  return out;
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  const KeyValues kv = parse_key_values(text);
  ModelConfig cfg = for_variant(parse_variant(kv_string(kv, "arch")));
  cfg.encoder.dim = kv_size(kv, "hidden");
  cfg.encoder.layers = kv_size(kv, "layers");
  cfg.encoder.heads = kv_size(kv, "heads");
  cfg.encoder.ffn_dim = kv_size(kv, "ffn");
  cfg.encoder.cross = parse_cross_schedule(kv_string(kv, "cross"));
  cfg.max_len = kv_size(kv, "max_len");
  cfg.pooling = parse_pooling(kv_string(kv, "pooling"));
  cfg.answer_segment = static_cast<std::int32_t>(kv_int(kv, "answer_segment"));
  if (cfg.cnn) {
    cfg.cnn->kernel_sizes = parse_size_list(kv_string(kv, "kernel_sizes"), "kernel_sizes");
    cfg.cnn->feature_maps = kv_size(kv, "feature_maps");
  }
  if (cfg.gru) cfg.gru->hidden = kv_size(kv, "gru_hidden");
  cfg.vocab_size = kv_size(kv, "vocab_size");
  cfg.validate();
  return cfg;
}

// --- ModelParams ---

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(seed, {0x1417});
  const std::size_t d = cfg.encoder.dim;
  ModelParams p;
  p.embeddings.token = Tensor({cfg.vocab_size, d});
  p.embeddings.segment = Tensor({2, d});
  p.embeddings.position = Tensor({cfg.max_len, d});
  fill_uniform(p.embeddings.token, rng, 0.05);
  fill_uniform(p.embeddings.segment, rng, 0.05);
  fill_uniform(p.embeddings.position, rng, 0.05);
  for (std::size_t l = 0; l < cfg.encoder.layers; ++l) p.layers.push_back(EncoderLayerParams::init(cfg.encoder, rng));
  if (cfg.cnn) p.cnn = CnnHeadParams::init(*cfg.cnn, d, rng);
  if (cfg.gru) p.gru = GruHeadParams::init(*cfg.gru, d, rng);
  return p;
}

std::vector<NamedTensor> ModelParams::named() {
  std::vector<NamedTensor> out;
  auto add = [&](std::string path, Tensor& t) { out.push_back({std::move(path), &t}); };
  add("embed.token", embeddings.token);
  add("embed.segment", embeddings.segment);
  add("embed.position", embeddings.position);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = "encoder." + std::to_string(l) + ".";
    auto& p = layers[l];
    add(pre + "attn.query_w", p.attn.query_w);
    add(pre + "attn.query_b", p.attn.query_b);
    add(pre + "attn.key_w", p.attn.key_w);
    add(pre + "attn.key_b", p.attn.key_b);
    add(pre + "attn.value_w", p.attn.value_w);
    add(pre + "attn.value_b", p.attn.value_b);
    add(pre + "attn.out_w", p.attn.out_w);
    add(pre + "attn.out_b", p.attn.out_b);
    add(pre + "norm1.gain", p.norm1_gain);
    add(pre + "norm1.bias", p.norm1_bias);
    add(pre + "ffn.in_w", p.ffn_in_w);
    add(pre + "ffn.in_b", p.ffn_in_b);
    add(pre + "ffn.out_w", p.ffn_out_w);
    add(pre + "ffn.out_b", p.ffn_out_b);
    add(pre + "norm2.gain", p.norm2_gain);
    add(pre + "norm2.bias", p.norm2_bias);
  }
  if (cnn) {
    for (std::size_t i = 0; i < cnn->weight.size(); ++i) {
      add("cnn." + std::to_string(i) + ".weight", cnn->weight[i]);
      add("cnn." + std::to_string(i) + ".bias", cnn->bias[i]);
    }
  }
  if (gru) {
    for (auto [name, cell] : {std::pair<const char*, GruCellParams*>{"forward", &gru->forward}, {"backward", &gru->backward}}) {
      const std::string pre = std::string("gru.") + name + ".";
      add(pre + "reset_w", cell->reset_w);
      add(pre + "reset_b", cell->reset_b);
      add(pre + "update_w", cell->update_w);
      add(pre + "update_b", cell->update_b);
      add(pre + "cand_w", cell->cand_w);
      add(pre + "cand_b", cell->cand_b);
    }
  }
  return out;
}

std::vector<ConstNamedTensor> ModelParams::named() const {
  std::vector<ConstNamedTensor> out;
  for (auto& nt : const_cast<ModelParams*>(this)->named()) out.push_back({std::move(nt.path), nt.tensor});
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t total = 0;
  for (const auto& nt : named()) total += nt.tensor->size();
  return total;
}

void ModelParams::set_requires_grad(bool on) {
  for (auto& nt : named()) nt.tensor->set_requires_grad(on);
}

void ModelParams::zero_grad() {
  for (auto& nt : named()) nt.tensor->zero_grad();
}

// --- forward ---

namespace {

TokenStates embed_branch(Tape& tape, const EncodedSequence& seq, std::int32_t segment, const ModelConfig& cfg,
                         const ModelParams& params) {
  if (seq.length() != cfg.max_len) {
    throw DimensionError("sequence of length " + std::to_string(seq.length()) + " for a model with max_len " +
                         std::to_string(cfg.max_len));
  }
  const bool same_segment =
      std::all_of(seq.segment_ids.begin(), seq.segment_ids.end(), [&](auto s) { return s == segment; });
  Var embedded = same_segment ? embed(tape, seq, params.embeddings)
                              : embed(tape, seq.with_segment(segment), params.embeddings);
  return TokenStates{embedded, seq.useful_mask};
}

Var head(const TokenStates& tokens, const ModelConfig& cfg, const ModelParams& params) {
  switch (cfg.variant) {
    case Variant::SiameseBert:
    case Variant::CrossedBertSiamese:
      return pool(tokens, cfg.pooling);
    case Variant::CrossedBertMultiScaleCnn:
      if (!params.cnn) throw ConfigError("model parameters lack the CNN head");
      return cnn_head(tokens, *cfg.cnn, *params.cnn);
    case Variant::CrossedBertBiGru:
      if (!params.gru) throw ConfigError("model parameters lack the GRU head");
      return bigru_head(tokens, *cfg.gru, *params.gru);
  }
  throw ConfigError("unknown variant");
}

}  // namespace

Var represent_siamese(Tape& tape, const EncodedSequence& seq, std::int32_t segment, const ModelConfig& cfg,
                      const ModelParams& params) {
  if (cfg.variant != Variant::SiameseBert) {
    throw ConfigError("independent sentence representations exist only for siamese-bert");
  }
  return head(encode_self(embed_branch(tape, seq, segment, cfg, params), cfg.encoder, params.layers), cfg, params);
}

PooledPair forward_pair(Tape& tape, const EncodedSequence& question, const EncodedSequence& answer,
                        const ModelConfig& cfg, const ModelParams& params) {
  cfg.validate();
  if (cfg.variant == Variant::SiameseBert) {
    return {represent_siamese(tape, question, 0, cfg, params),
            represent_siamese(tape, answer, cfg.answer_segment, cfg, params)};
  }
  TokenStates q = embed_branch(tape, question, 0, cfg, params);
  TokenStates a = embed_branch(tape, answer, cfg.answer_segment, cfg, params);
  auto [hq, ha] = encode_crossed(q, a, cfg.encoder, params.layers);
  return {head(hq, cfg, params), head(ha, cfg, params)};
}

double cosine(std::span<const double> q, std::span<const double> a) {
  if (q.size() != a.size()) {
    throw DimensionError("cosine: vectors of dimension " + std::to_string(q.size()) + " and " +
                         std::to_string(a.size()));
  }
  double dot = 0.0, qq = 0.0, aa = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    dot += q[i] * a[i];
    qq += q[i] * q[i];
    aa += a[i] * a[i];
  }
  return std::clamp(dot / (std::sqrt(qq) * std::sqrt(aa) + kCosineEps), -1.0, 1.0);
}

void LossConfig::validate() const {
  if (!(margin > 0.0 && margin <= 1.0)) throw ConfigError("margin must lie in (0, 1], got " + format_double(margin));
}

double margin_loss(double sim_pos, double sim_neg, const LossConfig& cfg) {
  return std::max(0.0, cfg.margin - sim_pos + sim_neg);
}

Var margin_loss(Var sim_pos, Var sim_neg, const LossConfig& cfg) {
  // (M - s+) + s-, the same evaluation order as the scalar form.
  return op::relu(op::add(op::affine(sim_pos, -1.0, cfg.margin), sim_neg));
}

// --- Model ---

Model::Model(ModelConfig config, Vocabulary vocab, ModelParams params)
    : config_(std::move(config)), vocab_(std::move(vocab)), params_(std::move(params)) {
  config_.validate();
  if (config_.vocab_size != vocab_.size()) {
    throw ConfigError("model expects " + std::to_string(config_.vocab_size) + " vocabulary entries, vocabulary has " +
                      std::to_string(vocab_.size()));
  }
  if (params_.embeddings.token.shape() != Shape{config_.vocab_size, config_.encoder.dim} ||
      params_.layers.size() != config_.encoder.layers) {
    throw DimensionError("parameters do not match the model configuration");
  }
}

Model Model::create(ModelConfig config, Vocabulary vocab, std::uint64_t seed) {
  config.vocab_size = vocab.size();
  ModelParams params = ModelParams::init(config, seed);
  return Model(std::move(config), std::move(vocab), std::move(params));
}

double Model::score(std::string_view question, std::string_view answer) const {
  Tape tape(false);
  auto pair = forward(tape, encode(question), encode(answer));
  return cosine(pair.question.value().data(), pair.answer.value().data());
}

std::vector<double> Model::score_candidates(const EncodedSequence& question,
                                            std::span<const EncodedSequence> answers) const {
  std::vector<double> scores;
  scores.reserve(answers.size());
  if (config_.variant == Variant::SiameseBert) {
    Tape tape(false);
    Var q = represent_siamese(tape, question, 0, config_, params_);
    for (const auto& a : answers) {
      Tape inner(false);
      Var av = represent_siamese(inner, a, config_.answer_segment, config_, params_);
      scores.push_back(cosine(q.value().data(), av.value().data()));
    }
    return scores;
  }
  for (const auto& a : answers) {
    Tape tape(false);
    auto pair = forward(tape, question, a);
    scores.push_back(cosine(pair.question.value().data(), pair.answer.value().data()));
  }
  return scores;
}

}  // namespace qamatch
