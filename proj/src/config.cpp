#include "qamatch/config.hpp"

#include <cmath>
#include <functional>

#include "qamatch/errors.hpp"

namespace qamatch {

namespace {

struct Field {
  const char* key;
  std::function<void(RunConfig&, const KeyValues&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(const char* key, T RunConfig::*member) {
  return {key, [=](RunConfig& c, const KeyValues& kv) { c.*member = static_cast<T>(kv_size(kv, key)); },
          [=](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field u64_field(const char* key, std::uint64_t RunConfig::*member) {
  return {key, [=](RunConfig& c, const KeyValues& kv) { c.*member = kv_u64(kv, key); },
          [=](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(const char* key, double RunConfig::*member) {
  return {key, [=](RunConfig& c, const KeyValues& kv) { c.*member = kv_double(kv, key); },
          [=](const RunConfig& c) { return format_double(c.*member); }};
}

Field string_field(const char* key, std::string RunConfig::*member) {
  return {key, [=](RunConfig& c, const KeyValues& kv) { c.*member = kv_string(kv, key); },
          [=](const RunConfig& c) { return c.*member; }};
}

Field list_field(const char* key, std::vector<std::size_t> RunConfig::*member) {
  return {key, [=](RunConfig& c, const KeyValues& kv) { c.*member = parse_size_list(kv_string(kv, key), key); },
          [=](const RunConfig& c) { return format_size_list(c.*member); }};
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + text + "'");
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      string_field("data_dir", &RunConfig::data_dir),
      string_field("checkpoint", &RunConfig::checkpoint),
      string_field("checkpoint_out", &RunConfig::checkpoint_out),
      string_field("log_out", &RunConfig::log_out),
      string_field("pools_file", &RunConfig::pools_file),
      string_field("out", &RunConfig::out),
      string_field("split", &RunConfig::split),
      {"arch", [](RunConfig& c, const KeyValues& kv) { c.arch = parse_variant(kv_string(kv, "arch")); },
       [](const RunConfig& c) { return to_string(c.arch); }},
      size_field("hidden", &RunConfig::hidden),
      size_field("layers", &RunConfig::layers),
      size_field("heads", &RunConfig::heads),
      size_field("ffn", &RunConfig::ffn),
      {"cross", [](RunConfig& c, const KeyValues& kv) { c.cross = parse_cross_schedule(kv_string(kv, "cross")); },
       [](const RunConfig& c) { return to_string(c.cross); }},
      size_field("max_len", &RunConfig::max_len),
      {"pooling", [](RunConfig& c, const KeyValues& kv) { c.pooling = parse_pooling(kv_string(kv, "pooling")); },
       [](const RunConfig& c) { return to_string(c.pooling); }},
      {"answer_segment",
       [](RunConfig& c, const KeyValues& kv) {
         const auto v = kv_int(kv, "answer_segment");
         if (v != 0 && v != 1) throw ConfigError("'answer_segment' must be 0 or 1");
         c.answer_segment = static_cast<std::int32_t>(v);
       },
       [](const RunConfig& c) { return std::to_string(c.answer_segment); }},
      list_field("kernel_sizes", &RunConfig::kernel_sizes),
      size_field("feature_maps", &RunConfig::feature_maps),
      size_field("gru_hidden", &RunConfig::gru_hidden),
      double_field("lr", &RunConfig::lr),
      double_field("margin", &RunConfig::margin),
      double_field("weight_decay", &RunConfig::weight_decay),
      double_field("beta1", &RunConfig::beta1),
      double_field("beta2", &RunConfig::beta2),
      double_field("eps", &RunConfig::eps),
      size_field("epochs", &RunConfig::epochs),
      size_field("batch", &RunConfig::batch),
      u64_field("seed", &RunConfig::seed),
      double_field("train_fraction", &RunConfig::train_fraction),
      {"fixed_negatives",
       [](RunConfig& c, const KeyValues& kv) {
         c.fixed_negatives = parse_bool(kv_string(kv, "fixed_negatives"), "fixed_negatives");
       },
       [](const RunConfig& c) { return std::string(c.fixed_negatives ? "true" : "false"); }},
      size_field("dev_pool_size", &RunConfig::dev_pool_size),
      size_field("pool_size", &RunConfig::pool_size),
      list_field("k", &RunConfig::k),
      size_field("questions", &RunConfig::questions),
      size_field("answers_per_question", &RunConfig::answers_per_question),
      size_field("vocab_chars", &RunConfig::vocab_chars),
      double_field("step", &RunConfig::step),
      double_field("tolerance", &RunConfig::tolerance),
  };
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  throw ConfigError("unknown setting '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  const Field& f = field(key);
  f.set(*this, KeyValues{{std::string(key), std::string(value)}});
}

void RunConfig::apply(const KeyValues& kv) {
  for (const auto& [key, value] : kv) set(key, value);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.key);
    return out;
  }();
  return names;
}

std::string RunConfig::get(std::string_view key) const { return field(key).get(*this); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::from_text(std::string_view text) {
  RunConfig cfg;
  cfg.apply(parse_key_values(text));
  return cfg;
}

void RunConfig::validate() const {
  model_config().validate();
  train_config().validate();
  if (split != "train" && split != "dev" && split != "test") {
    throw ConfigError("split must be train, dev or test, got '" + split + "'");
  }
  if (pool_size == 0) throw ConfigError("pool size must be positive");
  if (k.empty()) throw ConfigError("at least one K is required");
  for (std::size_t v : k) {
    if (v == 0 || v > pool_size) {
      throw ConfigError("K=" + std::to_string(v) + " must lie in [1, " + std::to_string(pool_size) + "]");
    }
  }
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("step must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig cfg = ModelConfig::for_variant(arch);
  cfg.encoder.dim = hidden;
  cfg.encoder.layers = layers;
  cfg.encoder.heads = heads;
  cfg.encoder.ffn_dim = ffn == 0 ? 4 * hidden : ffn;
  cfg.encoder.cross = cross;
  cfg.max_len = max_len;
  cfg.pooling = pooling;
  cfg.answer_segment = answer_segment;
  if (cfg.cnn) *cfg.cnn = CnnHeadConfig{kernel_sizes, feature_maps};
  if (cfg.gru) cfg.gru->hidden = gru_hidden;
  // vocabulary size is only known once a corpus is read
  cfg.vocab_size = Vocabulary::kReserved;
  return cfg;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.optimizer = AdamWConfig{lr, beta1, beta2, eps, weight_decay};
  t.loss = LossConfig{margin};
  t.epochs = epochs;
  t.batch_size = batch;
  t.seed = seed;
  t.train_fraction = train_fraction;
  t.fixed_negatives = fixed_negatives;
  t.dev_pool_size = dev_pool_size;
  return t;
}

SyntheticSpec RunConfig::synthetic_spec() const { return SyntheticSpec{questions, answers_per_question, vocab_chars, seed}; }

}  // namespace qamatch
