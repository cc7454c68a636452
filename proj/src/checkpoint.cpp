#include "qamatch/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "qamatch/errors.hpp"
#include "qamatch/io.hpp"
#include "qamatch/keyvalue.hpp"

namespace qamatch {

namespace {

constexpr char kMagic[4] = {'Q', 'A', 'M', 'C'};

class Writer {
 public:
  void bytes(std::string_view b) { out_.append(b); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n, const char* what) {
    if (n > in_.size() - pos_) {
      throw LoadError("checkpoint truncated while reading " + std::string(what) + " at byte " + std::to_string(pos_));
    }
    auto out = in_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(bytes(1, what)[0]); }
  std::uint32_t u32(const char* what) {
    const auto b = bytes(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const auto b = bytes(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string_view str(const char* what) { return bytes(u32(what), what); }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Model& model, const OptimizerState* optimizer, const CheckpointMeta& meta) {
  Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kCheckpointVersion);
  w.str(model.config().to_text() + "seed=" + std::to_string(meta.seed) + "\nepoch=" + std::to_string(meta.epoch) + "\n");
  const Sha256 hash = model.vocab().content_hash();
  w.bytes(std::string_view(reinterpret_cast<const char*>(hash.data()), hash.size()));

  const auto named = model.params().named();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& nt : named) {
    w.str(nt.path);
    const Shape& shape = nt.tensor->shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : nt.tensor->data()) w.f32(static_cast<float>(v));
  }

  w.u8(optimizer ? 1 : 0);
  if (optimizer) {
    if (optimizer->m.size() != named.size() && optimizer->step != 0) {
      throw ContractError("optimizer state does not match the model parameters");
    }
    const auto& c = optimizer->config;
    w.u64(optimizer->step);
    for (double v : {c.lr, c.beta1, c.beta2, c.eps, c.weight_decay}) w.f64(v);
    w.u8(optimizer->m.empty() ? 0 : 1);
    for (std::size_t i = 0; i < optimizer->m.size(); ++i) {
      for (double v : optimizer->m[i].data()) w.f64(v);
      for (double v : optimizer->v[i].data()) w.f64(v);
    }
  }
  return w.take();
}

LoadedCheckpoint parse_checkpoint(std::string_view bytes, const Vocabulary& vocab) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string_view(kMagic, 4)) throw LoadError("not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw LoadError("unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const std::string text(r.str("config"));
  ModelConfig cfg;
  CheckpointMeta meta;
  try {
    cfg = ModelConfig::from_text(text);
    const KeyValues kv = parse_key_values(text);
    meta.seed = kv_u64(kv, "seed");
    meta.epoch = kv_u64(kv, "epoch");
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint configuration is invalid: ") + e.what());
  }

  Sha256 stored{};
  const auto hash_bytes = r.bytes(stored.size(), "vocabulary hash");
  std::memcpy(stored.data(), hash_bytes.data(), stored.size());
  if (stored != vocab.content_hash()) {
    throw LoadError("vocabulary hash mismatch: checkpoint expects " + to_hex(stored) + ", vocabulary is " +
                    to_hex(vocab.content_hash()));
  }
  if (cfg.vocab_size != vocab.size()) {
    throw LoadError("checkpoint expects " + std::to_string(cfg.vocab_size) + " vocabulary entries");
  }

  ModelParams params = ModelParams::init(cfg, 0);
  auto named = params.named();
  const std::uint32_t count = r.u32("parameter count");
  if (count != named.size()) {
    throw LoadError("checkpoint has " + std::to_string(count) + " parameter records, configuration needs " +
                    std::to_string(named.size()));
  }
  for (auto& nt : named) {
    const std::string_view path = r.str("parameter path");
    if (path != nt.path) {
      throw LoadError("parameter record '" + std::string(path) + "' where '" + nt.path + "' was expected");
    }
    const std::uint32_t rank = r.u32("rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank && i < 4; ++i) shape.push_back(r.u32("dimension"));
    if (rank > 3 || shape != nt.tensor->shape()) {
      throw LoadError("parameter " + nt.path + " has shape " + shape_str(shape) + ", expected " +
                      shape_str(nt.tensor->shape()));
    }
    for (double& v : nt.tensor->data()) v = static_cast<double>(r.f32("parameter values"));
  }

  std::optional<OptimizerState> optimizer;
  if (r.u8("optimizer flag") == 1) {
    OptimizerState state;
    state.step = r.u64("optimizer step");
    auto& c = state.config;
    for (double* v : {&c.lr, &c.beta1, &c.beta2, &c.eps, &c.weight_decay}) *v = r.f64("optimizer settings");
    if (r.u8("moment flag") == 1) {
      for (const auto& nt : named) {
        Tensor m(nt.tensor->shape()), v(nt.tensor->shape());
        for (double& x : m.data()) x = r.f64("first moments");
        for (double& x : v.data()) x = r.f64("second moments");
        state.m.push_back(std::move(m));
        state.v.push_back(std::move(v));
      }
    }
    optimizer = std::move(state);
  }
  if (!r.done()) throw LoadError("trailing bytes after checkpoint payload");
  return LoadedCheckpoint{Model(std::move(cfg), vocab, std::move(params)), std::move(optimizer), meta};
}

std::filesystem::path vocab_sidecar(const std::filesystem::path& checkpoint) { return checkpoint.string() + ".vocab"; }

void save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimizerState* optimizer,
                     const CheckpointMeta& meta) {
  const std::string bytes = serialize_checkpoint(model, optimizer, meta);
  model.vocab().save(vocab_sidecar(path));
  write_file_atomic(path, bytes);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return load_checkpoint(path, Vocabulary::load(vocab_sidecar(path)));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab) {
  const auto bytes = read_file(path);
  if (!bytes) throw LoadError("cannot open checkpoint " + path.string());
  return parse_checkpoint(*bytes, vocab);
}

}  // namespace qamatch
