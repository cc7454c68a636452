#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qamatch/dataset.hpp"
#include "qamatch/keyvalue.hpp"
#include "qamatch/model.hpp"
#include "qamatch/training.hpp"

namespace qamatch {

// Every tunable of every command. Keys in files use underscores; the CLI
// spells the same keys with dashes (max_len <-> --max-len).
struct RunConfig {
  // data and artifacts
  std::string data_dir;
  std::string checkpoint;
  std::string checkpoint_out;
  std::string log_out;
  std::string pools_file;
  std::string out;
  std::string split = "test";

  // model
  Variant arch = Variant::CrossedBertSiamese;
  std::size_t hidden = 32;
  std::size_t layers = 1;
  std::size_t heads = 1;
  std::size_t ffn = 0;  // 0: four times hidden
  CrossSchedule cross = CrossSchedule::EveryLayer;
  std::size_t max_len = 32;
  Pooling pooling = Pooling::MeanUsefulToken;
  std::int32_t answer_segment = 0;
  std::vector<std::size_t> kernel_sizes = {2, 3};
  std::size_t feature_maps = 8;
  std::size_t gru_hidden = 8;

  // training
  double lr = 1e-3;
  double margin = 0.1;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 10;
  std::size_t batch = 16;
  std::uint64_t seed = 1;
  double train_fraction = 1.0;
  bool fixed_negatives = false;
  std::size_t dev_pool_size = 10;

  // evaluation
  std::size_t pool_size = 100;
  std::vector<std::size_t> k = {1};

  // synthetic corpus
  std::size_t questions = 30;
  std::size_t answers_per_question = 2;
  std::size_t vocab_chars = 40;

  // gradcheck
  double step = 1e-5;
  double tolerance = 1e-4;

  // Sets one field from its text form; ConfigError on an unknown key or a
  // malformed value.
  void set(std::string_view key, std::string_view value);
  void apply(const KeyValues& kv);

  static const std::vector<std::string>& keys();
  std::string get(std::string_view key) const;
  // Canonical key=value text over every key.
  std::string to_text() const;
  static RunConfig from_text(std::string_view text);

  // Module-level checks that need no data: dims, heads, kernels vs length,
  // optimizer ranges, margin range, K values.
  void validate() const;

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  SyntheticSpec synthetic_spec() const;

  bool operator==(const RunConfig& other) const { return to_text() == other.to_text(); }
};

}  // namespace qamatch
