#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qamatch/dataset.hpp"
#include "qamatch/model.hpp"

namespace qamatch {

struct Triplet {
  Id question_id = 0;
  Id positive_id = 0;
  Id negative_id = 0;

  bool operator==(const Triplet&) const = default;
};

// One triplet per (question, linked answer), with a uniform negative drawn
// from answers not linked to the question, shuffled. Seeded by (seed, epoch).
// DatasetError when a question has no possible negative.
std::vector<Triplet> sample_triplets(const Dataset& data, std::span<const Id> questions, std::uint64_t seed,
                                     std::uint64_t epoch);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

struct OptimizerState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// theta <- theta * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps).
// Moments are created on the first step. ContractError when a parameter has
// no gradient or the parameter list changed shape.
void adamw_step(std::span<const NamedTensor> params, OptimizerState& state);

struct TrainConfig {
  AdamWConfig optimizer;
  LossConfig loss;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double train_fraction = 1.0;
  // Sample negatives once instead of every epoch.
  bool fixed_negatives = false;
  // Dev ACC@1 after each epoch over pools of this size; 0 disables it.
  std::size_t dev_pool_size = 10;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> dev_acc1;

  // "epoch\tmean_loss\tdev_acc@1" ("-" when dev accuracy was not computed).
  std::string to_line() const;
};

struct TrainResult {
  Model model;
  OptimizerState optimizer;
  std::vector<EpochLog> log;
  std::size_t epochs_run = 0;
};

// Questions of the train split kept by `train_fraction` (drawn once per run).
std::vector<Id> subsample_questions(std::span<const Id> questions, double fraction, std::uint64_t seed);

// Builds the vocabulary from every dataset text, initializes the model from
// `seed` and runs the epoch loop. `on_epoch` sees each log entry as it lands.
TrainResult train(const Dataset& data, ModelConfig cfg, const TrainConfig& train_cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Same loop on an existing model and optimizer state.
std::vector<EpochLog> train_model(Model& model, OptimizerState& optimizer, const Dataset& data,
                                  const TrainConfig& train_cfg,
                                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Mean margin loss over `triplets` with fixed parameters (no updates).
double mean_triplet_loss(const Model& model, const Dataset& data, std::span<const Triplet> triplets,
                         const LossConfig& loss);

}  // namespace qamatch
