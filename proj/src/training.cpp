#include "qamatch/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "qamatch/errors.hpp"
#include "qamatch/evaluation.hpp"
#include "qamatch/keyvalue.hpp"
#include "qamatch/random.hpp"

namespace qamatch {

namespace {
constexpr std::uint64_t kTripletTag = 0x7219;
constexpr std::uint64_t kSubsampleTag = 0x5b5a;
constexpr std::uint64_t kDevPoolTag = 0xde7;
}  // namespace

std::vector<Triplet> sample_triplets(const Dataset& data, std::span<const Id> questions, std::uint64_t seed,
                                     std::uint64_t epoch) {
  Rng rng = make_rng(seed, {kTripletTag, epoch});
  const auto& all = data.answer_ids();
  std::vector<Triplet> out;
  for (Id q : questions) {
    const auto linked = data.answers_of(q);
    if (linked.empty()) throw DatasetError("question " + std::to_string(q) + " has no linked answer");
    if (linked.size() == all.size()) {
      throw DatasetError("question " + std::to_string(q) + " has no possible negative answer");
    }
    // Positions of the linked answers inside `all`, ascending; the k-th
    // unlinked answer is found by stepping over them.
    std::vector<std::size_t> skip;
    for (Id l : linked) {
      skip.push_back(static_cast<std::size_t>(std::lower_bound(all.begin(), all.end(), l) - all.begin()));
    }
    std::uniform_int_distribution<std::size_t> pick(0, all.size() - linked.size() - 1);
    for (Id pos : linked) {
      std::size_t cand = pick(rng);
      for (std::size_t p : skip) {
        if (p > cand) break;
        ++cand;
      }
      const Id neg = all[cand];
      out.push_back(Triplet{q, pos, neg});
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

void AdamWConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive, got " + format_double(lr));
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight decay must be non-negative");
}

void adamw_step(std::span<const NamedTensor> params, OptimizerState& state) {
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor->shape());
      state.v.emplace_back(p.tensor->shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("optimizer holds " + std::to_string(state.m.size()) + " moment buffers for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor->has_grad()) throw ContractError("parameter " + params[i].path + " has no gradient");
    if (state.m[i].shape() != params[i].tensor->shape()) {
      throw ContractError("moment buffer shape mismatch for " + params[i].path);
    }
  }

  const AdamWConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = *params[i].tensor;
    const auto g = theta.grad();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    auto w = theta.data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] = w[j] * decay - c.lr * (m_hat / (std::sqrt(v_hat) + c.eps));
    }
  }
}

void TrainConfig::validate() const {
  optimizer.validate();
  loss.validate();
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1], got " + format_double(train_fraction));
  }
}

std::string EpochLog::to_line() const {
  char buf[96];
  if (dev_acc1) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f", epoch, mean_loss, *dev_acc1);
  } else {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t-", epoch, mean_loss);
  }
  return buf;
}

std::vector<Id> subsample_questions(std::span<const Id> questions, double fraction, std::uint64_t seed) {
  if (fraction >= 1.0) return {questions.begin(), questions.end()};
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(questions.size())));
  Rng rng = make_rng(seed, {kSubsampleTag});
  std::vector<Id> out;
  std::sample(questions.begin(), questions.end(), std::back_inserter(out), keep, rng);
  return out;
}

namespace {

// Pre-encoded question and answer texts.
struct EncodedCorpus {
  std::map<Id, EncodedSequence> questions;
  std::map<Id, EncodedSequence> answers;

  EncodedCorpus(const Model& model, const Dataset& data) {
    for (const auto& [id, text] : data.questions()) questions.emplace(id, model.encode(text));
    for (const auto& [id, a] : data.answers()) answers.emplace(id, model.encode(a.text));
  }
};

Var triplet_loss(Tape& tape, const Model& model, const EncodedCorpus& corpus, const Triplet& t,
                 const LossConfig& loss) {
  const auto& q = corpus.questions.at(t.question_id);
  auto pos = model.forward(tape, q, corpus.answers.at(t.positive_id));
  auto neg = model.forward(tape, q, corpus.answers.at(t.negative_id));
  return margin_loss(cosine(pos.question, pos.answer), cosine(neg.question, neg.answer), loss);
}

std::string describe(const Triplet& t) {
  return "triplet (question " + std::to_string(t.question_id) + ", positive " + std::to_string(t.positive_id) +
         ", negative " + std::to_string(t.negative_id) + ")";
}

}  // namespace

double mean_triplet_loss(const Model& model, const Dataset& data, std::span<const Triplet> triplets,
                         const LossConfig& loss) {
  if (triplets.empty()) return 0.0;
  const EncodedCorpus corpus(model, data);
  double total = 0.0;
  for (const auto& t : triplets) {
    Tape tape(false);
    total += triplet_loss(tape, model, corpus, t, loss).item();
  }
  return total / static_cast<double>(triplets.size());
}

std::vector<EpochLog> train_model(Model& model, OptimizerState& optimizer, const Dataset& data,
                                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  optimizer.config.validate();
  data.validate();
  const EncodedCorpus corpus(model, data);
  const std::vector<Id> questions = subsample_questions(data.train, cfg.train_fraction, cfg.seed);

  std::vector<EvalPool> dev_pools;
  if (cfg.dev_pool_size > 0 && !data.dev.empty()) {
    dev_pools = build_pools(data, data.dev, cfg.dev_pool_size, make_rng(cfg.seed, {kDevPoolTag})());
  }

  ModelParams& params = model.params();
  params.set_requires_grad(true);
  const auto named = params.named();
  std::vector<Triplet> fixed;
  if (cfg.fixed_negatives) fixed = sample_triplets(data, questions, cfg.seed, 0);

  std::vector<EpochLog> log;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<Triplet> triplets = cfg.fixed_negatives ? fixed : sample_triplets(data, questions, cfg.seed, epoch);
    if (triplets.empty()) continue;

    double total = 0.0;
    for (std::size_t start = 0; start < triplets.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(triplets.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      params.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        try {
          Tape tape;
          Var loss = triplet_loss(tape, model, corpus, triplets[i], cfg.loss);
          total += loss.item();
          if (loss.item() > 0.0) tape.backward(op::scale(loss, inv));
        } catch (const NumericError& e) {
          throw NumericError(describe(triplets[i]) + " in epoch " + std::to_string(epoch) + ": " + e.what());
        }
      }
      adamw_step(named, optimizer);
    }

    EpochLog entry{epoch, total / static_cast<double>(triplets.size()), std::nullopt};
    if (!dev_pools.empty()) {
      std::vector<Ranking> rankings;
      for (const auto& pool : dev_pools) rankings.push_back(rank_pool(pool, model, data));
      entry.dev_acc1 = acc_at_k(dev_pools, rankings, 1);
    }
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  params.set_requires_grad(false);
  return log;
}

TrainResult train(const Dataset& data, ModelConfig cfg, const TrainConfig& train_cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  train_cfg.validate();
  data.validate();
  const auto texts = data.texts();
  Model model = Model::create(std::move(cfg), build_vocab(texts), train_cfg.seed);
  OptimizerState optimizer{train_cfg.optimizer, 0, {}, {}};
  auto log = train_model(model, optimizer, data, train_cfg, on_epoch);
  const std::size_t epochs = train_cfg.epochs;
  return TrainResult{std::move(model), std::move(optimizer), std::move(log), epochs};
}

}  // namespace qamatch
