#include "qamatch/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include "qamatch/checkpoint.hpp"
#include "qamatch/config.hpp"
#include "qamatch/dataset.hpp"
#include "qamatch/errors.hpp"
#include "qamatch/evaluation.hpp"
#include "qamatch/gradcheck.hpp"
#include "qamatch/io.hpp"
#include "qamatch/training.hpp"

namespace qamatch {

namespace {

const std::vector<std::string> kModelKeys = {"arch",     "hidden",  "layers",       "heads",        "ffn",
                                             "cross",    "max_len", "kernel_sizes", "feature_maps", "gru_hidden",
                                             "pooling", "answer_segment"};
const std::vector<std::string> kTrainKeys = {"data_dir", "lr",    "margin", "weight_decay",   "beta1",
                                             "beta2",    "eps",   "epochs", "batch",          "seed",
                                             "train_fraction", "dev_pool_size", "checkpoint_out", "log_out"};
const std::vector<std::string> kEvalKeys = {"checkpoint", "data_dir", "pool_size", "k", "pools_file", "split", "seed"};
const std::vector<std::string> kGenKeys = {"questions", "answers_per_question", "vocab_chars", "seed", "out"};
const std::vector<std::string> kGradKeys = {"seed", "step", "tolerance"};

std::string dashed(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return key;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// Flags bound as raw text and applied through RunConfig::set, so the file
// and the command line share one parser.
struct Command {
  CLI::App* app = nullptr;
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  CLI::Option* fixed_negatives = nullptr;

  void bind(const std::vector<std::string>& keys) {
    for (const auto& key : keys) {
      if (options.count(key)) continue;
      options[key] = app->add_option("--" + dashed(key), values[key]);
    }
  }

  // defaults < command defaults < --config file < flags
  RunConfig resolve(const RunConfig& base) const {
    RunConfig cfg = base;
    if (!config_file.empty()) {
      const auto text = read_file(config_file);
      if (!text) throw InputError("cannot read config file '" + config_file + "'");
      cfg.apply(parse_key_values(*text));
    }
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) cfg.set(key, values.at(key));
    if (fixed_negatives && fixed_negatives->count() > 0) cfg.fixed_negatives = true;
    cfg.validate();
    return cfg;
  }
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required --") + flag);
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  require(cfg.data_dir, "data-dir");
  require(cfg.checkpoint_out, "checkpoint-out");
  const Dataset data = load_dataset(cfg.data_dir);
  std::string log;
  const TrainResult result = train(data, cfg.model_config(), cfg.train_config(), [&](const EpochLog& e) {
    out << e.to_line() << "\n" << std::flush;
    log += e.to_line() + "\n";
  });
  save_checkpoint(cfg.checkpoint_out, result.model, &result.optimizer, CheckpointMeta{cfg.seed, result.epochs_run});
  if (!cfg.log_out.empty()) write_file_atomic(cfg.log_out, log);
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  require(cfg.checkpoint, "checkpoint");
  require(cfg.data_dir, "data-dir");
  const LoadedCheckpoint ckpt = load_checkpoint(cfg.checkpoint);
  const Dataset data = load_dataset(cfg.data_dir);
  const std::vector<EvalPool> pools = cfg.pools_file.empty()
                                          ? build_pools(data, data.split(cfg.split), cfg.pool_size, cfg.seed)
                                          : load_pools(cfg.pools_file);
  for (const auto& pool : pools) {
    if (!data.has_question(pool.question_id)) {
      throw InputError("pool question " + std::to_string(pool.question_id) + " is not in the dataset");
    }
    for (Id c : pool.candidates)
      if (!data.has_answer(c)) throw InputError("pool candidate " + std::to_string(c) + " is not in the dataset");
  }
  out << evaluate(ckpt.model, data, pools, cfg.k).to_text();
  return 0;
}

int cmd_score(const RunConfig& cfg, const std::string& question, const std::string& answer, std::ostream& out) {
  require(cfg.checkpoint, "checkpoint");
  const LoadedCheckpoint ckpt = load_checkpoint(cfg.checkpoint);
  out << fmt("%.9f", ckpt.model.score(question, answer)) << "\n";
  return 0;
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
  require(cfg.out, "out");
  const Dataset data = generate_synthetic(cfg.synthetic_spec());
  save_dataset(data, cfg.out);
  out << summarize(data).to_text();
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const GradcheckResult r = gradcheck(cfg.model_config(), cfg.seed, cfg.step);
  out << "arch\t" << to_string(cfg.arch) << "\n";
  out << "checked\t" << r.checked << "\n";
  out << "loss\t" << fmt("%.9g", r.loss) << "\n";
  out << "worst\t" << r.worst_param << "[" << r.worst_index << "]\t" << fmt("%.9g", r.worst_analytic) << "\t"
      << fmt("%.9g", r.worst_numeric) << "\n";
  out << "max_rel_error\t" << fmt("%.3e", r.max_rel_error) << "\n";
  if (!(r.max_rel_error < cfg.tolerance)) {
    err << "gradient check failed: " << fmt("%.3e", r.max_rel_error) << " >= tolerance "
        << fmt("%.3e", cfg.tolerance) << "\n";
    return 2;
  }
  return 0;
}

RunConfig gradcheck_defaults() {
  RunConfig c;
  c.hidden = 8;
  c.max_len = 8;
  c.layers = 1;
  c.heads = 1;
  c.kernel_sizes = {2};
  c.feature_maps = 3;
  c.gru_hidden = 4;
  return c;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Question-answer matching with crossed and siamese encoders", "qamatch"};
  app.require_subcommand(1, 1);

  auto add = [&](const char* name, const char* about) {
    Command c;
    c.app = app.add_subcommand(name, about);
    c.app->add_option("--config", c.config_file, "key=value settings file; flags override it");
    return c;
  };
  Command train_cmd = add("train", "train a model and write a checkpoint");
  train_cmd.bind(kTrainKeys);
  train_cmd.bind(kModelKeys);
  train_cmd.fixed_negatives = train_cmd.app->add_flag("--fixed-negatives", "sample negatives once per run");
  Command eval_cmd = add("eval", "ACC@K of a checkpoint on candidate pools");
  eval_cmd.bind(kEvalKeys);
  Command score_cmd = add("score", "similarity of one question-answer pair");
  score_cmd.bind({"checkpoint"});
  std::string question, answer;
  score_cmd.app->add_option("--question", question)->required();
  score_cmd.app->add_option("--answer", answer)->required();
  Command gen_cmd = add("gen-data", "write a synthetic corpus");
  gen_cmd.bind(kGenKeys);
  Command grad_cmd = add("gradcheck", "compare tape gradients with finite differences");
  grad_cmd.bind(kModelKeys);
  grad_cmd.bind(kGradKeys);

  if (!args.empty() && !args.front().empty() && args.front().front() != '-' &&
      app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << "error: unknown subcommand '" << args.front() << "'\n" << app.help();
    return 1;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 1;
  }

  try {
    if (train_cmd.app->parsed()) return cmd_train(train_cmd.resolve(RunConfig{}), out);
    if (eval_cmd.app->parsed()) return cmd_eval(eval_cmd.resolve(RunConfig{}), out);
    if (score_cmd.app->parsed()) return cmd_score(score_cmd.resolve(RunConfig{}), question, answer, out);
    if (gen_cmd.app->parsed()) {
      RunConfig base;
      base.seed = SyntheticSpec{}.seed;
      return cmd_gen_data(gen_cmd.resolve(base), out);
    }
    if (grad_cmd.app->parsed()) return cmd_gradcheck(grad_cmd.resolve(gradcheck_defaults()), out, err);
    err << app.help();
    return 1;
  } catch (const UserError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace qamatch
