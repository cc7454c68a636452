#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "qamatch/checkpoint.hpp"
#include "qamatch/cli.hpp"
#include "qamatch/config.hpp"
#include "qamatch/dataset.hpp"
#include "qamatch/errors.hpp"
#include "qamatch/evaluation.hpp"
#include "qamatch/gradcheck.hpp"
#include "qamatch/training.hpp"

namespace py = pybind11;
using namespace qamatch;

namespace {

struct Trained {
  Model model;
  OptimizerState optimizer;
  std::vector<EpochLog> log;
};

}  // namespace

PYBIND11_MODULE(_qamatch, m) {
  m.doc() = "question-answer matching with siamese and crossed encoders";

  static py::exception<Error> error(m, "Error");
  static py::exception<UserError> user_error(m, "UserError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const UserError& e) {
      user_error(e.what());
    } catch (const Error& e) {
      error(e.what());
    }
  });

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("from_text", &RunConfig::from_text)
      .def_static("keys", &RunConfig::keys)
      .def("set", [](RunConfig& c, const std::string& k, const std::string& v) { c.set(k, v); })
      .def("get", [](const RunConfig& c, const std::string& k) { return c.get(k); })
      .def("to_text", &RunConfig::to_text)
      .def("validate", &RunConfig::validate)
      .def("__eq__", &RunConfig::operator==)
      .def("__repr__", [](const RunConfig& c) { return "RunConfig(<" + std::to_string(c.keys().size()) + " keys>)"; });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("train", &Dataset::train)
      .def_readonly("dev", &Dataset::dev)
      .def_readonly("test", &Dataset::test)
      .def("question_text", &Dataset::question_text)
      .def("answer_text", [](const Dataset& d, Id id) { return d.answer(id).text; })
      .def("answer_question", [](const Dataset& d, Id id) { return d.answer(id).question_id; })
      .def("answers_of", [](const Dataset& d, Id q) { return std::vector<Id>(d.answers_of(q).begin(), d.answers_of(q).end()); })
      .def("answer_ids", &Dataset::answer_ids)
      .def_property_readonly("num_questions", [](const Dataset& d) { return d.questions().size(); })
      .def_property_readonly("num_answers", [](const Dataset& d) { return d.answers().size(); })
      .def("summary", [](const Dataset& d) { return summarize(d).to_text(); })
      .def("__eq__", &Dataset::operator==);

  m.def("load_dataset", &load_dataset, py::arg("dir"));
  m.def("save_dataset", &save_dataset, py::arg("data"), py::arg("dir"));
  m.def(
      "generate_synthetic",
      [](std::size_t n, std::size_t per_q, std::size_t chars, std::uint64_t seed) {
        return generate_synthetic({n, per_q, chars, seed});
      },
      py::arg("n_questions") = 30, py::arg("answers_per_question") = 2, py::arg("vocab_chars") = 40,
      py::arg("seed") = 7);

  py::class_<Model>(m, "Model")
      .def("score", &Model::score, py::arg("question"), py::arg("answer"))
      .def("score_candidates",
           [](const Model& model, const std::string& q, const std::vector<std::string>& answers) {
             std::vector<EncodedSequence> enc;
             for (const auto& a : answers) enc.push_back(model.encode(a));
             return model.score_candidates(model.encode(q), enc);
           })
      .def_property_readonly("config_text", [](const Model& model) { return model.config().to_text(); })
      .def_property_readonly("parameter_count", [](const Model& model) { return model.params().count(); });

  py::class_<EpochLog>(m, "EpochLog")
      .def_readonly("epoch", &EpochLog::epoch)
      .def_readonly("mean_loss", &EpochLog::mean_loss)
      .def_readonly("dev_acc1", &EpochLog::dev_acc1)
      .def("to_line", &EpochLog::to_line);

  py::class_<Trained>(m, "TrainResult")
      .def_readonly("model", &Trained::model)
      .def_readonly("log", &Trained::log)
      .def(
          "save",
          [](const Trained& t, const std::filesystem::path& path, std::uint64_t seed) {
            save_checkpoint(path, t.model, &t.optimizer, CheckpointMeta{seed, t.log.size()});
          },
          py::arg("path"), py::arg("seed") = 0);

  m.def(
      "train",
      [](const Dataset& data, const RunConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
        cfg.validate();
        py::gil_scoped_release release;
        TrainResult r = train(data, cfg.model_config(), cfg.train_config(), [&](const EpochLog& e) {
          if (!on_epoch) return;
          py::gil_scoped_acquire acquire;
          on_epoch(e);
        });
        return Trained{std::move(r.model), std::move(r.optimizer), std::move(r.log)};
      },
      py::arg("data"), py::arg("config"), py::arg("on_epoch") = nullptr);

  m.def(
      "load_model", [](const std::filesystem::path& path) { return load_checkpoint(path).model; }, py::arg("path"));

  m.def(
      "evaluate",
      [](const Model& model, const Dataset& data, const std::string& split, std::size_t pool_size,
         std::vector<std::size_t> ks, std::uint64_t seed) {
        const auto pools = build_pools(data, data.split(split), pool_size, seed);
        const EvalReport r = evaluate(model, data, pools, ks);
        py::dict out;
        for (std::size_t i = 0; i < r.ks.size(); ++i) out[py::int_(r.ks[i])] = r.accuracy[i];
        return out;
      },
      py::arg("model"), py::arg("data"), py::arg("split") = "test", py::arg("pool_size") = 100,
      py::arg("ks") = std::vector<std::size_t>{1}, py::arg("seed") = 1);

  m.def(
      "acc_at_k",
      [](const std::vector<std::vector<double>>& scores, const std::vector<std::vector<std::size_t>>& relevant,
         std::size_t k) {
        if (scores.size() != relevant.size()) throw InputError("scores and relevant lists differ in length");
        std::vector<EvalPool> pools;
        std::vector<Ranking> rankings;
        for (std::size_t p = 0; p < scores.size(); ++p) {
          EvalPool pool{p, {}, {}};
          for (std::size_t c = 0; c < scores[p].size(); ++c) pool.candidates.push_back(c);
          for (std::size_t r : relevant[p]) pool.relevant.push_back(r);
          pool.validate();
          rankings.push_back(rank_by_score(pool.candidates, scores[p]));
          pools.push_back(std::move(pool));
        }
        return acc_at_k(pools, rankings, k);
      },
      py::arg("scores"), py::arg("relevant"), py::arg("k"),
      "ACC@K where pool i ranks candidates 0..n-1 by scores[i] and relevant[i] lists the relevant indices.");

  m.def("margin_loss", [](double pos, double neg, double margin) { return margin_loss(pos, neg, LossConfig{margin}); },
        py::arg("sim_pos"), py::arg("sim_neg"), py::arg("margin") = 0.1);

  m.def(
      "gradcheck",
      [](const RunConfig& cfg) {
        cfg.validate();
        const GradcheckResult r = gradcheck(cfg.model_config(), cfg.seed, cfg.step);
        py::dict out;
        out["max_rel_error"] = r.max_rel_error;
        out["worst_param"] = r.worst_param;
        out["worst_index"] = r.worst_index;
        out["checked"] = r.checked;
        out["loss"] = r.loss;
        return out;
      },
      py::arg("config"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one qamatch command; returns (exit_code, stdout, stderr).");
}
