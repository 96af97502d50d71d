#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "robunmt/adversarial.hpp"
#include "robunmt/checkpoint.hpp"
#include "robunmt/cli.hpp"
#include "robunmt/data.hpp"
#include "robunmt/error.hpp"
#include "robunmt/evaluation.hpp"
#include "robunmt/training.hpp"

namespace py = pybind11;
using namespace robunmt;

namespace {

std::map<std::string, std::string> stringify(const py::dict& d) {
  std::map<std::string, std::string> out;
  for (auto [k, v] : d) out[py::str(k)] = py::str(v);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Robust unsupervised NMT toolkit (C++ core)";

  static py::exception<Error> error(m, "RobunmtError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::setattr(error, "category", py::str(e.category()));
      error((e.category() + ": " + e.what()).c_str());
    }
  });

  m.def(
      "bleu",
      [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
        std::vector<std::vector<std::string>> h, r;
        for (const auto& s : hyps) h.push_back(split_tokens(s));
        for (const auto& s : refs) r.push_back(split_tokens(s));
        return bleu(h, r).score;
      },
      py::arg("hypotheses"), py::arg("references"),
      "Corpus BLEU (0-100) of whitespace-tokenized lines.");

  m.def(
      "order_noise",
      [](const std::vector<int>& tokens, double b, std::uint64_t seed) {
        Rng rng(seed);
        auto r = order_noise(tokens, b, rng);
        return py::make_tuple(r.sentence, r.permutation.gamma);
      },
      py::arg("tokens"), py::arg("b"), py::arg("seed") = 0,
      "Returns (shuffled tokens, gamma) with |gamma[i] - i| <= b.");

  m.def(
      "word_noise",
      [](const std::vector<int>& tokens, double a, std::size_t vocab_size, std::uint64_t seed) {
        Rng rng(seed);
        return word_noise(tokens, a, vocab_size, rng);
      },
      py::arg("tokens"), py::arg("a"), py::arg("vocab_size"), py::arg("seed") = 0);

  m.def(
      "make_delta",
      [](const std::vector<double>& grad, std::size_t rows, std::size_t width, std::size_t dim,
         double eps) {
        return make_delta<double>(grad, rows, width, dim, eps, PerturbTarget::word_embedding).delta;
      },
      py::arg("grad"), py::arg("rows"), py::arg("width"), py::arg("dim"), py::arg("eps"),
      "Per-sentence eps * g / ||g|| over row blocks of width*dim values.");

  m.def(
      "generate_bundle",
      [](const std::filesystem::path& out_dir, std::size_t n_train, std::size_t n_test,
         std::uint64_t seed, const py::dict& spec) {
        generate_bundle(ToyLanguageSpec::from_map(stringify(spec)), n_train, n_test, seed, out_dir);
      },
      py::arg("out_dir"), py::arg("n_train"), py::arg("n_test"), py::arg("seed") = 1,
      py::arg("spec") = py::dict());

  m.def(
      "train",
      [](const py::dict& config, const std::filesystem::path& data_dir,
         const std::filesystem::path& out_dir) {
        TrainConfig cfg = TrainConfig::from_map(stringify(config));
        TrainOutputs r;
        {
          py::gil_scoped_release release;
          r = train(cfg, data_dir, out_dir);
        }
        py::dict d;
        d["final_checkpoint"] = r.final_checkpoint;
        d["metrics_log"] = r.metrics_log;
        d["steps_run"] = r.steps_run;
        d["seconds"] = r.seconds;
        return d;
      },
      py::arg("config"), py::arg("data_dir"), py::arg("out_dir"),
      "Trains with a flat key=value config dict; returns output paths.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir, double a,
         double b, std::uint64_t seed) {
        Checkpoint ckpt = load_checkpoint(checkpoint);
        auto model = model_from_checkpoint(ckpt);
        Corpora corpora = load_corpora(data_dir, ckpt.vocab);
        const NoiseSpec noise = eval_noise(a, b, seed);
        py::dict d;
        d["bleu_l1_l2"] = evaluate_translation(model, corpora.test, Language::l1, noise).score;
        d["bleu_l2_l1"] = evaluate_translation(model, corpora.test, Language::l2, noise).score;
        d["sim_l1_l2"] = similarity(model, corpora.test.l1, Language::l1, noise).score;
        d["sim_l2_l1"] = similarity(model, corpora.test.l2, Language::l2, noise).score;
        return d;
      },
      py::arg("checkpoint"), py::arg("data_dir"), py::arg("a") = 0.0, py::arg("b") = 0.0,
      py::arg("seed") = 1);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI subcommand in-process; returns (exit_code, stdout, stderr).");
}
