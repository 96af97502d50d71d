#include "robunmt/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "robunmt/data.hpp"
#include "robunmt/error.hpp"
#include "robunmt/evaluation.hpp"
#include "robunmt/training.hpp"

namespace robunmt::cli {

namespace {

void echo_config(std::ostream& err, const std::string& command,
                 const std::map<std::string, std::string>& values) {
  err << "# " << command << " resolved config\n";
  for (const auto& [k, v] : values) err << "# " << k << '=' << v << '\n';
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

void print_map(std::ostream& out, const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) out << k << '=' << v << '\n';
}

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw CLI::ValidationError("--set", "expected key=value, got '" + s + "'");
    }
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

Transformer<float> load_model(const std::string& path, Vocabulary* vocab = nullptr) {
  Checkpoint ckpt = load_checkpoint(path);
  if (vocab) *vocab = ckpt.vocab;
  return model_from_checkpoint(ckpt);
}

TestSet load_test_set(const std::string& data_dir, const Vocabulary& vocab) {
  const CorpusBundle b = bundle_paths(data_dir);
  TestSet t;
  t.l1 = encode_corpus(read_corpus(b.test_l1), vocab);
  t.l2 = encode_corpus(read_corpus(b.test_l2), vocab);
  if (t.l1.size() != t.l2.size()) {
    throw Error("malformed-corpus", "test.l1 and test.l2 differ in line count");
  }
  return t;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size()) {
      throw CLI::ValidationError("--values", "not a number: '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--values", "empty list");
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust unsupervised NMT with adversarial denoising training", "robunmt"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  std::uint64_t seed = 1;
  bool seed_given = false;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
           "--seed", [&](const std::uint64_t& s) { seed = s; seed_given = true; },
           "Seed for every random component")
        ->type_name("UINT");
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic cipher-language bundle");
  std::string gen_out, gen_config;
  std::size_t n_train = 20000, n_test = 500;
  std::vector<std::string> gen_sets;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--config", gen_config, "key=value file with language-spec keys")
      ->check(CLI::ExistingFile);
  gen->add_option("--n-train", n_train, "Sentences per training half")->check(CLI::PositiveNumber);
  gen->add_option("--n-test", n_test, "Parallel test sentences")->check(CLI::PositiveNumber);
  gen->add_option("--set", gen_sets, "Override a spec key (key=value), repeatable");
  add_seed(gen);

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a bundle");
  std::string tr_data, tr_out, tr_config, tr_mode, tr_resume;
  std::optional<std::size_t> tr_steps;
  std::vector<std::string> tr_sets;
  bool tr_quiet = false;
  tr->add_option("--data", tr_data, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--config", tr_config, "key=value training config")->check(CLI::ExistingFile);
  tr->add_option("--mode", tr_mode, "none|word_at|position_at|both_at")
      ->check(CLI::IsMember({"none", "word_at", "position_at", "both_at"}));
  tr->add_option("--steps", tr_steps, "Training steps");
  tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
  tr->add_option("--set", tr_sets, "Override a config key (key=value), repeatable");
  tr->add_flag("--quiet", tr_quiet, "No progress output");
  add_seed(tr);

  // translate
  auto* tl = app.add_subcommand("translate", "Translate a corpus file");
  std::string tl_in, tl_out, tl_ckpt, tl_src = "l1", tl_tgt = "l2";
  tl->add_option("--in", tl_in, "Input corpus (one sentence per line)")->required();
  tl->add_option("--out", tl_out, "Output file (default stdout)");
  tl->add_option("--checkpoint", tl_ckpt, "Model checkpoint")->required();
  tl->add_option("--src", tl_src, "Source language")->check(CLI::IsMember({"l1", "l2"}));
  tl->add_option("--tgt", tl_tgt, "Target language")->check(CLI::IsMember({"l1", "l2"}));

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a bundle's test set");
  std::string ev_ckpt, ev_data;
  double ev_a = 0.0, ev_b = 0.0;
  ev->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required();
  ev->add_option("--data", ev_data, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--a", ev_a, "Word noise probability")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--b", ev_b, "Word-order noise magnitude")->check(CLI::NonNegativeNumber);
  add_seed(ev);

  // sweep
  auto* sw = app.add_subcommand("sweep", "Noise sweep along one axis");
  std::string sw_ckpt, sw_data, sw_axis = "a", sw_values, sw_out;
  sw->add_option("--checkpoint", sw_ckpt, "Model checkpoint")->required();
  sw->add_option("--data", sw_data, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  sw->add_option("--axis", sw_axis, "a or b")->check(CLI::IsMember({"a", "b"}));
  sw->add_option("--values", sw_values, "Comma-separated noise levels (default: standard axis)");
  sw->add_option("--out", sw_out, "CSV output path (default stdout)");
  add_seed(sw);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return 2;
  }

  try {
    if (gen->parsed()) {
      std::map<std::string, std::string> spec_map;
      if (!gen_config.empty()) spec_map = read_key_values(gen_config);
      for (const auto& [k, v] : parse_overrides(gen_sets)) spec_map[k] = v;
      const ToyLanguageSpec spec = ToyLanguageSpec::from_map(spec_map);
      spec.validate();
      auto resolved = spec.to_map();
      resolved["n_train"] = std::to_string(n_train);
      resolved["n_test"] = std::to_string(n_test);
      resolved["seed"] = std::to_string(seed);
      echo_config(err, "gen-data", resolved);
      auto b = generate_bundle(spec, n_train, n_test, seed, gen_out);
      out << "out=" << gen_out << "\nn_train=" << b.n_train << "\nn_test=" << b.n_test << '\n';
      return 0;
    }
    if (tr->parsed()) {
      std::map<std::string, std::string> values;
      if (!tr_config.empty()) values = read_key_values(tr_config);
      if (!tr_mode.empty()) values["mode"] = tr_mode;
      if (tr_steps) values["steps"] = std::to_string(*tr_steps);
      if (seed_given) values["seed"] = std::to_string(seed);
      for (const auto& [k, v] : parse_overrides(tr_sets)) values[k] = v;
      const TrainConfig config = TrainConfig::from_map(values);
      echo_config(err, "train", config.to_map());
      std::optional<std::filesystem::path> resume;
      if (!tr_resume.empty()) resume = tr_resume;
      auto progress = [&](const StepMetrics& m) {
        if (!tr_quiet && (m.step % 100 == 0 || m.step == config.steps)) {
          err << format_metrics(m) << '\n';
        }
      };
      auto result = train(config, tr_data, tr_out, resume, progress);
      out << "final_checkpoint=" << result.final_checkpoint.string() << '\n'
          << "metrics_log=" << result.metrics_log.string() << '\n'
          << "steps_run=" << result.steps_run << '\n'
          << "seconds=" << fixed(result.seconds, 1) << '\n';
      return 0;
    }
    if (tl->parsed()) {
      Vocabulary vocab;
      const auto model = load_model(tl_ckpt, &vocab);
      std::size_t unknown = 0;
      const auto sources = encode_corpus(read_corpus(tl_in), vocab, &unknown);
      const auto outputs =
          translate(model, sources, parse_language(tl_src), parse_language(tl_tgt));
      std::ofstream file;
      if (!tl_out.empty()) {
        file.open(tl_out);
        if (!file) throw Error("io-error", "cannot write " + tl_out);
      }
      std::ostream& dst = tl_out.empty() ? out : file;
      for (const auto& s : outputs) dst << vocab.join(s) << '\n';
      err << "# translated=" << outputs.size() << " unknown_tokens=" << unknown << '\n';
      return 0;
    }
    if (ev->parsed()) {
      Vocabulary vocab;
      const auto model = load_model(ev_ckpt, &vocab);
      const TestSet test = load_test_set(ev_data, vocab);
      const NoiseSpec noise = eval_noise(ev_a, ev_b, seed);
      echo_config(err, "evaluate", {{"a", fixed(ev_a)}, {"b", fixed(ev_b)}, {"seed", std::to_string(seed)}});
      std::map<std::string, std::string> r;
      r["a"] = fixed(ev_a);
      r["b"] = fixed(ev_b);
      r["sentences"] = std::to_string(test.l1.size());
      r["bleu_l1_l2"] = fixed(evaluate_translation(model, test, Language::l1, noise).score);
      r["bleu_l2_l1"] = fixed(evaluate_translation(model, test, Language::l2, noise).score);
      r["ae_l1"] = fixed(evaluate_autoencoder(model, test.l1, Language::l1, noise).score);
      r["ae_l2"] = fixed(evaluate_autoencoder(model, test.l2, Language::l2, noise).score);
      r["sim_l1_l2"] = fixed(similarity(model, test.l1, Language::l1, noise).score);
      r["sim_l2_l1"] = fixed(similarity(model, test.l2, Language::l2, noise).score);
      print_map(out, r);
      return 0;
    }
    if (sw->parsed()) {
      const SweepAxis axis = parse_axis(sw_axis);
      const auto values = sw_values.empty() ? default_axis(axis) : parse_values(sw_values);
      Vocabulary vocab;
      const auto model = load_model(sw_ckpt, &vocab);
      const TestSet test = load_test_set(sw_data, vocab);
      std::string joined;
      for (double v : values) joined += (joined.empty() ? "" : ",") + fixed(v);
      echo_config(err, "sweep", {{"axis", sw_axis}, {"values", joined}, {"seed", std::to_string(seed)}});
      const SweepResult result = sweep(model, test, axis, values, seed);
      if (sw_out.empty()) {
        out << result.csv();
      } else {
        std::ofstream file(sw_out);
        if (!file) throw Error("io-error", "cannot write " + sw_out);
        file << result.csv();
      }
      for (const auto& [k, v] : result.summary()) err << "# " << k << '=' << v << '\n';
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.category() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace robunmt::cli
