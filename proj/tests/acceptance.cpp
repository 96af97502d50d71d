// Acceptance suite: one PASS/FAIL line per criterion.
//
// Criteria 7-9 need trained models. Runs are cached under the artifacts
// directory (one subdirectory per mode/seed/steps, keyed by the resolved
// training config) so repeated invocations only re-evaluate; the training
// time recorded when a run was produced is what the runtime budgets check.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "robunmt/data.hpp"
#include "robunmt/evaluation.hpp"
#include "robunmt/grad_check.hpp"
#include "robunmt/noise.hpp"
#include "robunmt/training.hpp"
#include "test_util.hpp"

using namespace robunmt;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------- 1..6

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  Rng rng(42);
  Transformer<double> model(testing::tiny_config(20, 16), 99);
  Batch clean = make_batch(testing::random_sentences(rng, 4, 20, 3, 8), Language::l1, 12);
  Rng draw(5);
  Batch noisy = corrupt_batch(clean, testing::corruption(), draw, 12);
  auto loss = [&](Graph<double>& g) {
    auto enc = model.encode(g, noisy, nullptr, nullptr);
    return model.decode_loss(g, enc, clean);
  };
  double worst = 0.0;
  std::size_t checked = 0;
  std::string worst_name;
  for (auto* p : model.parameters()) {
    auto r = grad_check_parameter<double>(loss, *p, 1e-5);
    checked += r.coordinates_checked;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = p->name;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 60.0,
          "max_rel_err=" + fmt(worst * 1e9, 3) + "e-9 (" + worst_name + ") coords=" +
              std::to_string(checked) + " runtime=" + fmt(secs, 1) + "s"};
}

Outcome perturbation_contracts() {
  Rng rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  double norm_err = 0.0, cos_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t rows = 1 + uniform_index(rng, 4), width = 1 + uniform_index(rng, 12),
                      dim = 1 + uniform_index(rng, 32);
    const double eps = std::exp(n(rng));
    const double scale = std::exp(3.0 * n(rng));
    std::vector<double> g(rows * width * dim);
    for (double& v : g) v = scale * n(rng);
    auto target = trial % 2 ? PerturbTarget::word_embedding : PerturbTarget::positional_embedding;
    auto p = make_delta<double>(g, rows, width, dim, eps, target);
    const std::size_t block = width * dim;
    for (std::size_t r = 0; r < rows; ++r) {
      const double dn = testing::block_norm(p.delta, r * block, block);
      const double gn = testing::block_norm(g, r * block, block);
      double dot = 0.0;
      for (std::size_t i = r * block; i < (r + 1) * block; ++i) dot += p.delta[i] * g[i];
      norm_err = std::max(norm_err, std::abs(dn / eps - 1.0));
      cos_err = std::max(cos_err, std::abs(dot / (dn * gn) - 1.0));
    }
  }
  std::vector<double> zero(3 * 5 * 8, 0.0);
  auto z = make_delta<double>(zero, 3, 5, 8, 1.0, PerturbTarget::word_embedding);
  const bool zero_ok = std::all_of(z.delta.begin(), z.delta.end(), [](double v) { return v == 0.0; });
  return {norm_err <= 1e-9 && cos_err <= 1e-9 && zero_ok,
          "max_norm_rel_err=" + fmt(norm_err * 1e12, 3) + "e-12 max_cos_err=" +
              fmt(cos_err * 1e12, 3) + "e-12 zero_grad_zero_delta=" + (zero_ok ? "yes" : "no")};
}

Outcome first_order_adversariality() {
  const auto t0 = Clock::now();
  const double word = testing::adversarial_win_rate(PerturbTarget::word_embedding, 200);
  const double pos = testing::adversarial_win_rate(PerturbTarget::positional_embedding, 200);
  const double secs = seconds_since(t0);
  return {word >= 0.95 && pos >= 0.95 && secs < 300.0,
          "word_win_rate=" + fmt(word, 3) + " position_win_rate=" + fmt(pos, 3) +
              " trials=200 runtime=" + fmt(secs, 1) + "s"};
}

Outcome order_noise_bound() {
  Rng meta(99);
  const double bs[] = {0, 1, 2, 3, 5, 8, 10};
  std::size_t violations = 0, non_identity_small_b = 0, multiset_errors = 0;
  double max_seen = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + uniform_index(meta, 50);
    const double b = bs[uniform_index(meta, 7)];
    Rng rng = derived_rng(7, static_cast<std::uint64_t>(trial));
    Sentence s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = Vocabulary::num_special + int(uniform_index(meta, 8));
    auto r = order_noise(s, b, rng);
    const double d = static_cast<double>(r.permutation.max_displacement());
    max_seen = std::max(max_seen, d);
    if (d > b) ++violations;
    if (b <= 1.0 && !r.permutation.is_identity()) ++non_identity_small_b;
    Sentence x = r.sentence, y = s;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    if (x != y) ++multiset_errors;
  }
  return {violations == 0 && non_identity_small_b == 0 && multiset_errors == 0,
          "draws=10000 bound_violations=" + std::to_string(violations) +
              " b<=1_non_identity=" + std::to_string(non_identity_small_b) +
              " multiset_errors=" + std::to_string(multiset_errors) +
              " max_displacement=" + fmt(max_seen, 0)};
}

Outcome word_noise_rate() {
  bool ok = true;
  std::string detail;
  const std::size_t vocab = 200 + Vocabulary::num_special;
  for (double a : {0.05, 0.1, 0.25}) {
    Rng rng(derive_seed(17, static_cast<std::uint64_t>(a * 1000)));
    std::size_t replaced = 0, tokens = 0;
    while (tokens < 10000) {
      Sentence s(10, Vocabulary::num_special);
      std::size_t r = 0;
      word_noise(s, a, vocab, rng, &r);
      replaced += r;
      tokens += s.size();
    }
    auto [lo, hi] = testing::binomial_interval(tokens, a, 0.99);
    const bool in = replaced >= lo && replaced <= hi;
    ok = ok && in;
    detail += "a=" + fmt(a) + ":" + std::to_string(replaced) + "/" + std::to_string(tokens) + " in[" +
              std::to_string(lo) + "," + std::to_string(hi) + "] ";
  }
  return {ok, detail};
}

Outcome bleu_oracle() {
  Rng rng(314);
  double worst = 0.0;
  int nonzero = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 6);
    const std::size_t vocab = Vocabulary::num_special + 2 + uniform_index(rng, 5);
    auto refs = testing::random_sentences(rng, n, vocab, 0, 9);
    std::vector<Sentence> hyps;
    for (const auto& r : refs) {
      Sentence h = r;
      for (int& t : h)
        if (uniform01(rng) < 0.3)
          t = Vocabulary::num_special + int(uniform_index(rng, vocab - Vocabulary::num_special));
      if (uniform01(rng) < 0.3 && !h.empty()) h.pop_back();
      if (uniform01(rng) < 0.3) h.push_back(Vocabulary::num_special);
      hyps.push_back(h);
    }
    const double ours = bleu(hyps, refs).score;
    worst = std::max(worst, std::abs(ours - testing::oracle_bleu(hyps, refs)));
    nonzero += ours > 0;
  }
  Rng id(1);
  auto corpus = testing::random_sentences(id, 50, 30, 1, 12);
  const double identity = bleu(corpus, corpus).score;
  return {worst <= 1e-6 && fmt(identity) == "100.00",
          "corpora=1000 nonzero=" + std::to_string(nonzero) + " max_abs_diff=" +
              fmt(worst * 1e9, 3) + "e-9 identity=" + fmt(identity)};
}

// ---------------------------------------------------------------- experiments

constexpr std::size_t kTrainSentences = 20000, kTestSentences = 500;
constexpr std::uint64_t kDataSeed = 1;
constexpr std::size_t kSweepSteps = 5000, kModeSteps = 2000;

class Experiments {
 public:
  explicit Experiments(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  const fs::path& data() {
    const fs::path dir = root_ / "data";
    if (!ready_) {
      if (!fs::exists(dir / "manifest.txt")) {
        std::cerr << "# generating toy bundle in " << dir << '\n';
        generate_bundle(ToyLanguageSpec{}, kTrainSentences, kTestSentences, kDataSeed, dir);
      }
      data_dir_ = dir;
      ready_ = true;
    }
    return data_dir_;
  }

  static TrainConfig config(ATMode mode, std::uint64_t seed, std::size_t steps) {
    TrainConfig c;
    c.mode = mode;
    c.seed = seed;
    c.steps = steps;
    c.lr = 1e-3;
    c.bt_warmup = 500;
    c.checkpoint_every = 1000;
    c.log_every = 10;
    return c;
  }

  struct Run {
    fs::path checkpoint;
    double train_seconds = 0.0;
    bool cached = false;
  };

  // Trains unless an identical run already exists.
  Run run(const TrainConfig& cfg) {
    const fs::path dir = root_ / "runs" /
                         (std::string(mode_name(cfg.mode)) + "-seed" + std::to_string(cfg.seed) + "-steps" +
                          std::to_string(cfg.steps));
    const fs::path stamp = dir / "runtime.txt";
    if (fs::exists(stamp) && fs::exists(dir / "final.ckpt") &&
        read_key_values(dir / "config.txt") == cfg.to_map()) {
      const auto kv = read_key_values(stamp);
      return {dir / "final.ckpt", std::stod(kv.at("train_seconds")), true};
    }
    fs::remove_all(dir);
    std::cerr << "# training " << dir.filename().string() << '\n';
    auto out = train(cfg, data(), dir);
    write_key_values(stamp, {{"train_seconds", fmt(out.seconds, 1)}});
    return {out.final_checkpoint, out.seconds, false};
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  fs::path data_dir_;
  bool ready_ = false;
};

struct LoadedModel {
  Transformer<float> model;
  TestSet test;
};

LoadedModel load(const fs::path& ckpt, const fs::path& data) {
  Checkpoint c = load_checkpoint(ckpt);
  Transformer<float> model = model_from_checkpoint(c);
  Corpora corpora = load_corpora(data, c.vocab);
  return {std::move(model), std::move(corpora.test)};
}

double mean_bleu(const LoadedModel& m, double a, double b, std::uint64_t seed = 1) {
  const NoiseSpec noise = eval_noise(a, b, seed);
  return 0.5 * (evaluate_translation(m.model, m.test, Language::l1, noise).score +
                evaluate_translation(m.model, m.test, Language::l2, noise).score);
}

double mean_similarity(const LoadedModel& m, double a, double b, std::uint64_t seed = 1) {
  const NoiseSpec noise = eval_noise(a, b, seed);
  return 0.5 * (similarity(m.model, m.test.l1, Language::l1, noise).score +
                similarity(m.model, m.test.l2, Language::l2, noise).score);
}

Outcome noise_sweep_degradation(Experiments& ex) {
  auto run = ex.run(Experiments::config(ATMode::none, 1, kSweepSteps));
  LoadedModel m = load(run.checkpoint, ex.data());
  bool ok = run.train_seconds < 1800.0;
  std::string detail = "train=" + fmt(run.train_seconds / 60.0, 1) + "min";
  for (SweepAxis axis : {SweepAxis::a, SweepAxis::b}) {
    const auto values = default_axis(axis);
    SweepResult r = sweep(m.model, m.test, axis, values, 1);
    std::ofstream(ex.root() / ("sweep_" + std::string(axis_name(axis)) + ".csv")) << r.csv();
    for (int dir = 0; dir < 2; ++dir) {
      std::vector<double> y;
      for (const auto& p : r.points) y.push_back(dir == 0 ? p.bleu_l1_l2 : p.bleu_l2_l1);
      const double s = slope(values, y);
      const double drop = y.front() > 0 ? (y.front() - y.back()) / y.front() : 0.0;
      ok = ok && s < 0.0 && drop >= 0.20;
      detail += " " + std::string(axis_name(axis)) + (dir == 0 ? ":l1->l2" : ":l2->l1") + " slope=" + fmt(s) +
                " drop=" + fmt(100.0 * drop, 1) + "%";
    }
  }
  return {ok, detail};
}

struct ModeCell {
  double clean = 0, word = 0, order = 0, both = 0;  // mean BLEU
  double sim_word = 0, sim_order = 0, sim_clean_min = 100;
};

struct ModeTable {
  std::map<ATMode, ModeCell> cells;
  double train_seconds = 0.0, eval_seconds = 0.0;
  std::string csv;
};

ModeTable mode_comparison(Experiments& ex) {
  ModeTable t;
  std::ostringstream csv;
  csv << "mode,seed,clean,a0.1,b3,a0.1_b3,sim_a0.1,sim_b3,sim_clean\n";
  const ATMode modes[] = {ATMode::none, ATMode::word_at, ATMode::position_at, ATMode::both_at};
  const std::uint64_t seeds[] = {1, 2, 3};
  for (ATMode mode : modes) {
    ModeCell& cell = t.cells[mode];
    for (std::uint64_t seed : seeds) {
      auto run = ex.run(Experiments::config(mode, seed, kModeSteps));
      t.train_seconds += run.train_seconds;
      const auto t0 = Clock::now();
      LoadedModel m = load(run.checkpoint, ex.data());
      const double clean = mean_bleu(m, 0, 0), word = mean_bleu(m, 0.1, 0),
                   order = mean_bleu(m, 0, 3), both = mean_bleu(m, 0.1, 3);
      const double sw = mean_similarity(m, 0.1, 0), so = mean_similarity(m, 0, 3),
                   sc = std::min(similarity(m.model, m.test.l1, Language::l1, {}).score,
                                 similarity(m.model, m.test.l2, Language::l2, {}).score);
      t.eval_seconds += seconds_since(t0);
      csv << mode_name(mode) << ',' << seed << ',' << fmt(clean) << ',' << fmt(word) << ','
          << fmt(order) << ',' << fmt(both) << ',' << fmt(sw) << ',' << fmt(so) << ',' << fmt(sc)
          << '\n';
      cell.clean += clean / 3;
      cell.word += word / 3;
      cell.order += order / 3;
      cell.both += both / 3;
      cell.sim_word += sw / 3;
      cell.sim_order += so / 3;
      cell.sim_clean_min = std::min(cell.sim_clean_min, sc);
    }
  }
  t.csv = csv.str();
  std::ofstream(ex.root() / "modes.csv") << t.csv;
  return t;
}

Outcome mode_gains_outcome(const ModeTable& t) {
  const auto& base = t.cells.at(ATMode::none);
  const auto& word = t.cells.at(ATMode::word_at);
  const auto& pos = t.cells.at(ATMode::position_at);
  const auto& both = t.cells.at(ATMode::both_at);
  struct Check {
    std::string name;
    double lhs, rhs;
  };
  const std::vector<Check> checks = {
      {"word@a0.1>=base+2", word.word, base.word + 2},
      {"position@b3>=base+2", pos.order, base.order + 2},
      {"both@a0.1b3>=base+3", both.both, base.both + 3},
      {"both@a0.1b3>=word", both.both, word.both},
      {"both@a0.1b3>=position", both.both, pos.both},
      {"word@clean>=base-0.5", word.clean, base.clean - 0.5},
      {"position@clean>=base-0.5", pos.clean, base.clean - 0.5},
      {"both@clean>=base-0.5", both.clean, base.clean - 0.5},
  };
  bool ok = t.train_seconds + t.eval_seconds < 4 * 3600.0;
  std::string failed;
  for (const auto& c : checks) {
    if (!(c.lhs >= c.rhs)) {
      ok = false;
      failed += " " + c.name + "(" + fmt(c.lhs) + "<" + fmt(c.rhs) + ")";
    }
  }
  std::string detail = "cpu=" + fmt((t.train_seconds + t.eval_seconds) / 3600.0, 2) + "h";
  for (const auto& [mode, c] : t.cells) {
    detail += " " + std::string(mode_name(mode)) + "[clean=" + fmt(c.clean) + " a0.1=" + fmt(c.word) +
              " b3=" + fmt(c.order) + " a0.1b3=" + fmt(c.both) + "]";
  }
  if (!failed.empty()) detail += " unmet:" + failed;
  return {ok, detail};
}

Outcome similarity_outcome(const ModeTable& t) {
  const auto& base = t.cells.at(ATMode::none);
  const auto& both = t.cells.at(ATMode::both_at);
  double clean_min = 100.0;
  for (const auto& [mode, c] : t.cells) clean_min = std::min(clean_min, c.sim_clean_min);
  const bool clean_ok = fmt(clean_min) == "100.00";
  const bool ok = clean_ok && both.sim_word >= base.sim_word && both.sim_order >= base.sim_order;
  return {ok, "sim_clean_min=" + fmt(clean_min) + " a0.1: both=" + fmt(both.sim_word) +
                  " base=" + fmt(base.sim_word) + " b3: both=" + fmt(both.sim_order) +
                  " base=" + fmt(base.sim_order)};
}

// ---------------------------------------------------------------- 10

std::string read_rows(const fs::path& log) {
  std::ifstream in(log);
  std::string rows;
  for (std::string l; std::getline(in, l);)
    if (!l.empty() && l[0] != '#') rows += l + '\n';
  return rows;
}

Outcome determinism(const fs::path& root) {
  const fs::path dir = root / "determinism";
  fs::remove_all(dir);
  ToyLanguageSpec spec;
  spec.base_vocab = 60;
  generate_bundle(spec, 1000, 40, 8, dir / "data");
  TrainConfig cfg;
  cfg.mode = ATMode::both_at;
  cfg.n_layers = 1;
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  cfg.steps = 60;
  cfg.bt_warmup = 10;
  cfg.checkpoint_every = 20;
  cfg.eval_every = 20;
  cfg.eval_sentences = 20;
  cfg.seed = 5;
  train(cfg, dir / "data", dir / "a");
  train(cfg, dir / "data", dir / "b");
  const std::string a = read_rows(dir / "a" / "metrics.log");
  const bool same = a == read_rows(dir / "b" / "metrics.log") && !a.empty();

  TrainConfig first = cfg;
  first.steps = 20;
  train(first, dir / "data", dir / "split");
  train(cfg, dir / "data", dir / "split", dir / "split" / "checkpoints" / "step-000020.ckpt");
  const bool resumed = a == read_rows(dir / "split" / "metrics.log");

  // checkpoint round trip of the final model
  Checkpoint c1 = load_checkpoint(dir / "a" / "final.ckpt");
  save_checkpoint(dir / "copy.ckpt", c1);
  Checkpoint c2 = load_checkpoint(dir / "copy.ckpt");
  bool bit_exact = c1.tensors.size() == c2.tensors.size() && c1.state == c2.state;
  for (std::size_t i = 0; bit_exact && i < c1.tensors.size(); ++i)
    bit_exact = c1.tensors[i].values == c2.tensors[i].values;

  std::size_t rows = std::count(a.begin(), a.end(), '\n');
  return {same && resumed && bit_exact,
          std::string("repeat_identical=") + (same ? "yes" : "no") +
              " resume_identical=" + (resumed ? "yes" : "no") +
              " checkpoint_bit_exact=" + (bit_exact ? "yes" : "no") + " rows=" + std::to_string(rows)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string artifacts = "acceptance";
  std::string only;
  app.add_option("--artifacts", artifacts, "Directory for cached training runs and reports");
  app.add_option("--only", only, "Comma-separated subset of criteria to run");
  CLI11_PARSE(app, argc, argv);
  if (const char* env = std::getenv("ROBUNMT_ACCEPTANCE_DIR")) artifacts = env;

  std::set<int> selected;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) selected.insert(std::stoi(item));
  auto wanted = [&](int n) { return selected.empty() || selected.count(n) > 0; };

  Experiments ex{fs::path(artifacts)};
  std::ofstream report(ex.root() / "report.txt");
  int failures = 0;
  auto emit = [&](int n, const std::string& name, const std::function<Outcome()>& f) {
    if (!wanted(n)) return;
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::ostringstream line;
    line << "criterion " << std::setw(2) << n << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << name
         << ": " << o.detail;
    std::cout << line.str() << std::endl;
    report << line.str() << '\n';
    failures += !o.pass;
  };

  emit(1, "gradient correctness", gradient_correctness);
  emit(2, "perturbation contracts", perturbation_contracts);
  emit(3, "first-order adversariality", first_order_adversariality);
  emit(4, "word-order noise bound", order_noise_bound);
  emit(5, "word noise rate", word_noise_rate);
  emit(6, "BLEU oracle equivalence", bleu_oracle);
  emit(7, "noise sweep degradation (baseline)", [&] { return noise_sweep_degradation(ex); });
  std::optional<ModeTable> modes;
  auto get_modes = [&]() -> const ModeTable& {
    if (!modes) modes = mode_comparison(ex);
    return *modes;
  };
  emit(8, "adversarial training gains", [&] { return mode_gains_outcome(get_modes()); });
  emit(9, "clean-vs-noisy similarity", [&] { return similarity_outcome(get_modes()); });
  emit(10, "determinism and resume", [&] { return determinism(ex.root()); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
