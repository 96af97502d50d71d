#include "robunmt/training.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "robunmt/error.hpp"

namespace robunmt {

namespace {

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

std::string decimal(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string shortest(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw Error("invalid-config", "not a number: " + key + "=" + v);
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw Error("invalid-config", "not a non-negative integer: " + key + "=" + v);
  }
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw Error("invalid-config", "integer out of range: " + key + "=" + v);
  }
}

const std::string& need(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw Error("checkpoint-corrupt", "missing state key " + key);
  return it->second;
}

}  // namespace

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error("invalid-config", "lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw Error("invalid-config", "beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw Error("invalid-config", "beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw Error("invalid-config", "adam_eps must be > 0");
  if (!(epsilon_at >= 0.0)) throw Error("invalid-config", "epsilon_at must be >= 0");
  if (batch_size == 0) throw Error("invalid-config", "batch_size must be > 0");
  if (checkpoint_every == 0) throw Error("invalid-config", "checkpoint_every must be > 0");
  if (log_every == 0) throw Error("invalid-config", "log_every must be > 0");
  corruption().validate();
  model(Vocabulary::num_special + 1).validate();
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"mode", mode_name(mode)},
          {"steps", std::to_string(steps)},
          {"batch_size", std::to_string(batch_size)},
          {"lr", shortest(lr)},
          {"beta1", shortest(beta1)},
          {"beta2", shortest(beta2)},
          {"adam_eps", shortest(adam_eps)},
          {"clip_norm", shortest(clip_norm)},
          {"epsilon_at", shortest(epsilon_at)},
          {"drop_prob", shortest(drop_prob)},
          {"swap_window", shortest(swap_window)},
          {"bt_warmup", std::to_string(bt_warmup)},
          {"seed", std::to_string(seed)},
          {"checkpoint_every", std::to_string(checkpoint_every)},
          {"eval_every", std::to_string(eval_every)},
          {"eval_sentences", std::to_string(eval_sentences)},
          {"log_every", std::to_string(log_every)},
          {"n_layers", std::to_string(n_layers)},
          {"d_model", std::to_string(d_model)},
          {"n_heads", std::to_string(n_heads)},
          {"d_ff", std::to_string(d_ff)},
          {"max_len", std::to_string(max_len)},
          {"dropout", shortest(dropout)}};
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& values) {
  TrainConfig c;
  const auto known = c.to_map();
  for (const auto& [k, v] : values) {
    if (!known.count(k)) throw Error("invalid-config", "unknown config key: " + k);
  }
  auto get = [&](const char* key) -> const std::string* {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };
  auto size_key = [&](const char* key, std::size_t& dst) {
    if (auto* v = get(key)) dst = static_cast<std::size_t>(parse_uint(key, *v));
  };
  auto double_key = [&](const char* key, double& dst) {
    if (auto* v = get(key)) dst = parse_double(key, *v);
  };
  if (auto* v = get("mode")) c.mode = parse_mode(*v);
  if (auto* v = get("seed")) c.seed = parse_uint("seed", *v);
  size_key("steps", c.steps);
  size_key("batch_size", c.batch_size);
  size_key("bt_warmup", c.bt_warmup);
  size_key("checkpoint_every", c.checkpoint_every);
  size_key("eval_every", c.eval_every);
  size_key("eval_sentences", c.eval_sentences);
  size_key("log_every", c.log_every);
  size_key("n_layers", c.n_layers);
  size_key("d_model", c.d_model);
  size_key("n_heads", c.n_heads);
  size_key("d_ff", c.d_ff);
  size_key("max_len", c.max_len);
  double_key("lr", c.lr);
  double_key("beta1", c.beta1);
  double_key("beta2", c.beta2);
  double_key("adam_eps", c.adam_eps);
  double_key("clip_norm", c.clip_norm);
  double_key("epsilon_at", c.epsilon_at);
  double_key("drop_prob", c.drop_prob);
  double_key("swap_window", c.swap_window);
  double_key("dropout", c.dropout);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path,
                              const std::map<std::string, std::string>& overrides) {
  auto values = read_key_values(path);
  for (const auto& [k, v] : overrides) values[k] = v;
  return from_map(values);
}

NoiseSpec TrainConfig::corruption() const {
  NoiseSpec s;
  s.drop_prob = drop_prob;
  s.swap_window = swap_window;
  s.seed = seed;
  return s;
}

AdamConfig TrainConfig::adam() const {
  AdamConfig a;
  a.lr = lr;
  a.beta1 = beta1;
  a.beta2 = beta2;
  a.eps = adam_eps;
  a.clip_norm = clip_norm;
  return a;
}

ModelConfig TrainConfig::model(std::size_t vocab_size) const {
  ModelConfig m;
  m.n_layers = n_layers;
  m.d_model = d_model;
  m.n_heads = n_heads;
  m.d_ff = d_ff;
  m.max_len = max_len;
  m.vocab_size = vocab_size;
  m.dropout = dropout;
  return m;
}

// --------------------------------------------------------- back-translation

template <typename T>
BackTranslationResult backtranslation_loss(Transformer<T>& model, const Batch& batch_l1,
                                           const Batch& batch_l2, bool accumulate) {
  const std::size_t max_len = model.config().max_len;
  std::vector<std::vector<T>> saved;
  if (!accumulate) {
    for (auto* p : model.parameters()) saved.push_back(p->grad);
  }
  BackTranslationResult result;
  for (const Batch* original : {&batch_l1, &batch_l2}) {
    const Language lang = original->language;
    const Language pseudo_lang = lang == Language::l1 ? Language::l2 : Language::l1;
    // generation reads the weights only; no gradient flows through it
    auto pseudo = std::as_const(model).greedy_decode(*original, pseudo_lang, max_len - 2);
    for (auto& s : pseudo) {
      if (s.empty()) {
        s.push_back(Vocabulary::unk);
        ++result.empty_generations;
      }
    }
    const Batch source = make_batch(pseudo, pseudo_lang, max_len);
    Graph<T> g(accumulate ? GradMode::record : GradMode::off);
    auto enc = model.encode(g, source, nullptr, nullptr);
    Var loss = model.decode_loss(g, enc, *original);
    const double value = static_cast<double>(g.scalar(loss));
    if (accumulate) g.backward(loss);
    (lang == Language::l1 ? result.l1 : result.l2) = value;
  }
  if (!accumulate) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad = std::move(saved[i]);
  }
  return result;
}

template BackTranslationResult backtranslation_loss<float>(Transformer<float>&, const Batch&,
                                                           const Batch&, bool);
template BackTranslationResult backtranslation_loss<double>(Transformer<double>&, const Batch&,
                                                            const Batch&, bool);

// ------------------------------------------------------------------- state

std::map<std::string, std::string> TrainState::to_map() const {
  std::ostringstream r;
  r << rng;
  return {{"step", std::to_string(step)},
          {"rng", r.str()},
          {"epoch_l1", std::to_string(epoch_l1)},
          {"cursor_l1", std::to_string(cursor_l1)},
          {"epoch_l2", std::to_string(epoch_l2)},
          {"cursor_l2", std::to_string(cursor_l2)},
          {"avg_denoise", exact(avg_denoise)},
          {"avg_adversarial", exact(avg_adversarial)},
          {"avg_backtranslation", exact(avg_backtranslation)},
          {"skipped_steps", std::to_string(skipped_steps)}};
}

TrainState TrainState::from_map(const std::map<std::string, std::string>& m) {
  TrainState s;
  s.step = parse_uint("step", need(m, "step"));
  std::istringstream r(need(m, "rng"));
  r >> s.rng;
  if (!r) throw Error("checkpoint-corrupt", "unreadable rng state");
  s.epoch_l1 = parse_uint("epoch_l1", need(m, "epoch_l1"));
  s.cursor_l1 = parse_uint("cursor_l1", need(m, "cursor_l1"));
  s.epoch_l2 = parse_uint("epoch_l2", need(m, "epoch_l2"));
  s.cursor_l2 = parse_uint("cursor_l2", need(m, "cursor_l2"));
  s.avg_denoise = parse_double("avg_denoise", need(m, "avg_denoise"));
  s.avg_adversarial = parse_double("avg_adversarial", need(m, "avg_adversarial"));
  s.avg_backtranslation = parse_double("avg_backtranslation", need(m, "avg_backtranslation"));
  s.skipped_steps = parse_uint("skipped_steps", need(m, "skipped_steps"));
  return s;
}

// ----------------------------------------------------------------- corpora

Corpora load_corpora(const std::filesystem::path& data_dir,
                     const std::optional<Vocabulary>& vocab) {
  const CorpusBundle b = bundle_paths(data_dir);
  Corpora c;
  c.vocab = vocab ? *vocab : build_vocab({b.train_l1, b.train_l2});
  c.train_l1 = encode_corpus(read_corpus(b.train_l1), c.vocab);
  c.train_l2 = encode_corpus(read_corpus(b.train_l2), c.vocab);
  c.test.l1 = encode_corpus(read_corpus(b.test_l1), c.vocab);
  c.test.l2 = encode_corpus(read_corpus(b.test_l2), c.vocab);
  if (c.test.l1.size() != c.test.l2.size()) {
    throw Error("malformed-corpus", "test.l1 and test.l2 differ in line count");
  }
  return c;
}

// ----------------------------------------------------------------- trainer

Trainer::Trainer(const TrainConfig& config, Corpora corpora)
    : config_(config),
      corpora_(std::move(corpora)),
      model_(config.model(corpora_.vocab.size()), derive_seed(config.seed, 11)),
      optimizer_(model_.parameters(), config.adam()),
      stream_l1_(corpora_.train_l1, config.batch_size, config.max_len, Language::l1,
                 derive_seed(config.seed, 12)),
      stream_l2_(corpora_.train_l2, config.batch_size, config.max_len, Language::l2,
                 derive_seed(config.seed, 13)) {
  config_.validate();
  state_.rng.seed(derive_seed(config.seed, 14));
}

StepMetrics Trainer::step() {
  StepMetrics m;
  m.step = state_.step + 1;
  const Batch b1 = stream_l1_.next();
  const Batch b2 = stream_l2_.next();

  model_.zero_grad();
  const DenoiseTerms d = denoising_objective(model_, b1, b2, config_.mode, config_.corruption(),
                                             config_.epsilon_at, state_.rng, true);
  m.denoise = d.plain;
  m.adversarial = d.word + d.position;
  if (state_.step >= config_.bt_warmup) {
    const auto bt = backtranslation_loss(model_, b1, b2, true);
    m.backtranslation = bt.total();
    m.empty_generations = bt.empty_generations;
  }
  m.grad_norm = global_grad_norm(model_.parameters());

  if (!std::isfinite(m.total()) || !std::isfinite(m.grad_norm)) {
    // parameters and moments stay as they were; data and RNG move on
    m.skipped = true;
    ++state_.skipped_steps;
    model_.zero_grad();
  } else {
    optimizer_.step();
    const double k = state_.step == 0 ? 0.0 : 0.98;
    state_.avg_denoise = k * state_.avg_denoise + (1 - k) * m.denoise;
    state_.avg_adversarial = k * state_.avg_adversarial + (1 - k) * m.adversarial;
    state_.avg_backtranslation = k * state_.avg_backtranslation + (1 - k) * m.backtranslation;
  }
  state_.step = m.step;
  state_.epoch_l1 = stream_l1_.epoch();
  state_.cursor_l1 = stream_l1_.cursor();
  state_.epoch_l2 = stream_l2_.epoch();
  state_.cursor_l2 = stream_l2_.cursor();
  return m;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt = capture_model(model_, corpora_.vocab);
  ckpt.state = state_.to_map();
  for (const auto& [k, v] : config_.to_map()) ckpt.state["train." + k] = v;
  ckpt.state["adam_steps"] = std::to_string(optimizer_.steps());
  const auto params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.push_back({"adam.m." + params[i]->name, params[i]->shape,
                            optimizer_.first_moments()[i]});
    ckpt.tensors.push_back({"adam.v." + params[i]->name, params[i]->shape,
                            optimizer_.second_moments()[i]});
  }
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (!(ckpt.vocab == corpora_.vocab)) {
    throw Error("checkpoint-mismatch", "checkpoint vocabulary differs from the corpora's");
  }
  restore_model(model_, ckpt);
  const auto params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto [prefix, dst] : {std::pair{"adam.m.", &optimizer_.first_moments()[i]},
                               std::pair{"adam.v.", &optimizer_.second_moments()[i]}}) {
      const NamedTensor* t = ckpt.find(prefix + params[i]->name);
      if (t == nullptr || t->values.size() != dst->size()) {
        throw Error("checkpoint-mismatch", "checkpoint lacks optimizer state for " +
                                               params[i]->name);
      }
      *dst = t->values;
    }
  }
  optimizer_.set_steps(parse_uint("adam_steps", need(ckpt.state, "adam_steps")));
  state_ = TrainState::from_map(ckpt.state);
  stream_l1_.seek(state_.epoch_l1, state_.cursor_l1);
  stream_l2_.seek(state_.epoch_l2, state_.cursor_l2);
}

// ----------------------------------------------------------------- metrics

std::string format_metrics(const StepMetrics& m) {
  std::ostringstream out;
  out << "step=" << m.step << " loss_all=" << decimal(m.total())
      << " loss_denoise=" << decimal(m.denoise) << " loss_adv=" << decimal(m.adversarial)
      << " loss_bt=" << decimal(m.backtranslation) << " grad_norm=" << decimal(m.grad_norm)
      << " empty_gen=" << m.empty_generations << " skipped=" << (m.skipped ? 1 : 0);
  return out.str();
}

std::map<std::string, std::string> parse_metrics_row(const std::string& line) {
  std::map<std::string, std::string> out;
  std::istringstream in(line);
  for (std::string field; in >> field;) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw Error("malformed-log", "bad metrics field: " + field);
    out[field.substr(0, eq)] = field.substr(eq + 1);
  }
  return out;
}

namespace {

// Keeps comment lines and rows with step <= last_step.
void truncate_log(const std::filesystem::path& log, std::size_t last_step) {
  if (!std::filesystem::exists(log)) return;
  std::ifstream in(log);
  std::vector<std::string> kept;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    if (line[0] != '#') {
      auto row = parse_metrics_row(line);
      auto it = row.find("step");
      if (it != row.end() && std::stoull(it->second) > last_step) continue;
    }
    kept.push_back(line);
  }
  in.close();
  std::ofstream out(log, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
}

std::string step_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step-%06zu.ckpt", step);
  return buf;
}

}  // namespace

TrainOutputs train(const TrainConfig& config, const std::filesystem::path& data_dir,
                   const std::filesystem::path& out_dir,
                   const std::optional<std::filesystem::path>& resume,
                   const std::function<void(const StepMetrics&)>& on_step) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  std::optional<Checkpoint> resumed;
  if (resume) resumed = load_checkpoint(*resume);

  Corpora corpora = load_corpora(data_dir, resumed ? std::optional(resumed->vocab) : std::nullopt);
  Trainer trainer(config, std::move(corpora));
  if (resumed) trainer.restore(*resumed);

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "checkpoints", ec);
  if (ec) throw Error("io-error", "cannot create " + out_dir.string() + ": " + ec.message());
  write_key_values(out_dir / "config.txt", config.to_map());
  trainer.corpora().vocab.save(out_dir / "vocab.txt");

  TrainOutputs outputs;
  outputs.metrics_log = out_dir / "metrics.log";
  if (resumed) {
    truncate_log(outputs.metrics_log, trainer.state().step);
  } else {
    std::ofstream fresh(outputs.metrics_log, std::ios::trunc);
    for (const auto& [k, v] : config.to_map()) fresh << "# " << k << '=' << v << '\n';
  }
  std::ofstream log(outputs.metrics_log, std::ios::app);
  if (!log) throw Error("io-error", "cannot write " + outputs.metrics_log.string());

  auto save = [&](const std::filesystem::path& path) { save_checkpoint(path, trainer.checkpoint()); };

  TestSet eval_set;
  if (config.eval_every > 0) {
    const auto& t = trainer.corpora().test;
    const std::size_t n = std::min(config.eval_sentences, t.l1.size());
    eval_set.l1.assign(t.l1.begin(), t.l1.begin() + static_cast<std::ptrdiff_t>(n));
    eval_set.l2.assign(t.l2.begin(), t.l2.begin() + static_cast<std::ptrdiff_t>(n));
  }

  while (trainer.state().step < config.steps) {
    const StepMetrics m = trainer.step();
    ++outputs.steps_run;
    std::string row = format_metrics(m);
    if (config.eval_every > 0 && m.step % config.eval_every == 0 && !eval_set.l1.empty()) {
      row += " bleu_l1_l2=" + decimal(evaluate_translation(trainer.model(), eval_set, Language::l1).score, 4);
      row += " bleu_l2_l1=" + decimal(evaluate_translation(trainer.model(), eval_set, Language::l2).score, 4);
    }
    if (m.skipped || m.step % config.log_every == 0 || m.step == config.steps) {
      log << row << '\n';
      log.flush();
      if (!log) throw Error("io-error", "failed writing " + outputs.metrics_log.string());
    }
    if (m.step % config.checkpoint_every == 0) save(out_dir / "checkpoints" / step_name(m.step));
    if (on_step) on_step(m);
  }
  outputs.final_checkpoint = out_dir / "final.ckpt";
  save(outputs.final_checkpoint);
  outputs.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return outputs;
}

}  // namespace robunmt
