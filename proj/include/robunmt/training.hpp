#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "robunmt/adversarial.hpp"
#include "robunmt/checkpoint.hpp"
#include "robunmt/data.hpp"
#include "robunmt/evaluation.hpp"
#include "robunmt/optimizer.hpp"

namespace robunmt {

struct TrainConfig {
  ATMode mode = ATMode::none;
  std::size_t steps = 5000;
  std::size_t batch_size = 32;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  double clip_norm = 5.0;
  double epsilon_at = 1.0;
  double drop_prob = 0.1;
  double swap_window = 3.0;
  std::size_t bt_warmup = 0;  // steps of denoising only before back-translation starts
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 1000;
  std::size_t eval_every = 0;  // 0 disables periodic evaluation
  std::size_t eval_sentences = 200;
  std::size_t log_every = 1;
  // model shape
  std::size_t n_layers = 2;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_len = 32;
  double dropout = 0.0;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  // Unknown keys are rejected.
  static TrainConfig from_map(const std::map<std::string, std::string>& values);
  static TrainConfig load(const std::filesystem::path& path,
                          const std::map<std::string, std::string>& overrides = {});

  NoiseSpec corruption() const;
  AdamConfig adam() const;
  ModelConfig model(std::size_t vocab_size) const;
};

struct StepMetrics {
  std::size_t step = 0;
  double denoise = 0.0;      // L_D, both languages
  double adversarial = 0.0;  // adversarial extras of L_D'
  double backtranslation = 0.0;
  double grad_norm = 0.0;
  bool skipped = false;  // non-finite step, no update applied
  std::size_t empty_generations = 0;
  double total() const { return denoise + adversarial + backtranslation; }
};

struct BackTranslationResult {
  double l1 = 0.0;  // -log P(X | Y_M(X)) for the l1 batch
  double l2 = 0.0;
  std::size_t empty_generations = 0;
  double total() const { return l1 + l2; }
};

// Generates pseudo-sources with frozen weights, then (with accumulate set)
// backpropagates the reconstruction of each original from its pseudo-source.
template <typename T>
BackTranslationResult backtranslation_loss(Transformer<T>& model, const Batch& batch_l1,
                                           const Batch& batch_l2, bool accumulate);

// Mutable training state: everything needed to continue bit-exactly.
struct TrainState {
  std::size_t step = 0;
  Rng rng;
  std::size_t epoch_l1 = 0, cursor_l1 = 0, epoch_l2 = 0, cursor_l2 = 0;
  double avg_denoise = 0.0, avg_adversarial = 0.0, avg_backtranslation = 0.0;
  std::size_t skipped_steps = 0;

  std::map<std::string, std::string> to_map() const;
  static TrainState from_map(const std::map<std::string, std::string>& values);
};

struct Corpora {
  Vocabulary vocab;
  std::vector<Sentence> train_l1, train_l2;
  TestSet test;
};

// Loads a bundle directory (train.l1, train.l2, test.l1, test.l2); the
// vocabulary is built from the training halves unless given.
Corpora load_corpora(const std::filesystem::path& data_dir,
                     const std::optional<Vocabulary>& vocab = std::nullopt);

class Trainer {
 public:
  Trainer(const TrainConfig& config, Corpora corpora);

  // Performs one step: denoising objective per config.mode plus
  // back-translation, one optimizer update on the sum.
  StepMetrics step();

  Transformer<float>& model() { return model_; }
  const Transformer<float>& model() const { return model_; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return config_; }
  const Corpora& corpora() const { return corpora_; }
  Adam<float>& optimizer() { return optimizer_; }

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  TrainConfig config_;
  Corpora corpora_;
  Transformer<float> model_;
  Adam<float> optimizer_;
  BatchStream stream_l1_, stream_l2_;
  TrainState state_;
};

std::string format_metrics(const StepMetrics& m);
std::map<std::string, std::string> parse_metrics_row(const std::string& line);

struct TrainOutputs {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_log;
  std::size_t steps_run = 0;
  double seconds = 0.0;
};

// Full run into out_dir: config.txt, metrics.log (append-only key=value rows),
// checkpoints/step-N.ckpt every checkpoint_every steps, final.ckpt. With
// resume set, state is restored from that checkpoint and the log is cut
// back to its step before continuing.
TrainOutputs train(const TrainConfig& config, const std::filesystem::path& data_dir,
                   const std::filesystem::path& out_dir,
                   const std::optional<std::filesystem::path>& resume = std::nullopt,
                   const std::function<void(const StepMetrics&)>& on_step = {});

}  // namespace robunmt
