#pragma once

// Shared transformer encoder-decoder. One set of parameters serves both
// languages; the language-tag token at position 0 selects the direction.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "robunmt/tensor.hpp"
#include "robunmt/vocab.hpp"

namespace robunmt {

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_len = 32;
  std::size_t vocab_size = 0;
  double dropout = 0.0;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& values);
  bool operator==(const ModelConfig&) const = default;
};

// Padded rows of [language tag, tokens..., eos].
struct Batch {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<int> ids;  // rows * width, pad-filled
  std::vector<std::size_t> lengths;
  Language language = Language::l1;

  int at(std::size_t row, std::size_t col) const { return ids[row * width + col]; }
  // Content tokens of one row (tag and eos stripped).
  Sentence sentence(std::size_t row) const;
};

// Sentences longer than max_len - 2 are truncated; the count of truncated
// sentences is added to *truncated when given.
Batch make_batch(std::span<const Sentence> sentences, Language lang, std::size_t max_len,
                 std::size_t* truncated = nullptr);

enum class PerturbTarget { word_embedding, positional_embedding };

// Additive (rows x width x d_model) tensor injected at the embedding stage.
template <typename T>
struct Perturbation {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::size_t dim = 0;
  std::vector<T> delta;
  T epsilon = T(0);
  PerturbTarget target = PerturbTarget::word_embedding;
};

template <typename T>
struct EncoderOutput {
  Var states;  // (rows * width) x d_model
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<std::size_t> lengths;
  // Zero-valued (or delta-valued) leaves added after the word and positional
  // lookups; gradients read from them are the embedding gradients.
  Var word_injection;
  Var position_injection;
};

template <typename T>
struct EmbeddingGradients {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::size_t dim = 0;
  std::vector<T> word;
  std::vector<T> position;
};

// Dropout randomness for training-mode forwards; null disables dropout.
struct ForwardOptions {
  std::mt19937_64* dropout_rng = nullptr;
};

template <typename T>
struct AttentionParams {
  Parameter<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct LayerNormParams {
  Parameter<T> gamma, beta;
};

template <typename T>
struct FeedForwardParams {
  Parameter<T> w1, b1, w2, b2;
};

template <typename T>
struct EncoderLayerParams {
  LayerNormParams<T> ln_attn;
  AttentionParams<T> self_attn;
  LayerNormParams<T> ln_ffn;
  FeedForwardParams<T> ffn;
};

template <typename T>
struct DecoderLayerParams {
  LayerNormParams<T> ln_self;
  AttentionParams<T> self_attn;
  LayerNormParams<T> ln_cross;
  AttentionParams<T> cross_attn;
  LayerNormParams<T> ln_ffn;
  FeedForwardParams<T> ffn;
};

template <typename T>
class Transformer {
 public:
  Transformer(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Every trainable array in a fixed order with unique names.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  Parameter<T>& word_embedding() { return word_embedding_; }
  Parameter<T>& positional_embedding() { return positional_embedding_; }
  const Parameter<T>& word_embedding() const { return word_embedding_; }
  const Parameter<T>& positional_embedding() const { return positional_embedding_; }

  // Encoder forward. Input at position i of row r is
  //   E[token] + P[i] + word_delta[r,i] + position_delta[r,i].
  // When expose_injections is set the delta leaves are recorded as
  // gradient-tracked inputs (zeros when no delta is given).
  EncoderOutput<T> encode(Graph<T>& g, const Batch& src, const Perturbation<T>* word_delta,
                          const Perturbation<T>* position_delta, bool expose_injections = false,
                          const ForwardOptions& options = {});

  // Teacher-forced decoder logits, (rows * (width - 1)) x vocab.
  Var decoder_logits(Graph<T>& g, const EncoderOutput<T>& enc, const Batch& target,
                     const ForwardOptions& options = {});

  // Token-mean negative log-likelihood of target given encoder states.
  Var decode_loss(Graph<T>& g, const EncoderOutput<T>& enc, const Batch& target,
                  const ForwardOptions& options = {});

  // Greedy generation of at most max_len content tokens per row; decoding
  // is primed with the target language tag and stops at eos.
  std::vector<Sentence> greedy_decode(const Batch& src, Language target,
                                      std::size_t max_len) const;

 private:
  // Shared by the gradient-tracking forward (Self = Transformer) and the
  // read-only inference path (Self = const Transformer).
  template <typename Self>
  static EncoderOutput<T> encode_impl(Self& self, Graph<T>& g, const Batch& src,
                                      const Perturbation<T>* word_delta,
                                      const Perturbation<T>* position_delta, bool expose,
                                      const ForwardOptions& options);
  template <typename Self, typename Fn>
  static void visit_parameters(Self& self, Fn&& fn);

  ModelConfig config_;
  Parameter<T> word_embedding_;
  Parameter<T> positional_embedding_;
  std::vector<EncoderLayerParams<T>> encoder_;
  LayerNormParams<T> encoder_norm_;
  std::vector<DecoderLayerParams<T>> decoder_;
  LayerNormParams<T> decoder_norm_;
  Parameter<T> output_bias_;
};

// Gradients at the embedding injection points after backward() ran on a
// loss built from `enc`.
template <typename T>
EmbeddingGradients<T> embedding_gradients(const Graph<T>& g, const EncoderOutput<T>& enc);

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace robunmt
