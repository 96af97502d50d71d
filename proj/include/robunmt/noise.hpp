#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "robunmt/rng.hpp"
#include "robunmt/vocab.hpp"

namespace robunmt {

struct NoiseSpec {
  double a = 0.0;            // word replacement probability
  double b = 0.0;            // word-order magnitude
  double drop_prob = 0.1;    // C(.) deletion probability
  double swap_window = 3.0;  // C(.) local shuffle magnitude
  std::uint64_t seed = 0;

  void validate() const;
};

struct OrderPermutation {
  std::vector<std::size_t> gamma;  // gamma[i]: output position of source index i (0-based)
  std::vector<double> q;           // Q_i = i + U[0, b), i 1-based

  std::size_t max_displacement() const;
  double mean_displacement() const;
  bool is_identity() const;
};

// Builds the permutation that sorts q ascending; ties keep source order.
OrderPermutation permutation_from_scores(std::vector<double> q);

// Word noise over content ids [num_special, vocab_size). `replaced` counts
// replacement events (a replacement may pick the original token).
Sentence word_noise(const Sentence& sentence, double a, std::size_t vocab_size, Rng& rng,
                    std::size_t* replaced = nullptr);

struct OrderNoiseResult {
  Sentence sentence;
  OrderPermutation permutation;
};

OrderNoiseResult order_noise(const Sentence& sentence, double b, Rng& rng);
// Deterministic variant taking the U[0,b) draws directly.
OrderNoiseResult order_noise_with_draws(const Sentence& sentence, std::span<const double> draws);

template <typename Token>
std::vector<Token> apply_permutation(const std::vector<Token>& tokens, const OrderPermutation& p) {
  std::vector<Token> out(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) out[p.gamma[i]] = tokens[i];
  return out;
}

// Training-time corruption C(.): drop, then local shuffle.
Sentence corrupt(const Sentence& sentence, const NoiseSpec& spec, Rng& rng);

// Evaluation noise: word noise with spec.a followed by order noise with spec.b.
Sentence test_noise(const Sentence& sentence, const NoiseSpec& spec, std::size_t vocab_size,
                    Rng& rng);

struct NoiseSummary {
  std::size_t lines = 0;
  std::size_t tokens = 0;
  std::size_t replaced = 0;
  double displacement_sum = 0.0;

  double replacement_rate() const { return tokens ? double(replaced) / double(tokens) : 0.0; }
  double mean_displacement() const { return tokens ? displacement_sum / double(tokens) : 0.0; }
  std::map<std::string, std::string> to_map() const;
};

// Applies evaluation noise (a, b) line by line. Line k uses the RNG stream
// derived from (spec.seed, k). Replacement tokens come from vocab.
NoiseSummary noisify_corpus(const std::filesystem::path& input, const NoiseSpec& spec,
                            const std::filesystem::path& output, const Vocabulary& vocab);

}  // namespace robunmt
