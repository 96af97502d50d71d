#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "robunmt/model.hpp"
#include "robunmt/noise.hpp"
#include "robunmt/rng.hpp"

namespace robunmt {

enum class ATMode { none, word_at, position_at, both_at };

const char* mode_name(ATMode mode);
ATMode parse_mode(const std::string& name);
inline bool perturbs_words(ATMode m) { return m == ATMode::word_at || m == ATMode::both_at; }
inline bool perturbs_positions(ATMode m) {
  return m == ATMode::position_at || m == ATMode::both_at;
}

// delta = epsilon * g / ||g|| per sentence, the norm taken over that row's
// (width x dim) block. A zero block gives a zero delta.
template <typename T>
Perturbation<T> make_delta(std::span<const T> grad, std::size_t rows, std::size_t width,
                           std::size_t dim, double epsilon, PerturbTarget target);

// Per-term losses of the denoising objective. `word` and `position` hold the
// adversarial extras (zero when the mode does not use them).
struct DenoiseTerms {
  double plain = 0.0;
  double word = 0.0;
  double position = 0.0;
  double total() const { return plain + word + position; }
  DenoiseTerms& operator+=(const DenoiseTerms& o) {
    plain += o.plain;
    word += o.word;
    position += o.position;
    return *this;
  }
};

// Applies C(.) to every row of a clean batch.
Batch corrupt_batch(const Batch& clean, const NoiseSpec& spec, Rng& rng, std::size_t max_len);

// Plain forward-only reconstruction loss of `clean` from `noisy` under
// optional injected deltas.
template <typename T>
double reconstruction_loss(Transformer<T>& model, const Batch& noisy, const Batch& clean,
                           const Perturbation<T>* word_delta = nullptr,
                           const Perturbation<T>* position_delta = nullptr);

// Two-pass adversarial denoising on one monolingual batch with a fixed
// corruption draw. Pass 1 gives L_D and the embedding gradient; pass 2 is
// the loss under the normalized-gradient delta. With accumulate set, the
// parameter gradients of L_D + extras are added to Parameter::grad;
// otherwise parameter values and gradients are left exactly as found.
// epsilon == 0 disables the adversarial terms.
template <typename T>
DenoiseTerms denoise_terms(Transformer<T>& model, const Batch& noisy, const Batch& clean,
                           ATMode mode, double epsilon, bool accumulate);

template <typename T>
double word_at_loss(Transformer<T>& model, const Batch& clean, const NoiseSpec& spec,
                    double epsilon, Rng& rng);

template <typename T>
double position_at_loss(Transformer<T>& model, const Batch& clean, const NoiseSpec& spec,
                        double epsilon, Rng& rng);

// L_D' over one batch per language. Corruption draws come from rng, l1 first.
template <typename T>
DenoiseTerms denoising_objective(Transformer<T>& model, const Batch& batch_l1,
                                 const Batch& batch_l2, ATMode mode, const NoiseSpec& spec,
                                 double epsilon, Rng& rng, bool accumulate = false);

}  // namespace robunmt
