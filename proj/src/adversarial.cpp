#include "robunmt/adversarial.hpp"

#include <cmath>

#include "robunmt/error.hpp"

namespace robunmt {

const char* mode_name(ATMode mode) {
  switch (mode) {
    case ATMode::none: return "none";
    case ATMode::word_at: return "word_at";
    case ATMode::position_at: return "position_at";
    case ATMode::both_at: return "both_at";
  }
  return "none";
}

ATMode parse_mode(const std::string& name) {
  if (name == "none") return ATMode::none;
  if (name == "word_at") return ATMode::word_at;
  if (name == "position_at") return ATMode::position_at;
  if (name == "both_at") return ATMode::both_at;
  throw Error("invalid-mode", "unknown mode '" + name + "' (none|word_at|position_at|both_at)");
}

template <typename T>
Perturbation<T> make_delta(std::span<const T> grad, std::size_t rows, std::size_t width,
                           std::size_t dim, double epsilon, PerturbTarget target) {
  if (grad.size() != rows * width * dim) {
    throw Error("shape-mismatch", "make_delta: gradient has " + std::to_string(grad.size()) +
                                      " entries, expected " + std::to_string(rows * width * dim));
  }
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw Error("invalid-argument", "make_delta: epsilon must be finite and >= 0");
  }
  Perturbation<T> p;
  p.rows = rows;
  p.width = width;
  p.dim = dim;
  p.epsilon = static_cast<T>(epsilon);
  p.target = target;
  p.delta.assign(grad.size(), T(0));
  const std::size_t block = width * dim;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* g = grad.data() + r * block;
    double sq = 0.0;
    for (std::size_t i = 0; i < block; ++i) {
      if (!std::isfinite(static_cast<double>(g[i]))) {
        throw Error("non-finite", "make_delta: gradient entry at row " + std::to_string(r) +
                                      ", position " + std::to_string(i / dim) + ", dim " +
                                      std::to_string(i % dim) + " is not finite");
      }
      sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
    }
    if (sq == 0.0) continue;
    const double scale = epsilon / std::sqrt(sq);
    T* d = p.delta.data() + r * block;
    for (std::size_t i = 0; i < block; ++i) d[i] = static_cast<T>(scale * g[i]);
  }
  return p;
}

Batch corrupt_batch(const Batch& clean, const NoiseSpec& spec, Rng& rng, std::size_t max_len) {
  std::vector<Sentence> noisy;
  noisy.reserve(clean.rows);
  for (std::size_t r = 0; r < clean.rows; ++r) noisy.push_back(corrupt(clean.sentence(r), spec, rng));
  return make_batch(noisy, clean.language, max_len);
}

template <typename T>
double reconstruction_loss(Transformer<T>& model, const Batch& noisy, const Batch& clean,
                           const Perturbation<T>* word_delta,
                           const Perturbation<T>* position_delta) {
  Graph<T> g(GradMode::off);
  auto enc = model.encode(g, noisy, word_delta, position_delta);
  return static_cast<double>(g.scalar(model.decode_loss(g, enc, clean)));
}

namespace {

template <typename T>
std::vector<std::vector<T>> snapshot_grads(Transformer<T>& model) {
  std::vector<std::vector<T>> out;
  for (auto* p : model.parameters()) out.push_back(p->grad);
  return out;
}

template <typename T>
void restore_grads(Transformer<T>& model, std::vector<std::vector<T>>& saved) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad = std::move(saved[i]);
}

// One gradient-tracked pass under the given deltas; backpropagates
// weight * loss into the parameters and returns the unweighted loss.
template <typename T>
double perturbed_pass(Transformer<T>& model, const Batch& noisy, const Batch& clean,
                      const Perturbation<T>* word_delta, const Perturbation<T>* position_delta,
                      T weight) {
  Graph<T> g;
  auto enc = model.encode(g, noisy, word_delta, position_delta);
  Var loss = model.decode_loss(g, enc, clean);
  const double value = static_cast<double>(g.scalar(loss));
  g.backward(weight == T(1) ? loss : g.scale(loss, weight));
  return value;
}

}  // namespace

template <typename T>
DenoiseTerms denoise_terms(Transformer<T>& model, const Batch& noisy, const Batch& clean,
                           ATMode mode, double epsilon, bool accumulate) {
  if (!(epsilon >= 0.0)) throw Error("invalid-argument", "epsilon must be >= 0");
  std::vector<std::vector<T>> saved;
  if (!accumulate) saved = snapshot_grads(model);

  const bool adversarial = mode != ATMode::none && epsilon > 0.0;
  DenoiseTerms terms;
  Graph<T> g;
  auto enc = model.encode(g, noisy, nullptr, nullptr, adversarial);
  Var loss = model.decode_loss(g, enc, clean);
  terms.plain = static_cast<double>(g.scalar(loss));
  g.backward(loss);

  if (adversarial) {
    const auto grads = embedding_gradients(g, enc);
    const std::size_t d = grads.dim;
    Perturbation<T> word, position;
    if (perturbs_words(mode)) {
      word = make_delta<T>(grads.word, grads.rows, grads.width, d, epsilon,
                           PerturbTarget::word_embedding);
    }
    if (perturbs_positions(mode)) {
      position = make_delta<T>(grads.position, grads.rows, grads.width, d, epsilon,
                               PerturbTarget::positional_embedding);
    }
    if (mode == ATMode::both_at && word.delta == position.delta) {
      // Both terms see the same perturbed input E + P + delta; one pass
      // weighted twice gives both losses and their gradients.
      const double v = perturbed_pass<T>(model, noisy, clean, &word, nullptr, T(2));
      terms.word = v;
      terms.position = v;
    } else {
      if (perturbs_words(mode)) {
        terms.word = perturbed_pass<T>(model, noisy, clean, &word, nullptr, T(1));
      }
      if (perturbs_positions(mode)) {
        terms.position = perturbed_pass<T>(model, noisy, clean, nullptr, &position, T(1));
      }
    }
  }

  if (!accumulate) restore_grads(model, saved);
  return terms;
}

namespace {

template <typename T>
double single_at_loss(Transformer<T>& model, const Batch& clean, const NoiseSpec& spec,
                      double epsilon, Rng& rng, ATMode mode) {
  const Batch noisy = corrupt_batch(clean, spec, rng, model.config().max_len);
  if (epsilon == 0.0) return reconstruction_loss(model, noisy, clean);
  auto terms = denoise_terms(model, noisy, clean, mode, epsilon, false);
  return mode == ATMode::word_at ? terms.word : terms.position;
}

}  // namespace

template <typename T>
double word_at_loss(Transformer<T>& model, const Batch& clean, const NoiseSpec& spec,
                    double epsilon, Rng& rng) {
  return single_at_loss(model, clean, spec, epsilon, rng, ATMode::word_at);
}

template <typename T>
double position_at_loss(Transformer<T>& model, const Batch& clean, const NoiseSpec& spec,
                        double epsilon, Rng& rng) {
  return single_at_loss(model, clean, spec, epsilon, rng, ATMode::position_at);
}

template <typename T>
DenoiseTerms denoising_objective(Transformer<T>& model, const Batch& batch_l1,
                                 const Batch& batch_l2, ATMode mode, const NoiseSpec& spec,
                                 double epsilon, Rng& rng, bool accumulate) {
  const std::size_t max_len = model.config().max_len;
  const Batch noisy_l1 = corrupt_batch(batch_l1, spec, rng, max_len);
  const Batch noisy_l2 = corrupt_batch(batch_l2, spec, rng, max_len);
  DenoiseTerms terms = denoise_terms(model, noisy_l1, batch_l1, mode, epsilon, accumulate);
  terms += denoise_terms(model, noisy_l2, batch_l2, mode, epsilon, accumulate);
  return terms;
}

#define ROBUNMT_INSTANTIATE(T)                                                               \
  template Perturbation<T> make_delta<T>(std::span<const T>, std::size_t, std::size_t,        \
                                         std::size_t, double, PerturbTarget);                 \
  template double reconstruction_loss<T>(Transformer<T>&, const Batch&, const Batch&,         \
                                         const Perturbation<T>*, const Perturbation<T>*);     \
  template DenoiseTerms denoise_terms<T>(Transformer<T>&, const Batch&, const Batch&, ATMode, \
                                         double, bool);                                       \
  template double word_at_loss<T>(Transformer<T>&, const Batch&, const NoiseSpec&, double,    \
                                  Rng&);                                                      \
  template double position_at_loss<T>(Transformer<T>&, const Batch&, const NoiseSpec&,        \
                                      double, Rng&);                                          \
  template DenoiseTerms denoising_objective<T>(Transformer<T>&, const Batch&, const Batch&,   \
                                               ATMode, const NoiseSpec&, double, Rng&, bool);

ROBUNMT_INSTANTIATE(float)
ROBUNMT_INSTANTIATE(double)

}  // namespace robunmt
