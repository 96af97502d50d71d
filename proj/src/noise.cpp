#include "robunmt/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "robunmt/error.hpp"

namespace robunmt {

void NoiseSpec::validate() const {
  if (!(a >= 0.0 && a <= 1.0)) throw Error("invalid-noise", "a must be in [0, 1]");
  if (!(b >= 0.0) || !std::isfinite(b)) throw Error("invalid-noise", "b must be >= 0");
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw Error("invalid-noise", "drop_prob must be in [0, 1)");
  }
  if (!(swap_window >= 0.0) || !std::isfinite(swap_window)) {
    throw Error("invalid-noise", "swap_window must be >= 0");
  }
}

std::size_t OrderPermutation::max_displacement() const {
  std::size_t worst = 0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    worst = std::max(worst, gamma[i] > i ? gamma[i] - i : i - gamma[i]);
  }
  return worst;
}

double OrderPermutation::mean_displacement() const {
  if (gamma.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    total += std::abs(static_cast<double>(gamma[i]) - static_cast<double>(i));
  }
  return total / static_cast<double>(gamma.size());
}

bool OrderPermutation::is_identity() const {
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    if (gamma[i] != i) return false;
  }
  return true;
}

OrderPermutation permutation_from_scores(std::vector<double> q) {
  std::vector<std::size_t> order(q.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return q[x] < q[y]; });
  OrderPermutation p;
  p.gamma.resize(q.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) p.gamma[order[pos]] = pos;
  p.q = std::move(q);
  return p;
}

Sentence word_noise(const Sentence& sentence, double a, std::size_t vocab_size, Rng& rng,
                    std::size_t* replaced) {
  if (!(a >= 0.0 && a <= 1.0)) throw Error("invalid-noise", "a must be in [0, 1]");
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::num_special)) {
    throw Error("invalid-argument", "vocabulary has no content tokens");
  }
  const std::size_t content = vocab_size - Vocabulary::num_special;
  Sentence out = sentence;
  std::size_t events = 0;
  if (a > 0.0) {
    for (int& tok : out) {
      if (uniform01(rng) < a) {
        tok = Vocabulary::num_special + static_cast<int>(uniform_index(rng, content));
        ++events;
      }
    }
  }
  if (replaced) *replaced += events;
  return out;
}

OrderNoiseResult order_noise_with_draws(const Sentence& sentence, std::span<const double> draws) {
  if (draws.size() != sentence.size()) {
    throw Error("shape-mismatch", "order_noise needs one draw per token");
  }
  std::vector<double> q(sentence.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<double>(i + 1) + draws[i];
  OrderNoiseResult r;
  r.permutation = permutation_from_scores(std::move(q));
  r.sentence = apply_permutation(sentence, r.permutation);
  return r;
}

OrderNoiseResult order_noise(const Sentence& sentence, double b, Rng& rng) {
  if (!(b >= 0.0)) throw Error("invalid-noise", "b must be >= 0");
  std::vector<double> draws(sentence.size(), 0.0);
  if (b > 0.0) {
    for (double& u : draws) u = b * uniform01(rng);
  }
  return order_noise_with_draws(sentence, draws);
}

Sentence corrupt(const Sentence& sentence, const NoiseSpec& spec, Rng& rng) {
  if (sentence.empty()) throw Error("invalid-argument", "cannot corrupt an empty sentence");
  Sentence kept;
  kept.reserve(sentence.size());
  if (spec.drop_prob > 0.0) {
    for (int tok : sentence) {
      if (uniform01(rng) >= spec.drop_prob) kept.push_back(tok);
    }
    if (kept.empty()) kept.push_back(sentence[uniform_index(rng, sentence.size())]);
  } else {
    kept = sentence;
  }
  if (spec.swap_window <= 1.0) return kept;
  return order_noise(kept, spec.swap_window, rng).sentence;
}

Sentence test_noise(const Sentence& sentence, const NoiseSpec& spec, std::size_t vocab_size,
                    Rng& rng) {
  Sentence noisy = spec.a > 0.0 ? word_noise(sentence, spec.a, vocab_size, rng) : sentence;
  if (spec.b > 1.0) noisy = order_noise(noisy, spec.b, rng).sentence;
  return noisy;
}

std::map<std::string, std::string> NoiseSummary::to_map() const {
  auto fmt = [](double v) {
    std::ostringstream s;
    s.precision(6);
    s << std::fixed << v;
    return s.str();
  };
  return {{"lines", std::to_string(lines)},
          {"tokens", std::to_string(tokens)},
          {"replaced", std::to_string(replaced)},
          {"replacement_rate", fmt(replacement_rate())},
          {"mean_displacement", fmt(mean_displacement())}};
}

NoiseSummary noisify_corpus(const std::filesystem::path& input, const NoiseSpec& spec,
                            const std::filesystem::path& output, const Vocabulary& vocab) {
  spec.validate();
  std::ifstream in(input);
  if (!in) throw Error("file-not-found", "cannot read corpus " + input.string());
  std::ofstream out(output);
  if (!out) throw Error("io-error", "cannot write " + output.string());
  if (vocab.content_size() == 0) throw Error("invalid-argument", "empty vocabulary");

  NoiseSummary summary;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t line_no = summary.lines + 1;
    auto tokens = split_tokens(line);
    if (tokens.empty()) {
      throw Error("malformed-corpus", input.string() + ":" + std::to_string(line_no) +
                                          ": empty sentence");
    }
    for (const auto& t : tokens) {
      for (auto special : Vocabulary::special_tokens) {
        if (t == special) {
          throw Error("malformed-corpus", input.string() + ":" + std::to_string(line_no) +
                                              ": reserved token " + t);
        }
      }
    }
    Rng rng = derived_rng(spec.seed, summary.lines);
    std::vector<std::string> noisy = tokens;
    if (spec.a > 0.0) {
      for (auto& t : noisy) {
        if (uniform01(rng) < spec.a) {
          t = vocab.content_tokens()[uniform_index(rng, vocab.content_size())];
          ++summary.replaced;
        }
      }
    }
    if (spec.b > 1.0) {
      Sentence positions(noisy.size());
      auto r = order_noise(positions, spec.b, rng);
      noisy = apply_permutation(noisy, r.permutation);
      summary.displacement_sum += r.permutation.mean_displacement() * double(noisy.size());
    }
    for (std::size_t i = 0; i < noisy.size(); ++i) out << (i ? " " : "") << noisy[i];
    out << '\n';
    summary.tokens += tokens.size();
    ++summary.lines;
  }
  if (!out) throw Error("io-error", "failed writing " + output.string());
  return summary;
}

}  // namespace robunmt
