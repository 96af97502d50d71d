#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "robunmt/model.hpp"
#include "robunmt/noise.hpp"

namespace robunmt {

struct BleuScore {
  double score = 0.0;  // [0, 100]
  std::array<double, 4> precisions{};
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 0.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

// Corpus-level 4-gram BLEU with clipped counts and brevity penalty, no
// smoothing. An order with no hypothesis n-grams has precision 0, unless the
// references have none either, in which case it counts as 1.
BleuScore bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references);
BleuScore bleu(const std::vector<std::vector<std::string>>& hypotheses,
               const std::vector<std::vector<std::string>>& references);

// Parallel test set: l1[i] and l2[i] are translations of each other.
struct TestSet {
  std::vector<Sentence> l1, l2;
  const std::vector<Sentence>& side(Language lang) const { return lang == Language::l1 ? l1 : l2; }
};

inline Language other(Language lang) { return lang == Language::l1 ? Language::l2 : Language::l1; }

// Greedy translation in fixed-size batches.
std::vector<Sentence> translate(const Transformer<float>& model,
                                const std::vector<Sentence>& sources, Language source,
                                Language target, std::size_t batch_size = 64);

// Sentence i is noised with the RNG stream derived from (spec.seed, i).
std::vector<Sentence> noisy_copy(const std::vector<Sentence>& sentences, const NoiseSpec& spec,
                                 std::size_t vocab_size);

// Translates (optionally noised) sources of `source` language and scores
// against the other side of the test set.
BleuScore evaluate_translation(const Transformer<float>& model, const TestSet& test,
                               Language source, const NoiseSpec& noise = {});

// Same-language reconstruction of noised input scored against the clean
// original.
BleuScore evaluate_autoencoder(const Transformer<float>& model,
                               const std::vector<Sentence>& sentences, Language lang,
                               const NoiseSpec& noise);

// BLEU of translations of noisy inputs (hypotheses) against translations of
// the clean inputs (references).
BleuScore similarity(const Transformer<float>& model, const std::vector<Sentence>& sources,
                     Language source, const NoiseSpec& noise);

enum class SweepAxis { a, b };
const char* axis_name(SweepAxis axis);
SweepAxis parse_axis(const std::string& name);
std::vector<double> default_axis(SweepAxis axis);

struct SweepPoint {
  double value = 0.0;
  double bleu_l1_l2 = 0.0;
  double bleu_l2_l1 = 0.0;
  double ae_l1 = 0.0;
  double ae_l2 = 0.0;
  double sim_l1_l2 = 0.0;
  double sim_l2_l1 = 0.0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::a;
  std::vector<SweepPoint> points;

  std::string csv() const;
  std::map<std::string, std::string> summary() const;
};

// Evaluation noise (a, b) with a seed that depends only on (seed, a, b), so
// every model and every sweep sees the same noised input at a given level.
NoiseSpec eval_noise(double a, double b, std::uint64_t seed);
NoiseSpec level_spec(SweepAxis axis, double value, std::uint64_t seed);

SweepResult sweep(const Transformer<float>& model, const TestSet& test, SweepAxis axis,
                  const std::vector<double>& values, std::uint64_t seed);

// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace robunmt
