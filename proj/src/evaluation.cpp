#include "robunmt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "robunmt/error.hpp"
#include "robunmt/rng.hpp"

namespace robunmt {

namespace {

template <typename Tok>
BleuScore bleu_impl(const std::vector<std::vector<Tok>>& hyps,
                    const std::vector<std::vector<Tok>>& refs) {
  if (hyps.empty() || refs.empty()) throw Error("invalid-argument", "bleu: empty corpus");
  if (hyps.size() != refs.size()) {
    throw Error("shape-mismatch", "bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                                      std::to_string(refs.size()) + " references");
  }
  BleuScore s;
  std::array<std::size_t, 4> ref_totals{};
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto& h = hyps[i];
    const auto& r = refs[i];
    s.hypothesis_length += h.size();
    s.reference_length += r.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      if (r.size() >= n) ref_totals[n - 1] += r.size() - n + 1;
      if (h.size() < n) continue;
      std::map<std::vector<Tok>, std::size_t> ref_counts;
      for (std::size_t k = 0; k + n <= r.size(); ++k) {
        ++ref_counts[std::vector<Tok>(r.begin() + k, r.begin() + k + n)];
      }
      std::map<std::vector<Tok>, std::size_t> hyp_counts;
      for (std::size_t k = 0; k + n <= h.size(); ++k) {
        ++hyp_counts[std::vector<Tok>(h.begin() + k, h.begin() + k + n)];
      }
      for (const auto& [gram, c] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) s.matches[n - 1] += std::min(c, it->second);
      }
      s.totals[n - 1] += h.size() - n + 1;
    }
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    // an order absent from both sides carries no evidence either way
    const bool vacuous = s.totals[n] == 0 && ref_totals[n] == 0;
    if (s.totals[n]) s.precisions[n] = double(s.matches[n]) / double(s.totals[n]);
    else s.precisions[n] = vacuous ? 1.0 : 0.0;
    if (s.precisions[n] == 0.0) zero = true;
    else log_sum += std::log(s.precisions[n]);
  }
  const double h = double(s.hypothesis_length), r = double(s.reference_length);
  s.brevity_penalty = h >= r ? 1.0 : (h == 0.0 ? 0.0 : std::exp(1.0 - r / h));
  s.score = zero ? 0.0 : 100.0 * s.brevity_penalty * std::exp(log_sum / 4.0);
  return s;
}

}  // namespace

BleuScore bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references) {
  return bleu_impl(hypotheses, references);
}

BleuScore bleu(const std::vector<std::vector<std::string>>& hypotheses,
               const std::vector<std::vector<std::string>>& references) {
  return bleu_impl(hypotheses, references);
}

std::vector<Sentence> translate(const Transformer<float>& model,
                                const std::vector<Sentence>& sources, Language source,
                                Language target, std::size_t batch_size) {
  const std::size_t max_len = model.config().max_len;
  std::vector<Sentence> out;
  out.reserve(sources.size());
  for (std::size_t begin = 0; begin < sources.size(); begin += batch_size) {
    const std::size_t end = std::min(sources.size(), begin + batch_size);
    std::vector<Sentence> chunk(sources.begin() + begin, sources.begin() + end);
    for (auto& s : chunk) {
      if (s.empty()) s.push_back(Vocabulary::unk);
    }
    Batch b = make_batch(chunk, source, max_len);
    auto decoded = model.greedy_decode(b, target, max_len - 2);
    for (auto& d : decoded) out.push_back(std::move(d));
  }
  return out;
}

std::vector<Sentence> noisy_copy(const std::vector<Sentence>& sentences, const NoiseSpec& spec,
                                 std::size_t vocab_size) {
  spec.validate();
  std::vector<Sentence> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    Rng rng = derived_rng(spec.seed, i);
    out.push_back(test_noise(sentences[i], spec, vocab_size, rng));
  }
  return out;
}

BleuScore evaluate_translation(const Transformer<float>& model, const TestSet& test,
                               Language source, const NoiseSpec& noise) {
  const auto& src = test.side(source);
  const auto& ref = test.side(other(source));
  auto input = noisy_copy(src, noise, model.config().vocab_size);
  return bleu(translate(model, input, source, other(source)), ref);
}

BleuScore evaluate_autoencoder(const Transformer<float>& model,
                               const std::vector<Sentence>& sentences, Language lang,
                               const NoiseSpec& noise) {
  auto input = noisy_copy(sentences, noise, model.config().vocab_size);
  return bleu(translate(model, input, lang, lang), sentences);
}

BleuScore similarity(const Transformer<float>& model, const std::vector<Sentence>& sources,
                     Language source, const NoiseSpec& noise) {
  auto clean = translate(model, sources, source, other(source));
  auto noisy =
      translate(model, noisy_copy(sources, noise, model.config().vocab_size), source,
                other(source));
  return bleu(noisy, clean);
}

const char* axis_name(SweepAxis axis) { return axis == SweepAxis::a ? "a" : "b"; }

SweepAxis parse_axis(const std::string& name) {
  if (name == "a") return SweepAxis::a;
  if (name == "b") return SweepAxis::b;
  throw Error("invalid-argument", "axis must be 'a' or 'b', got '" + name + "'");
}

std::vector<double> default_axis(SweepAxis axis) {
  if (axis == SweepAxis::a) return {0.0, 0.05, 0.1, 0.15, 0.2, 0.25};
  return {0.0, 2.0, 3.0, 5.0, 8.0, 10.0};
}

NoiseSpec eval_noise(double a, double b, std::uint64_t seed) {
  NoiseSpec s;
  s.a = a;
  s.b = b;
  const auto qa = static_cast<std::uint64_t>(std::llround(a * 1e6));
  const auto qb = static_cast<std::uint64_t>(std::llround(b * 1e6));
  s.seed = derive_seed(derive_seed(seed, qa), qb);
  return s;
}

NoiseSpec level_spec(SweepAxis axis, double value, std::uint64_t seed) {
  return axis == SweepAxis::a ? eval_noise(value, 0.0, seed) : eval_noise(0.0, value, seed);
}

SweepResult sweep(const Transformer<float>& model, const TestSet& test, SweepAxis axis,
                  const std::vector<double>& values, std::uint64_t seed) {
  if (values.empty()) throw Error("invalid-argument", "sweep: empty axis");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1])) {
      throw Error("invalid-argument", "sweep: axis values must be strictly increasing");
    }
  }
  SweepResult result;
  result.axis = axis;
  const std::size_t V = model.config().vocab_size;
  // clean translations are the similarity references at every level
  const auto clean_12 = translate(model, test.l1, Language::l1, Language::l2);
  const auto clean_21 = translate(model, test.l2, Language::l2, Language::l1);
  for (double v : values) {
    const NoiseSpec spec = level_spec(axis, v, seed);
    spec.validate();
    SweepPoint p;
    p.value = v;
    const auto n1 = noisy_copy(test.l1, spec, V);
    const auto n2 = noisy_copy(test.l2, spec, V);
    const auto t12 = translate(model, n1, Language::l1, Language::l2);
    const auto t21 = translate(model, n2, Language::l2, Language::l1);
    p.bleu_l1_l2 = bleu(t12, test.l2).score;
    p.bleu_l2_l1 = bleu(t21, test.l1).score;
    p.sim_l1_l2 = bleu(t12, clean_12).score;
    p.sim_l2_l1 = bleu(t21, clean_21).score;
    p.ae_l1 = bleu(translate(model, n1, Language::l1, Language::l1), test.l1).score;
    p.ae_l2 = bleu(translate(model, n2, Language::l2, Language::l2), test.l2).score;
    result.points.push_back(p);
  }
  return result;
}

namespace {

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

}  // namespace

std::string SweepResult::csv() const {
  std::ostringstream out;
  out << "# value: noise level on axis " << axis_name(axis)
      << "; bleu_*: translation BLEU of noised input vs reference; ae_*: same-language"
         " reconstruction BLEU vs clean input; sim_*: BLEU of noisy-input vs clean-input"
         " translations\n";
  out << "axis,value,bleu_l1_l2,bleu_l2_l1,ae_l1,ae_l2,sim_l1_l2,sim_l2_l1\n";
  for (const auto& p : points) {
    out << axis_name(axis) << ',' << fixed(p.value) << ',' << fixed(p.bleu_l1_l2) << ','
        << fixed(p.bleu_l2_l1) << ',' << fixed(p.ae_l1) << ',' << fixed(p.ae_l2) << ','
        << fixed(p.sim_l1_l2) << ',' << fixed(p.sim_l2_l1) << '\n';
  }
  return out.str();
}

std::map<std::string, std::string> SweepResult::summary() const {
  std::map<std::string, std::string> out;
  out["axis"] = axis_name(axis);
  out["points"] = std::to_string(points.size());
  if (points.empty()) return out;
  std::vector<double> x, y;
  for (const auto& p : points) {
    x.push_back(p.value);
    y.push_back(0.5 * (p.bleu_l1_l2 + p.bleu_l2_l1));
  }
  out["bleu_first"] = fixed(y.front());
  out["bleu_last"] = fixed(y.back());
  out["bleu_slope"] = points.size() > 1 ? fixed(slope(x, y), 6) : "0";
  return out;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error("invalid-argument", "slope needs two or more paired points");
  }
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw Error("invalid-argument", "slope: x values are all equal");
  return sxy / sxx;
}

}  // namespace robunmt
