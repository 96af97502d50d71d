#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <random>

#include "robunmt/checkpoint.hpp"
#include "robunmt/error.hpp"
#include "robunmt/grad_check.hpp"
#include "robunmt/model.hpp"
#include "robunmt/optimizer.hpp"
#include "test_util.hpp"

using namespace robunmt;
using robunmt::testing::random_sentences;
using robunmt::testing::tiny_config;

namespace {

template <typename T>
double denoise_loss(Transformer<T>& model, const Batch& src, const Batch& tgt,
                    const Perturbation<T>* wd = nullptr,
                    const Perturbation<T>* pd = nullptr) {
  Graph<T> g(GradMode::off);
  auto enc = model.encode(g, src, wd, pd);
  return static_cast<double>(g.scalar(model.decode_loss(g, enc, tgt)));
}

template <typename T>
Perturbation<T> random_delta(std::mt19937_64& rng, const Batch& b, std::size_t d, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Perturbation<T> p{b.rows, b.width, d, std::vector<T>(b.rows * b.width * d), T(0),
                    PerturbTarget::word_embedding};
  for (T& v : p.delta) v = static_cast<T>(n(rng));
  return p;
}

}  // namespace

TEST(Model, MakeBatchLayout) {
  std::vector<Sentence> s{{10, 11, 12}, {13}};
  Batch b = make_batch(s, Language::l2, 32);
  EXPECT_EQ(b.rows, 2u);
  EXPECT_EQ(b.width, 5u);
  EXPECT_EQ(b.lengths, (std::vector<std::size_t>{5, 3}));
  EXPECT_EQ(std::vector<int>(b.ids.begin(), b.ids.begin() + 5),
            (std::vector<int>{Vocabulary::lang2, 10, 11, 12, Vocabulary::eos}));
  EXPECT_EQ(std::vector<int>(b.ids.begin() + 5, b.ids.end()),
            (std::vector<int>{Vocabulary::lang2, 13, Vocabulary::eos, Vocabulary::pad,
                              Vocabulary::pad}));
  EXPECT_EQ(b.sentence(0), s[0]);

  std::size_t truncated = 0;
  Batch t = make_batch(s, Language::l1, 3, &truncated);
  EXPECT_EQ(truncated, 1u);
  EXPECT_EQ(t.sentence(0), (Sentence{10}));
}

TEST(Model, ConfigValidation) {
  ModelConfig c = tiny_config();
  c.n_heads = 3;
  EXPECT_THROW(Transformer<float>(c, 1), Error);
}

TEST(Model, ZeroDeltaMatchesNoDelta) {
  std::mt19937_64 rng(1);
  Transformer<double> model(tiny_config(), 7);
  auto sents = random_sentences(rng, 3, 20);
  Batch b = make_batch(sents, Language::l1, 12);
  Perturbation<double> zero{b.rows, b.width, 16, std::vector<double>(b.rows * b.width * 16),
                            0.0, PerturbTarget::word_embedding};
  Graph<double> g1(GradMode::off), g2(GradMode::off);
  auto e1 = model.encode(g1, b, nullptr, nullptr);
  auto e2 = model.encode(g2, b, &zero, &zero);
  auto v1 = g1.values(e1.states);
  auto v2 = g2.values(e2.states);
  ASSERT_EQ(v1.size(), v2.size());
  for (std::size_t i = 0; i < v1.size(); ++i) EXPECT_EQ(v1[i], v2[i]);
}

TEST(Model, DeltaShapeMismatchRejected) {
  Transformer<double> model(tiny_config(), 7);
  Batch b = make_batch(std::vector<Sentence>{{7, 8}}, Language::l1, 12);
  Perturbation<double> bad{1, b.width + 1, 16, std::vector<double>((b.width + 1) * 16), 0.0,
                           PerturbTarget::word_embedding};
  Graph<double> g;
  EXPECT_THROW(model.encode(g, b, &bad, nullptr), Error);
}

TEST(Model, AllPadRowIsMaskedButPresent) {
  Transformer<double> model(tiny_config(), 3);
  Batch b = make_batch(std::vector<Sentence>{{7, 8, 9}, {10}}, Language::l1, 12);
  // blank out the second row entirely
  for (std::size_t c = 0; c < b.width; ++c) b.ids[b.width + c] = Vocabulary::pad;
  b.lengths[1] = 0;
  Graph<double> g(GradMode::off);
  auto enc = model.encode(g, b, nullptr, nullptr);
  EXPECT_EQ(g[enc.states].shape, (Shape{2 * b.width, 16}));
  for (double v : g.values(enc.states)) EXPECT_TRUE(std::isfinite(v));

  // the first row is unaffected by what sits in the masked row
  Batch alone = make_batch(std::vector<Sentence>{{7, 8, 9}}, Language::l1, 12);
  Graph<double> g2(GradMode::off);
  auto enc2 = model.encode(g2, alone, nullptr, nullptr);
  for (std::size_t i = 0; i < alone.width * 16; ++i) {
    EXPECT_NEAR(g.values(enc.states)[i], g2.values(enc2.states)[i], 1e-12);
  }
}

TEST(Model, UntrainedLossIsNearLogVocab) {
  std::mt19937_64 rng(5);
  ModelConfig cfg = tiny_config(300, 64);
  cfg.n_heads = 4;
  cfg.max_len = 32;
  Transformer<float> model(cfg, 11);
  auto sents = random_sentences(rng, 16, 300, 3, 12);
  Batch b = make_batch(sents, Language::l1, 32);
  const double loss = denoise_loss(model, b, b);
  EXPECT_NEAR(loss, std::log(300.0), 0.2 * std::log(300.0));
}

TEST(Model, PadSuffixContributesNothing) {
  Transformer<double> model(tiny_config(), 9);
  std::vector<Sentence> s{{7, 8, 9, 10}, {11, 12}};
  Batch b = make_batch(s, Language::l1, 12);
  // widen with extra pad columns
  Batch wide = b;
  wide.width = b.width + 3;
  wide.ids.assign(wide.rows * wide.width, Vocabulary::pad);
  for (std::size_t r = 0; r < b.rows; ++r)
    for (std::size_t c = 0; c < b.width; ++c) wide.ids[r * wide.width + c] = b.at(r, c);
  EXPECT_NEAR(denoise_loss(model, b, b), denoise_loss(model, wide, wide), 1e-12);
}

TEST(Model, DecodeLossIsPermutationEquivariant) {
  std::mt19937_64 rng(2);
  Transformer<double> model(tiny_config(), 4);
  auto src = random_sentences(rng, 5, 20);
  auto tgt = random_sentences(rng, 5, 20);
  const double base = denoise_loss(model, make_batch(src, Language::l1, 12),
                                   make_batch(tgt, Language::l2, 12));
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<Sentence> ps, pt;
  for (std::size_t i : perm) {
    ps.push_back(src[i]);
    pt.push_back(tgt[i]);
  }
  const double permuted = denoise_loss(model, make_batch(ps, Language::l1, 12),
                                       make_batch(pt, Language::l2, 12));
  EXPECT_NEAR(base, permuted, 1e-12);
}

TEST(Model, EmptyTargetRejected) {
  Transformer<double> model(tiny_config(), 4);
  Batch src = make_batch(std::vector<Sentence>{{7}}, Language::l1, 12);
  Graph<double> g;
  auto enc = model.encode(g, src, nullptr, nullptr);
  Batch empty;
  EXPECT_THROW(model.decode_loss(g, enc, empty), Error);
}

TEST(Model, WordDeltaFirstOrderChangeMatchesGradient) {
  std::mt19937_64 rng(8);
  Transformer<double> model(tiny_config(), 12);
  auto sents = random_sentences(rng, 3, 20, 2, 6);
  Batch b = make_batch(sents, Language::l1, 12);

  Graph<double> g;
  auto enc = model.encode(g, b, nullptr, nullptr, true);
  g.backward(model.decode_loss(g, enc, b));
  auto grads = embedding_gradients(g, enc);

  auto dir = random_delta<double>(rng, b, 16, 1.0);
  for (std::size_t r = 0; r < b.rows; ++r)
    for (std::size_t c = b.lengths[r]; c < b.width; ++c)
      for (std::size_t k = 0; k < 16; ++k) dir.delta[(r * b.width + c) * 16 + k] = 0.0;
  const double predicted = robunmt::testing::sum_product(grads.word, dir.delta);

  const double h = 1e-5;
  auto plus = dir, minus = dir;
  for (auto& v : plus.delta) v *= h;
  for (auto& v : minus.delta) v *= -h;
  const double fd = (denoise_loss(model, b, b, &plus) - denoise_loss(model, b, b, &minus)) / (2 * h);
  EXPECT_NEAR(predicted, fd, 1e-7 * std::max(1.0, std::abs(fd)));

  // a larger delta visibly moves the loss
  for (auto& v : plus.delta) v *= 1e4;
  EXPECT_NE(denoise_loss(model, b, b, &plus), denoise_loss(model, b, b));
}

TEST(Model, EmbeddingGradientsMatchFiniteDifferencesPerCoordinate) {
  std::mt19937_64 rng(21);
  Transformer<double> model(tiny_config(), 13);
  auto sents = random_sentences(rng, 2, 20, 2, 4);
  Batch b = make_batch(sents, Language::l2, 12);
  Graph<double> g;
  auto enc = model.encode(g, b, nullptr, nullptr, true);
  g.backward(model.decode_loss(g, enc, b));
  auto grads = embedding_gradients(g, enc);
  ASSERT_EQ(grads.word.size(), b.rows * b.width * 16);

  const std::size_t n = grads.word.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t i = pick(rng);
    Perturbation<double> e{b.rows, b.width, 16, std::vector<double>(n), 0.0,
                           PerturbTarget::positional_embedding};
    e.delta[i] = 1e-5;
    const double up = denoise_loss<double>(model, b, b, nullptr, &e);
    e.delta[i] = -1e-5;
    const double down = denoise_loss<double>(model, b, b, nullptr, &e);
    const double fd = (up - down) / 2e-5;
    EXPECT_NEAR(grads.position[i], fd, 1e-9) << "coordinate " << i;
    EXPECT_EQ(grads.position[i], grads.word[i]);
  }
}

TEST(Model, EmbeddingGradientsZeroAtPadAndGuarded) {
  std::mt19937_64 rng(4);
  Transformer<double> model(tiny_config(), 2);
  std::vector<Sentence> s{{7, 8, 9, 10, 11}, {12}};
  Batch b = make_batch(s, Language::l1, 12);
  Graph<double> g;
  auto enc = model.encode(g, b, nullptr, nullptr, true);
  Var loss = model.decode_loss(g, enc, b);
  EXPECT_THROW(embedding_gradients(g, enc), Error);  // before backward
  g.backward(loss);
  auto grads = embedding_gradients(g, enc);
  for (std::size_t c = b.lengths[1]; c < b.width; ++c) {
    for (std::size_t k = 0; k < 16; ++k) {
      EXPECT_EQ(grads.word[(b.width + c) * 16 + k], 0.0);
      EXPECT_EQ(grads.position[(b.width + c) * 16 + k], 0.0);
    }
  }
  EncoderOutput<double> empty;
  EXPECT_THROW(embedding_gradients(g, empty), Error);
}

TEST(Model, PerturbedForwardLeavesParametersUntouched) {
  std::mt19937_64 rng(6);
  Transformer<float> model(tiny_config(), 1);
  const auto before_w = model.word_embedding().value;
  const auto before_p = model.positional_embedding().value;
  Batch b = make_batch(random_sentences(rng, 4, 20), Language::l1, 12);
  auto delta = random_delta<float>(rng, b, 16, 0.5);
  Graph<float> g;
  auto enc = model.encode(g, b, &delta, &delta, true);
  g.backward(model.decode_loss(g, enc, b));
  EXPECT_EQ(model.word_embedding().value, before_w);
  EXPECT_EQ(model.positional_embedding().value, before_p);
}

TEST(Model, ParameterSharingAudit) {
  ModelConfig c = tiny_config(50, 16);
  Transformer<float> model(c, 1);
  const std::size_t d = c.d_model, ff = c.d_ff, V = c.vocab_size, L = c.n_layers;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ffn = d * ff + ff + ff * d + d;
  const std::size_t ln = 2 * d;
  const std::size_t expected = V * d + c.max_len * d + L * (2 * ln + attn + ffn) + ln +
                               L * (3 * ln + 2 * attn + ffn) + ln + V;
  EXPECT_EQ(model.parameter_count(), expected);
  std::size_t embeddings = 0;
  for (const auto* p : model.parameters()) {
    if (p->name == "word_embedding" || p->name == "positional_embedding") ++embeddings;
  }
  EXPECT_EQ(embeddings, 2u);
}

TEST(Model, GreedyDecodeBoundsAndDeterminism) {
  std::mt19937_64 rng(3);
  Transformer<float> model(tiny_config(), 5);
  Batch b = make_batch(random_sentences(rng, 6, 20), Language::l1, 12);
  auto one = model.greedy_decode(b, Language::l2, 1);
  for (const auto& s : one) EXPECT_LE(s.size(), 1u);
  auto a = model.greedy_decode(b, Language::l2, 10);
  auto c = model.greedy_decode(b, Language::l2, 10);
  EXPECT_EQ(a, c);
  for (const auto& s : a) {
    EXPECT_LE(s.size(), 10u);
    for (int t : s) EXPECT_FALSE(Vocabulary::is_special(t));
  }
  EXPECT_THROW(model.greedy_decode(b, Language::l2, 13), Error);
}

TEST(Model, GreedyDecodeAgreesWithTeacherForcedLogits) {
  std::mt19937_64 rng(10);
  Transformer<double> model(tiny_config(), 17);
  auto sents = random_sentences(rng, 4, 20);
  Batch src = make_batch(sents, Language::l1, 12);
  auto out = model.greedy_decode(src, Language::l2, 8);
  Batch tgt = make_batch(out, Language::l2, 12);
  Graph<double> g(GradMode::off);
  auto enc = model.encode(g, src, nullptr, nullptr);
  Var logits = model.decoder_logits(g, enc, tgt);
  const std::size_t V = 20, w = tgt.width - 1;
  for (std::size_t r = 0; r < tgt.rows; ++r) {
    for (std::size_t c = 0; c + 1 < tgt.lengths[r]; ++c) {
      const double* row = g.values(logits).data() + (r * w + c) * V;
      int best = Vocabulary::eos;
      for (int k = Vocabulary::num_special; k < static_cast<int>(V); ++k)
        if (row[k] > row[best]) best = k;
      const int expected = tgt.at(r, c + 1);
      // a row that hit the length cap never chose eos
      if (c < out[r].size() || out[r].size() < 8) EXPECT_EQ(best, expected);
    }
  }
}

TEST(Model, OverfitSinglePair) {
  ModelConfig cfg = tiny_config(30, 32);
  cfg.n_heads = 4;
  Transformer<float> model(cfg, 3);
  Batch x = make_batch(std::vector<Sentence>{{7, 12, 9, 20}}, Language::l1, 12);
  Batch y = make_batch(std::vector<Sentence>{{25, 8, 8, 14, 6}}, Language::l2, 12);
  AdamConfig ac;
  ac.lr = 3e-3;
  Adam<float> opt(model.parameters(), ac);
  double loss = 0.0;
  for (int step = 0; step < 150; ++step) {
    model.zero_grad();
    Graph<float> g;
    auto enc = model.encode(g, x, nullptr, nullptr);
    Var l = model.decode_loss(g, enc, y);
    loss = g.scalar(l);
    g.backward(l);
    opt.step();
  }
  EXPECT_LT(loss, 0.01);
  EXPECT_EQ(model.greedy_decode(x, Language::l2, 10)[0], y.sentence(0));
}

TEST(Model, FullDenoisingLossGradCheckDouble) {
  std::mt19937_64 rng(42);
  Transformer<double> model(tiny_config(20, 16), 99);
  auto clean = random_sentences(rng, 4, 20, 2, 6);
  Batch src = make_batch(clean, Language::l1, 12);
  auto loss = [&](Graph<double>& g) {
    auto enc = model.encode(g, src, nullptr, nullptr);
    return model.decode_loss(g, enc, src);
  };
  double worst = 0.0;
  for (auto* p : model.parameters()) {
    GradCheckOptions opts;
    if (p->size() > 64) {
      std::uniform_int_distribution<std::size_t> pick(0, p->size() - 1);
      for (int i = 0; i < 64; ++i) opts.coordinates.push_back(pick(rng));
    }
    auto report = grad_check_parameter<double>(loss, *p, 1e-5, opts);
    worst = std::max(worst, report.max_relative_error);
    EXPECT_LT(report.max_relative_error, 1e-6) << p->name;
  }
  RecordProperty("max_relative_error", std::to_string(worst));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = std::filesystem::temp_directory_path() / "robunmt_ckpt_test";
  std::filesystem::create_directories(dir);
  ModelConfig cfg = tiny_config(8 + Vocabulary::num_special, 16);
  Transformer<float> model(cfg, 77);
  Vocabulary vocab({"a", "b", "c", "d", "e", "f", "g", "h"});
  Checkpoint ckpt = capture_model(model, vocab);
  ckpt.state["step"] = "12";
  save_checkpoint(dir / "m.ckpt", ckpt);
  Checkpoint back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.config, cfg);
  EXPECT_EQ(back.vocab, vocab);
  EXPECT_EQ(back.state.at("step"), "12");
  Transformer<float> restored = model_from_checkpoint(back);
  auto a = model.parameters();
  auto b = restored.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i]->value.size(), b[i]->value.size());
    EXPECT_EQ(0, std::memcmp(a[i]->value.data(), b[i]->value.data(),
                             a[i]->value.size() * sizeof(float)))
        << a[i]->name;
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MissingFileHasCategory) {
  try {
    load_checkpoint("/nonexistent/dir/model.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), "checkpoint-not-found");
  }
}
