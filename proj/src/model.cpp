#include "robunmt/model.hpp"

#include <algorithm>
#include <cmath>

#include "robunmt/error.hpp"
#include "robunmt/kernels.hpp"

namespace robunmt {

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error("invalid-config", msg); };
  if (n_layers == 0) fail("n_layers must be positive");
  if (d_model == 0 || n_heads == 0 || d_ff == 0) fail("d_model, n_heads, d_ff must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (max_len < 3) fail("max_len must be at least 3");
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::num_special)) {
    fail("vocab_size must exceed the number of special tokens");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  return {{"n_layers", std::to_string(n_layers)}, {"d_model", std::to_string(d_model)},
          {"n_heads", std::to_string(n_heads)},   {"d_ff", std::to_string(d_ff)},
          {"max_len", std::to_string(max_len)},   {"vocab_size", std::to_string(vocab_size)},
          {"dropout", fmt(dropout)}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& values) {
  ModelConfig c;
  auto get = [&](const char* key) -> const std::string& {
    auto it = values.find(key);
    if (it == values.end()) throw Error("invalid-config", std::string("missing key ") + key);
    return it->second;
  };
  try {
    c.n_layers = std::stoul(get("n_layers"));
    c.d_model = std::stoul(get("d_model"));
    c.n_heads = std::stoul(get("n_heads"));
    c.d_ff = std::stoul(get("d_ff"));
    c.max_len = std::stoul(get("max_len"));
    c.vocab_size = std::stoul(get("vocab_size"));
    c.dropout = std::stod(get("dropout"));
  } catch (const std::logic_error& e) {
    throw Error("invalid-config", std::string("unparsable model config value: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------- batches

Sentence Batch::sentence(std::size_t row) const {
  const std::size_t len = lengths.at(row);
  Sentence out;
  for (std::size_t c = 1; c + 1 < len; ++c) out.push_back(at(row, c));
  return out;
}

Batch make_batch(std::span<const Sentence> sentences, Language lang, std::size_t max_len,
                 std::size_t* truncated) {
  if (max_len < 2) throw Error("invalid-argument", "make_batch: max_len must be >= 2");
  Batch b;
  b.language = lang;
  b.rows = sentences.size();
  const std::size_t cap = max_len - 2;
  for (const auto& s : sentences) {
    const std::size_t n = std::min(s.size(), cap);
    if (s.size() > cap && truncated != nullptr) ++*truncated;
    b.lengths.push_back(n + 2);
    b.width = std::max(b.width, n + 2);
  }
  b.ids.assign(b.rows * b.width, Vocabulary::pad);
  for (std::size_t r = 0; r < b.rows; ++r) {
    int* row = b.ids.data() + r * b.width;
    row[0] = Vocabulary::tag(lang);
    const std::size_t n = b.lengths[r] - 2;
    for (std::size_t i = 0; i < n; ++i) {
      const int tok = sentences[r][i];
      if (Vocabulary::is_special(tok) && tok != Vocabulary::unk) {
        throw Error("invalid-argument", "make_batch: sentence contains special token id " +
                                            std::to_string(tok));
      }
      row[1 + i] = tok;
    }
    row[n + 1] = Vocabulary::eos;
  }
  return b;
}

// ---------------------------------------------------------------- helpers

namespace {

template <typename T>
Var bind(Graph<T>& g, Parameter<T>& p) {
  return g.parameter(p);
}

template <typename T>
Var bind(Graph<T>& g, const Parameter<T>& p) {
  return g.input(p.shape, p.value);
}

template <typename T, typename P>
Var linear(Graph<T>& g, Var x, P& w, P& b) {
  return g.add_row(g.matmul(x, bind(g, w)), bind(g, b));
}

template <typename T, typename L>
Var norm(Graph<T>& g, Var x, L& ln) {
  return g.layer_norm(x, bind(g, ln.gamma), bind(g, ln.beta));
}

template <typename T, typename A>
Var attention_block(Graph<T>& g, A& p, Var queries, Var memory, const AttentionSpec& spec) {
  Var q = linear(g, queries, p.wq, p.bq);
  Var k = linear(g, memory, p.wk, p.bk);
  Var v = linear(g, memory, p.wv, p.bv);
  return linear(g, g.attention(q, k, v, spec), p.wo, p.bo);
}

template <typename T, typename F>
Var feed_forward(Graph<T>& g, F& p, Var x) {
  return linear(g, g.gelu(linear(g, x, p.w1, p.b1)), p.w2, p.b2);
}

template <typename T>
Var dropout(Graph<T>& g, Var x, double rate, const ForwardOptions& options) {
  if (options.dropout_rng == nullptr || rate <= 0.0) return x;
  const auto& node = g[x];
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(node.size());
  for (T& m : mask) m = keep(*options.dropout_rng) ? scale : T(0);
  return g.mul(x, g.input(node.shape, std::move(mask)));
}

template <typename T>
void init_normal(Parameter<T>& p, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (T& v : p.value) v = static_cast<T>(dist(rng));
}

template <typename T>
void init_layer_norm(LayerNormParams<T>& ln, const std::string& name, std::size_t d) {
  ln.gamma = Parameter<T>(name + ".gamma", {d});
  std::fill(ln.gamma.value.begin(), ln.gamma.value.end(), T(1));
  ln.beta = Parameter<T>(name + ".beta", {d});
}

template <typename T>
void init_linear(Parameter<T>& w, Parameter<T>& b, const std::string& name, std::size_t in,
                 std::size_t out, std::mt19937_64& rng) {
  w = Parameter<T>(name + ".weight", {in, out});
  init_normal(w, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  b = Parameter<T>(name + ".bias", {out});
}

template <typename T>
void init_attention(AttentionParams<T>& a, const std::string& name, std::size_t d,
                    std::mt19937_64& rng) {
  init_linear(a.wq, a.bq, name + ".q", d, d, rng);
  init_linear(a.wk, a.bk, name + ".k", d, d, rng);
  init_linear(a.wv, a.bv, name + ".v", d, d, rng);
  init_linear(a.wo, a.bo, name + ".o", d, d, rng);
}

template <typename T>
void init_ffn(FeedForwardParams<T>& f, const std::string& name, std::size_t d, std::size_t ff,
              std::mt19937_64& rng) {
  init_linear(f.w1, f.b1, name + ".fc1", d, ff, rng);
  init_linear(f.w2, f.b2, name + ".fc2", ff, d, rng);
}

template <typename T>
void check_delta(const Perturbation<T>* delta, std::size_t rows, std::size_t width, std::size_t d,
                 const char* which) {
  if (delta == nullptr) return;
  if (delta->rows != rows || delta->width != width || delta->dim != d ||
      delta->delta.size() != rows * width * d) {
    throw Error("shape-mismatch",
                std::string(which) + " has shape (" + std::to_string(delta->rows) + "x" +
                    std::to_string(delta->width) + "x" + std::to_string(delta->dim) +
                    "), batch needs (" + std::to_string(rows) + "x" + std::to_string(width) +
                    "x" + std::to_string(d) + ")");
  }
}

}  // namespace

// ---------------------------------------------------------------- model

template <typename T>
Transformer<T>::Transformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.d_model;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  word_embedding_ = Parameter<T>("word_embedding", {config_.vocab_size, d});
  init_normal(word_embedding_, rng, emb_std);
  positional_embedding_ = Parameter<T>("positional_embedding", {config_.max_len, d});
  init_normal(positional_embedding_, rng, emb_std);

  encoder_.resize(config_.n_layers);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string name = "encoder." + std::to_string(l);
    auto& layer = encoder_[l];
    init_layer_norm(layer.ln_attn, name + ".ln_attn", d);
    init_attention(layer.self_attn, name + ".self_attn", d, rng);
    init_layer_norm(layer.ln_ffn, name + ".ln_ffn", d);
    init_ffn(layer.ffn, name + ".ffn", d, config_.d_ff, rng);
  }
  init_layer_norm(encoder_norm_, "encoder.norm", d);

  decoder_.resize(config_.n_layers);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string name = "decoder." + std::to_string(l);
    auto& layer = decoder_[l];
    init_layer_norm(layer.ln_self, name + ".ln_self", d);
    init_attention(layer.self_attn, name + ".self_attn", d, rng);
    init_layer_norm(layer.ln_cross, name + ".ln_cross", d);
    init_attention(layer.cross_attn, name + ".cross_attn", d, rng);
    init_layer_norm(layer.ln_ffn, name + ".ln_ffn", d);
    init_ffn(layer.ffn, name + ".ffn", d, config_.d_ff, rng);
  }
  init_layer_norm(decoder_norm_, "decoder.norm", d);
  output_bias_ = Parameter<T>("output_bias", {config_.vocab_size});
}

template <typename T>
template <typename Self, typename Fn>
void Transformer<T>::visit_parameters(Self& self, Fn&& fn) {
  auto ln = [&](auto& p) {
    fn(p.gamma);
    fn(p.beta);
  };
  auto attn = [&](auto& p) {
    for (auto* w : {&p.wq, &p.bq, &p.wk, &p.bk, &p.wv, &p.bv, &p.wo, &p.bo}) fn(*w);
  };
  auto ffn = [&](auto& p) {
    for (auto* w : {&p.w1, &p.b1, &p.w2, &p.b2}) fn(*w);
  };
  fn(self.word_embedding_);
  fn(self.positional_embedding_);
  for (auto& layer : self.encoder_) {
    ln(layer.ln_attn);
    attn(layer.self_attn);
    ln(layer.ln_ffn);
    ffn(layer.ffn);
  }
  ln(self.encoder_norm_);
  for (auto& layer : self.decoder_) {
    ln(layer.ln_self);
    attn(layer.self_attn);
    ln(layer.ln_cross);
    attn(layer.cross_attn);
    ln(layer.ln_ffn);
    ffn(layer.ffn);
  }
  ln(self.decoder_norm_);
  fn(self.output_bias_);
}

template <typename T>
std::vector<Parameter<T>*> Transformer<T>::parameters() {
  std::vector<Parameter<T>*> out;
  visit_parameters(*this, [&](Parameter<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Transformer<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  visit_parameters(*this, [&](const Parameter<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
std::size_t Transformer<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

template <typename T>
void Transformer<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
template <typename Self>
EncoderOutput<T> Transformer<T>::encode_impl(Self& self, Graph<T>& g, const Batch& src,
                                             const Perturbation<T>* word_delta,
                                             const Perturbation<T>* position_delta, bool expose,
                                             const ForwardOptions& options) {
  const ModelConfig& cfg = self.config_;
  const std::size_t d = cfg.d_model;
  if (src.rows == 0 || src.width == 0) throw Error("empty-batch", "encode: zero-length batch");
  if (src.width > cfg.max_len) {
    throw Error("shape-mismatch", "encode: batch width " + std::to_string(src.width) +
                                      " exceeds max_len " + std::to_string(cfg.max_len));
  }
  check_delta(word_delta, src.rows, src.width, d, "word_delta");
  check_delta(position_delta, src.rows, src.width, d, "position_delta");

  const std::size_t n = src.rows * src.width;
  std::vector<int> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<int>(i % src.width);

  EncoderOutput<T> out;
  out.rows = src.rows;
  out.width = src.width;
  out.lengths = src.lengths;

  Var words = g.gather(bind(g, self.word_embedding_), src.ids);
  if (expose || word_delta != nullptr) {
    out.word_injection = g.input({n, d}, word_delta ? word_delta->delta : std::vector<T>(n * d),
                                 expose);
    words = g.add(words, out.word_injection);
  }
  Var pos = g.gather(bind(g, self.positional_embedding_), positions);
  if (expose || position_delta != nullptr) {
    out.position_injection = g.input(
        {n, d}, position_delta ? position_delta->delta : std::vector<T>(n * d), expose);
    pos = g.add(pos, out.position_injection);
  }
  Var x = dropout(g, g.add(words, pos), cfg.dropout, options);

  const AttentionSpec spec{src.rows, src.width, src.width, cfg.n_heads, src.lengths, false};
  for (auto& layer : self.encoder_) {
    Var h = norm(g, x, layer.ln_attn);
    Var a = attention_block(g, layer.self_attn, h, h, spec);
    x = g.add(x, dropout(g, a, cfg.dropout, options));
    Var f = feed_forward(g, layer.ffn, norm(g, x, layer.ln_ffn));
    x = g.add(x, dropout(g, f, cfg.dropout, options));
  }
  out.states = norm(g, x, self.encoder_norm_);
  return out;
}

template <typename T>
EncoderOutput<T> Transformer<T>::encode(Graph<T>& g, const Batch& src,
                                        const Perturbation<T>* word_delta,
                                        const Perturbation<T>* position_delta,
                                        bool expose_injections, const ForwardOptions& options) {
  return encode_impl(*this, g, src, word_delta, position_delta, expose_injections, options);
}

template <typename T>
Var Transformer<T>::decoder_logits(Graph<T>& g, const EncoderOutput<T>& enc, const Batch& target,
                                   const ForwardOptions& options) {
  if (target.rows == 0 || target.width < 2) {
    throw Error("empty-target", "decode: target batch has no tokens to predict");
  }
  if (target.rows != enc.rows) {
    throw Error("shape-mismatch", "decode: target has " + std::to_string(target.rows) +
                                      " rows, source " + std::to_string(enc.rows));
  }
  if (target.width > config_.max_len) {
    throw Error("shape-mismatch", "decode: target width exceeds max_len");
  }
  const std::size_t rows = target.rows;
  const std::size_t w = target.width - 1;
  std::vector<int> ids(rows * w);
  std::vector<int> positions(rows * w);
  std::vector<std::size_t> lengths(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    lengths[r] = target.lengths[r] - 1;
    for (std::size_t c = 0; c < w; ++c) {
      ids[r * w + c] = target.at(r, c);
      positions[r * w + c] = static_cast<int>(c);
    }
  }
  Var x = g.add(g.gather(g.parameter(word_embedding_), ids),
                g.gather(g.parameter(positional_embedding_), positions));
  x = dropout(g, x, config_.dropout, options);
  const AttentionSpec self_spec{rows, w, w, config_.n_heads, lengths, true};
  const AttentionSpec cross_spec{rows, w, enc.width, config_.n_heads, enc.lengths, false};
  for (auto& layer : decoder_) {
    Var h = norm(g, x, layer.ln_self);
    x = g.add(x, dropout(g, attention_block(g, layer.self_attn, h, h, self_spec),
                         config_.dropout, options));
    h = norm(g, x, layer.ln_cross);
    x = g.add(x, dropout(g, attention_block(g, layer.cross_attn, h, enc.states, cross_spec),
                         config_.dropout, options));
    x = g.add(x, dropout(g, feed_forward(g, layer.ffn, norm(g, x, layer.ln_ffn)),
                         config_.dropout, options));
  }
  Var h = norm(g, x, decoder_norm_);
  return g.add_row(g.matmul(h, g.parameter(word_embedding_), true), g.parameter(output_bias_));
}

template <typename T>
Var Transformer<T>::decode_loss(Graph<T>& g, const EncoderOutput<T>& enc, const Batch& target,
                                const ForwardOptions& options) {
  Var logits = decoder_logits(g, enc, target, options);
  const std::size_t w = target.width - 1;
  std::vector<int> targets(target.rows * w, -1);
  for (std::size_t r = 0; r < target.rows; ++r) {
    for (std::size_t c = 0; c + 1 < target.lengths[r]; ++c) {
      targets[r * w + c] = target.at(r, c + 1);
    }
  }
  return g.cross_entropy(logits, targets);
}

// Incremental greedy decoding with per-layer key/value caches. Mirrors
// decoder_logits() exactly but touches only the newest position per step.
template <typename T>
std::vector<Sentence> Transformer<T>::greedy_decode(const Batch& src, Language target,
                                                    std::size_t max_len) const {
  if (max_len > config_.max_len) {
    throw Error("invalid-argument", "greedy_decode: max_len " + std::to_string(max_len) +
                                        " exceeds model max_len " +
                                        std::to_string(config_.max_len));
  }
  std::vector<Sentence> result(src.rows);
  if (src.rows == 0 || max_len == 0) return result;

  Graph<T> g(GradMode::off);
  EncoderOutput<T> enc = encode_impl(*this, g, src, nullptr, nullptr, false, {});
  const std::vector<T>& memory = g[enc.states].values;

  const std::size_t rows = src.rows;
  const std::size_t d = config_.d_model;
  const std::size_t heads = config_.n_heads;
  const std::size_t dh = d / heads;
  const std::size_t V = config_.vocab_size;
  const std::size_t L = config_.n_layers;
  const std::size_t mem_rows = rows * enc.width;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));

  auto dense = [](const std::vector<T>& x, std::size_t n, const Parameter<T>& w,
                  const Parameter<T>& b) {
    const std::size_t in = w.shape[0], outd = w.shape[1];
    std::vector<T> y(n * outd);
    kernels::gemm(n, outd, in, x.data(), false, w.value.data(), false, y.data(), T(0));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < outd; ++c) y[r * outd + c] += b.value[c];
    return y;
  };
  auto layer_norm = [&](const std::vector<T>& x, const LayerNormParams<T>& p) {
    std::vector<T> y(x.size());
    kernels::layer_norm(x.size() / d, d, x.data(), p.gamma.value.data(), p.beta.value.data(),
                        T(1e-5), y.data(), static_cast<T*>(nullptr), static_cast<T*>(nullptr));
    return y;
  };

  std::vector<std::vector<T>> cross_k(L), cross_v(L);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& ca = decoder_[l].cross_attn;
    cross_k[l] = dense(memory, mem_rows, ca.wk, ca.bk);
    cross_v[l] = dense(memory, mem_rows, ca.wv, ca.bv);
  }
  // self caches: [layer][row][position][d]
  std::vector<std::vector<T>> self_k(L, std::vector<T>(rows * max_len * d));
  std::vector<std::vector<T>> self_v(L, std::vector<T>(rows * max_len * d));

  std::vector<int> current(rows, Vocabulary::tag(target));
  std::vector<bool> done(rows, false);
  std::vector<T> scores(std::max(max_len, enc.width));

  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<T> x(rows * d);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* e = word_embedding_.value.data() + static_cast<std::size_t>(current[r]) * d;
      const T* p = positional_embedding_.value.data() + t * d;
      for (std::size_t c = 0; c < d; ++c) x[r * d + c] = e[c] + p[c];
    }
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = decoder_[l];
      // causal self-attention over positions 0..t
      {
        auto h = layer_norm(x, layer.ln_self);
        auto q = dense(h, rows, layer.self_attn.wq, layer.self_attn.bq);
        auto k = dense(h, rows, layer.self_attn.wk, layer.self_attn.bk);
        auto v = dense(h, rows, layer.self_attn.wv, layer.self_attn.bv);
        std::vector<T> o(rows * d, T(0));
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(k.begin() + static_cast<std::ptrdiff_t>(r * d), d,
                      self_k[l].begin() + static_cast<std::ptrdiff_t>((r * max_len + t) * d));
          std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * d), d,
                      self_v[l].begin() + static_cast<std::ptrdiff_t>((r * max_len + t) * d));
          for (std::size_t hd = 0; hd < heads; ++hd) {
            const T* qi = q.data() + r * d + hd * dh;
            for (std::size_t j = 0; j <= t; ++j) {
              const T* kj = self_k[l].data() + (r * max_len + j) * d + hd * dh;
              T s = 0;
              for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
              scores[j] = s * inv_scale;
            }
            kernels::softmax_row(std::span<T>(scores.data(), t + 1));
            T* oi = o.data() + r * d + hd * dh;
            for (std::size_t j = 0; j <= t; ++j) {
              const T* vj = self_v[l].data() + (r * max_len + j) * d + hd * dh;
              for (std::size_t c = 0; c < dh; ++c) oi[c] += scores[j] * vj[c];
            }
          }
        }
        auto a = dense(o, rows, layer.self_attn.wo, layer.self_attn.bo);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += a[i];
      }
      // cross-attention over the encoder memory
      {
        auto h = layer_norm(x, layer.ln_cross);
        auto q = dense(h, rows, layer.cross_attn.wq, layer.cross_attn.bq);
        std::vector<T> o(rows * d, T(0));
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t klen = std::min(enc.lengths[r], enc.width);
          if (klen == 0) continue;
          for (std::size_t hd = 0; hd < heads; ++hd) {
            const T* qi = q.data() + r * d + hd * dh;
            for (std::size_t j = 0; j < klen; ++j) {
              const T* kj = cross_k[l].data() + (r * enc.width + j) * d + hd * dh;
              T s = 0;
              for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
              scores[j] = s * inv_scale;
            }
            kernels::softmax_row(std::span<T>(scores.data(), klen));
            T* oi = o.data() + r * d + hd * dh;
            for (std::size_t j = 0; j < klen; ++j) {
              const T* vj = cross_v[l].data() + (r * enc.width + j) * d + hd * dh;
              for (std::size_t c = 0; c < dh; ++c) oi[c] += scores[j] * vj[c];
            }
          }
        }
        auto a = dense(o, rows, layer.cross_attn.wo, layer.cross_attn.bo);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += a[i];
      }
      {
        auto h = layer_norm(x, layer.ln_ffn);
        auto f1 = dense(h, rows, layer.ffn.w1, layer.ffn.b1);
        for (T& v : f1) v = kernels::gelu(v);
        auto f2 = dense(f1, rows, layer.ffn.w2, layer.ffn.b2);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += f2[i];
      }
    }
    auto h = layer_norm(x, decoder_norm_);
    std::vector<T> logits(rows * V);
    kernels::gemm(rows, V, d, h.data(), false, word_embedding_.value.data(), true, logits.data(),
                  T(0));
    bool all_done = true;
    for (std::size_t r = 0; r < rows; ++r) {
      if (done[r]) continue;
      const T* lr = logits.data() + r * V;
      int best = Vocabulary::eos;
      T best_score = lr[best] + output_bias_.value[static_cast<std::size_t>(best)];
      for (std::size_t c = Vocabulary::num_special; c < V; ++c) {
        const T s = lr[c] + output_bias_.value[c];
        if (s > best_score) {
          best_score = s;
          best = static_cast<int>(c);
        }
      }
      if (best == Vocabulary::eos) {
        done[r] = true;
      } else {
        result[r].push_back(best);
        current[r] = best;
        all_done = false;
      }
    }
    if (all_done) break;
  }
  return result;
}

template <typename T>
EmbeddingGradients<T> embedding_gradients(const Graph<T>& g, const EncoderOutput<T>& enc) {
  if (enc.rows == 0 || enc.width == 0) {
    throw Error("empty-batch", "embedding_gradients: zero-length batch");
  }
  if (!g.backward_done()) {
    throw Error("backward-not-run", "embedding_gradients: backward() has not been run");
  }
  if (!enc.word_injection.valid() || !enc.position_injection.valid() ||
      !g[enc.word_injection].requires_grad || !g[enc.position_injection].requires_grad) {
    throw Error("injections-not-exposed",
                "embedding_gradients: encode() was called without exposed injection points");
  }
  EmbeddingGradients<T> out;
  out.rows = enc.rows;
  out.width = enc.width;
  out.dim = g[enc.states].shape[1];
  out.word = g.grad(enc.word_injection);
  out.position = g.grad(enc.position_injection);
  return out;
}

template class Transformer<float>;
template class Transformer<double>;
template EmbeddingGradients<float> embedding_gradients(const Graph<float>&,
                                                       const EncoderOutput<float>&);
template EmbeddingGradients<double> embedding_gradients(const Graph<double>&,
                                                        const EncoderOutput<double>&);

}  // namespace robunmt
