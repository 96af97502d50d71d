#include "robunmt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "robunmt/error.hpp"

namespace robunmt {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::size_t to_size(const std::map<std::string, std::string>& m, const std::string& key,
                    std::size_t fallback) {
  auto it = m.find(key);
  if (it == m.end()) return fallback;
  try {
    return std::stoul(it->second);
  } catch (const std::logic_error&) {
    throw Error("invalid-config", "not an integer: " + key + "=" + it->second);
  }
}

double to_double(const std::map<std::string, std::string>& m, const std::string& key,
                 double fallback) {
  auto it = m.find(key);
  if (it == m.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::logic_error&) {
    throw Error("invalid-config", "not a number: " + key + "=" + it->second);
  }
}

}  // namespace

const char* reorder_name(ReorderRule rule) {
  return rule == ReorderRule::none ? "none" : "swap_pairs";
}

ReorderRule parse_reorder(const std::string& name) {
  if (name == "none") return ReorderRule::none;
  if (name == "swap_pairs") return ReorderRule::swap_pairs;
  throw Error("invalid-config", "unknown reorder rule: " + name);
}

void ToyLanguageSpec::validate() const {
  if (base_vocab < 2) throw Error("vocab-too-small", "base_vocab must be >= 2");
  if (min_len < 1 || max_len < min_len) {
    throw Error("invalid-config", "need 1 <= min_len <= max_len");
  }
  if (!(anchor_fraction >= 0.0 && anchor_fraction <= 1.0)) {
    throw Error("invalid-config", "anchor_fraction must be in [0, 1]");
  }
  if (!(determinism >= 0.0 && determinism <= 1.0)) {
    throw Error("invalid-config", "determinism must be in [0, 1]");
  }
  const auto anchors =
      static_cast<std::size_t>(std::llround(anchor_fraction * static_cast<double>(base_vocab)));
  const std::size_t content = base_vocab - anchors;
  if (anchors > 0 && content > 0 && content < anchors) {
    throw Error("vocab-too-small", "every anchor needs at least one content word");
  }
}

std::map<std::string, std::string> ToyLanguageSpec::to_map() const {
  std::ostringstream af, det;
  af.precision(17);
  det.precision(17);
  af << anchor_fraction;
  det << determinism;
  return {{"base_vocab", std::to_string(base_vocab)},
          {"min_len", std::to_string(min_len)},
          {"max_len", std::to_string(max_len)},
          {"anchor_fraction", af.str()},
          {"determinism", det.str()},
          {"reorder", reorder_name(reorder)}};
}

ToyLanguageSpec ToyLanguageSpec::from_map(const std::map<std::string, std::string>& m) {
  ToyLanguageSpec s;
  s.base_vocab = to_size(m, "base_vocab", s.base_vocab);
  s.min_len = to_size(m, "min_len", s.min_len);
  s.max_len = to_size(m, "max_len", s.max_len);
  s.anchor_fraction = to_double(m, "anchor_fraction", s.anchor_fraction);
  s.determinism = to_double(m, "determinism", s.determinism);
  if (auto it = m.find("reorder"); it != m.end()) s.reorder = parse_reorder(it->second);
  return s;
}

ToyLanguage::ToyLanguage(const ToyLanguageSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  const std::size_t V = spec_.base_vocab;
  anchors_ = static_cast<std::size_t>(
      std::llround(spec_.anchor_fraction * static_cast<double>(V)));
  const std::size_t content = V - anchors_;
  Rng rng = derived_rng(seed, 0);

  cipher_.resize(V);
  std::vector<std::size_t> perm(content);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < V; ++i) cipher_[i] = i < anchors_ ? i : perm[i - anchors_];

  // Grammar tables. Base ids [0, anchors) are anchors, the rest content.
  successor_.assign(V, 0);
  licensed_.assign(std::max<std::size_t>(anchors_, 1), {});
  if (anchors_ > 0 && content > 0) {
    std::vector<std::size_t> words(content);
    std::iota(words.begin(), words.end(), anchors_);
    std::shuffle(words.begin(), words.end(), rng);
    for (std::size_t j = 0; j < content; ++j) licensed_[j % anchors_].push_back(words[j]);
    // successors are distinct within a class where possible, so the pair
    // (licensing anchor, successor anchor) pins down the content word.
    std::vector<std::size_t> pool(anchors_);
    std::iota(pool.begin(), pool.end(), 0);
    for (const auto& cls : licensed_) {
      std::shuffle(pool.begin(), pool.end(), rng);
      for (std::size_t k = 0; k < cls.size(); ++k) successor_[cls[k]] = pool[k % anchors_];
    }
  } else {
    // Degenerate grammars: a plain Markov chain over whatever types exist.
    const std::size_t n = anchors_ > 0 ? anchors_ : content;
    const std::size_t offset = anchors_ > 0 ? 0 : anchors_;
    for (std::size_t i = 0; i < V; ++i) successor_[i] = offset + uniform_index(rng, n);
    for (auto& cls : licensed_) {
      for (int k = 0; k < 4; ++k) cls.push_back(offset + uniform_index(rng, n));
    }
  }

  for (std::size_t i = 0; i < V; ++i) {
    forward_[l1_token(i)] = l2_token(i);
    backward_[l2_token(i)] = l1_token(i);
  }
}

std::string ToyLanguage::l1_token(std::size_t base) const {
  return base < anchors_ ? "s" + std::to_string(base) : "a" + std::to_string(base - anchors_);
}

std::string ToyLanguage::l2_token(std::size_t base) const {
  return base < anchors_ ? "s" + std::to_string(base) : "b" + std::to_string(cipher_[base]);
}

std::vector<std::string> ToyLanguage::sample_l1(Rng& rng) const {
  const std::size_t V = spec_.base_vocab;
  const std::size_t content = V - anchors_;
  const std::size_t len =
      spec_.min_len + uniform_index(rng, spec_.max_len - spec_.min_len + 1);
  std::vector<std::string> out;
  out.reserve(len);
  const bool mixed = anchors_ > 0 && content > 0;
  const std::size_t n_start = anchors_ > 0 ? anchors_ : content;
  std::size_t cur = (anchors_ > 0 ? 0 : anchors_) + uniform_index(rng, n_start);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(l1_token(cur));
    if (mixed && cur < anchors_) {
      const auto& cls = licensed_[cur];
      cur = cls[uniform_index(rng, cls.size())];
    } else if (mixed) {
      cur = uniform01(rng) < spec_.determinism ? successor_[cur] : uniform_index(rng, anchors_);
    } else if (anchors_ > 0) {
      const auto& cls = licensed_[cur];
      cur = uniform01(rng) < spec_.determinism ? cls[uniform_index(rng, cls.size())]
                                               : uniform_index(rng, anchors_);
    } else {
      cur = uniform01(rng) < spec_.determinism ? successor_[cur]
                                               : anchors_ + uniform_index(rng, content);
    }
  }
  return out;
}

std::vector<std::string> ToyLanguage::cipher(const std::vector<std::string>& tokens) const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = forward_.find(t);
    if (it == forward_.end()) throw Error("invalid-argument", "not an L1 token: " + t);
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> ToyLanguage::decipher(const std::vector<std::string>& tokens) const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = backward_.find(t);
    if (it == backward_.end()) throw Error("invalid-argument", "not an L2 token: " + t);
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> ToyLanguage::translate(const std::vector<std::string>& l1) const {
  return apply_reorder(cipher(l1), spec_.reorder);
}

std::vector<std::string> ToyLanguage::l1_types() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < spec_.base_vocab; ++i) out.push_back(l1_token(i));
  return out;
}

std::vector<std::string> ToyLanguage::l2_types() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < spec_.base_vocab; ++i) out.push_back(l2_token(i));
  return out;
}

CorpusBundle bundle_paths(const std::filesystem::path& dir) {
  CorpusBundle b;
  b.train_l1 = dir / "train.l1";
  b.train_l2 = dir / "train.l2";
  b.test_l1 = dir / "test.l1";
  b.test_l2 = dir / "test.l2";
  b.manifest = dir / "manifest.txt";
  return b;
}

CorpusBundle generate_bundle(const ToyLanguageSpec& spec, std::size_t n_train,
                             std::size_t n_test, std::uint64_t seed,
                             const std::filesystem::path& out_dir) {
  if (n_train == 0 || n_test == 0) {
    throw Error("invalid-argument", "n_train and n_test must be positive");
  }
  ToyLanguage lang(spec, seed);
  Rng rng = derived_rng(seed, 1);

  const std::size_t needed = n_test + 2 * n_train;
  const std::size_t max_attempts = 20 * needed + 1000;
  std::size_t attempts = 0;
  std::unordered_set<std::string> used;       // every emitted sentence string
  std::unordered_set<std::string> test_side;  // both sides of the test pairs
  auto draw = [&](bool is_test) -> std::vector<std::string> {
    while (attempts++ < max_attempts) {
      auto l1 = lang.sample_l1(rng);
      const std::string a = join(l1);
      const std::string b = join(lang.translate(l1));
      if (used.count(a) || used.count(b) || test_side.count(a) || test_side.count(b)) continue;
      used.insert(a);
      used.insert(b);
      if (is_test) {
        test_side.insert(a);
        test_side.insert(b);
      }
      return l1;
    }
    throw Error("vocab-too-small", "grammar cannot produce " + std::to_string(needed) +
                                       " distinct sentences");
  };

  std::vector<std::vector<std::string>> test_l1, test_l2, train_l1, train_l2;
  for (std::size_t i = 0; i < n_test; ++i) {
    test_l1.push_back(draw(true));
    test_l2.push_back(lang.translate(test_l1.back()));
  }
  for (std::size_t i = 0; i < n_train; ++i) train_l1.push_back(draw(false));
  for (std::size_t i = 0; i < n_train; ++i) train_l2.push_back(lang.translate(draw(false)));

  std::filesystem::create_directories(out_dir);
  CorpusBundle b = bundle_paths(out_dir);
  b.n_train = n_train;
  b.n_test = n_test;
  write_corpus(b.train_l1, train_l1);
  write_corpus(b.train_l2, train_l2);
  write_corpus(b.test_l1, test_l1);
  write_corpus(b.test_l2, test_l2);

  auto manifest = spec.to_map();
  manifest["seed"] = std::to_string(seed);
  manifest["n_train"] = std::to_string(n_train);
  manifest["n_test"] = std::to_string(n_test);
  manifest["anchors"] = std::to_string(lang.anchor_count());
  manifest["files"] = "train.l1,train.l2,test.l1,test.l2";
  write_key_values(b.manifest, manifest);
  return b;
}

std::vector<std::vector<std::string>> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("file-not-found", "cannot read corpus " + path.string());
  std::vector<std::vector<std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_tokens(line);
    if (tokens.empty()) {
      throw Error("malformed-corpus",
                  path.string() + ":" + std::to_string(line_no) + ": empty sentence");
    }
    for (const auto& t : tokens) {
      if (std::find(Vocabulary::special_tokens.begin(), Vocabulary::special_tokens.end(), t) !=
          Vocabulary::special_tokens.end()) {
        throw Error("malformed-corpus",
                    path.string() + ":" + std::to_string(line_no) + ": reserved token " + t);
      }
    }
    out.push_back(std::move(tokens));
  }
  return out;
}

void write_corpus(const std::filesystem::path& path,
                  const std::vector<std::vector<std::string>>& sentences) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot write " + path.string());
  for (const auto& s : sentences) out << join(s) << '\n';
  if (!out) throw Error("io-error", "failed writing " + path.string());
}

Vocabulary build_vocab(const std::vector<std::filesystem::path>& corpora) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& path : corpora) {
    for (const auto& sentence : read_corpus(path)) {
      for (const auto& t : sentence) ++counts[t];
    }
  }
  if (counts.empty()) throw Error("empty-corpus", "no tokens in the given corpora");
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) {
    return x.second != y.second ? x.second > y.second : x.first < y.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(items.size());
  for (auto& [t, c] : items) tokens.push_back(t);
  return Vocabulary(std::move(tokens));
}

std::vector<Sentence> encode_corpus(const std::vector<std::vector<std::string>>& corpus,
                                    const Vocabulary& vocab, std::size_t* unknown) {
  std::vector<Sentence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(vocab.encode(s, unknown));
  return out;
}

BatchStream::BatchStream(const std::filesystem::path& corpus, const Vocabulary& vocab,
                         std::size_t batch_size, std::size_t max_len, Language language,
                         std::uint64_t seed)
    : batch_size_(batch_size), max_len_(max_len), language_(language), seed_(seed) {
  sentences_ = encode_corpus(read_corpus(corpus), vocab, &unknown_);
  init();
}

BatchStream::BatchStream(std::vector<Sentence> sentences, std::size_t batch_size,
                         std::size_t max_len, Language language, std::uint64_t seed)
    : sentences_(std::move(sentences)),
      batch_size_(batch_size),
      max_len_(max_len),
      language_(language),
      seed_(seed) {
  init();
}

void BatchStream::init() {
  if (sentences_.empty()) throw Error("empty-corpus", "batch stream over an empty corpus");
  if (batch_size_ == 0) throw Error("invalid-argument", "batch_size must be positive");
  for (const auto& s : sentences_) {
    total_tokens_ += s.size();
    if (s.empty()) throw Error("malformed-corpus", "empty sentence in batch stream");
  }
  reshuffle();
}

void BatchStream::reshuffle() {
  order_.resize(sentences_.size());
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng = derived_rng(seed_, epoch_);
  std::shuffle(order_.begin(), order_.end(), rng);
}

void BatchStream::seek(std::size_t epoch, std::size_t cursor) {
  if (cursor > sentences_.size()) throw Error("invalid-argument", "stream cursor out of range");
  epoch_ = epoch;
  cursor_ = cursor;
  reshuffle();
}

Batch BatchStream::next() {
  if (cursor_ >= sentences_.size()) {
    ++epoch_;
    cursor_ = 0;
    reshuffle();
  }
  const std::size_t end = std::min(sentences_.size(), cursor_ + batch_size_);
  last_.clear();
  for (std::size_t i = cursor_; i < end; ++i) last_.push_back(sentences_[order_[i]]);
  cursor_ = end;
  return make_batch(last_, language_, max_len_, &truncated_);
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("file-not-found", "cannot read " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || trim(t.substr(0, eq)).empty()) {
      throw Error("malformed-config", path.string() + ":" + std::to_string(line_no) +
                                          ": expected key=value");
    }
    out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return out;
}

void write_key_values(const std::filesystem::path& path,
                      const std::map<std::string, std::string>& values) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot write " + path.string());
  for (const auto& [k, v] : values) out << k << '=' << v << '\n';
  if (!out) throw Error("io-error", "failed writing " + path.string());
}

}  // namespace robunmt
