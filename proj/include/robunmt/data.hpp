#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "robunmt/model.hpp"
#include "robunmt/rng.hpp"
#include "robunmt/vocab.hpp"

namespace robunmt {

enum class ReorderRule { none, swap_pairs };

const char* reorder_name(ReorderRule rule);
ReorderRule parse_reorder(const std::string& name);

// Synthetic language pair. L1 is sampled from a first-order Markov grammar
// over `base_vocab` types; L2 is the token-wise cipher image of L1 followed
// by a deterministic local reordering.
//
// Grammar: anchors (shared surface forms, cipher fixed points) alternate with
// content words. Each anchor licenses a small class of content words; each
// content word selects its successor anchor (with probability `determinism`,
// otherwise a uniformly random anchor).
struct ToyLanguageSpec {
  std::size_t base_vocab = 200;
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  double anchor_fraction = 0.2;
  double determinism = 0.9;
  ReorderRule reorder = ReorderRule::swap_pairs;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static ToyLanguageSpec from_map(const std::map<std::string, std::string>& values);
};

class ToyLanguage {
 public:
  ToyLanguage(const ToyLanguageSpec& spec, std::uint64_t seed);

  const ToyLanguageSpec& spec() const { return spec_; }
  std::size_t anchor_count() const { return anchors_; }

  std::vector<std::string> sample_l1(Rng& rng) const;
  // Cipher image plus reordering: the exact L2 reference of an L1 sentence.
  std::vector<std::string> translate(const std::vector<std::string>& l1) const;
  std::vector<std::string> cipher(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decipher(const std::vector<std::string>& tokens) const;
  std::vector<std::string> l1_types() const;
  std::vector<std::string> l2_types() const;

 private:
  std::string l1_token(std::size_t base) const;
  std::string l2_token(std::size_t base) const;

  ToyLanguageSpec spec_;
  std::size_t anchors_ = 0;
  std::vector<std::size_t> cipher_;                 // base id -> L2 content index
  std::vector<std::vector<std::size_t>> licensed_;  // anchor -> content base ids
  std::vector<std::size_t> successor_;              // content base id -> anchor
  std::map<std::string, std::string> forward_, backward_;
};

template <typename Tok>
std::vector<Tok> apply_reorder(const std::vector<Tok>& tokens, ReorderRule rule) {
  std::vector<Tok> out = tokens;
  if (rule == ReorderRule::swap_pairs) {
    for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
  }
  return out;
}

struct CorpusBundle {
  std::filesystem::path train_l1, train_l2, test_l1, test_l2, manifest;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

// Writes train.l1, train.l2 (sentence-disjoint monolingual halves), test.l1,
// test.l2 (parallel references) and manifest.txt into out_dir.
CorpusBundle generate_bundle(const ToyLanguageSpec& spec, std::size_t n_train,
                             std::size_t n_test, std::uint64_t seed,
                             const std::filesystem::path& out_dir);

CorpusBundle bundle_paths(const std::filesystem::path& dir);

std::vector<std::vector<std::string>> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path,
                  const std::vector<std::vector<std::string>>& sentences);

// Union vocabulary over the given corpora; ids sorted by descending
// frequency, ties by token text.
Vocabulary build_vocab(const std::vector<std::filesystem::path>& corpora);

std::vector<Sentence> encode_corpus(const std::vector<std::vector<std::string>>& corpus,
                                    const Vocabulary& vocab, std::size_t* unknown = nullptr);

// Shuffled epochs of padded batches. Epoch e uses the order derived from
// (seed, e); position (epoch, cursor) fully determines the stream.
class BatchStream {
 public:
  BatchStream(const std::filesystem::path& corpus, const Vocabulary& vocab,
              std::size_t batch_size, std::size_t max_len, Language language,
              std::uint64_t seed);
  BatchStream(std::vector<Sentence> sentences, std::size_t batch_size, std::size_t max_len,
              Language language, std::uint64_t seed);

  Batch next();
  // Content sentences of the most recent batch, pre-truncation.
  const std::vector<Sentence>& last_sentences() const { return last_; }

  std::size_t size() const { return sentences_.size(); }
  std::size_t unknown_tokens() const { return unknown_; }
  std::size_t total_tokens() const { return total_tokens_; }
  double unk_rate() const {
    return total_tokens_ ? double(unknown_) / double(total_tokens_) : 0.0;
  }
  std::size_t truncated() const { return truncated_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t cursor() const { return cursor_; }
  void seek(std::size_t epoch, std::size_t cursor);

 private:
  void init();
  void reshuffle();

  std::vector<Sentence> sentences_;
  std::size_t batch_size_;
  std::size_t max_len_;
  Language language_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::size_t unknown_ = 0;
  std::size_t total_tokens_ = 0;
  std::size_t truncated_ = 0;
  std::vector<Sentence> last_;
};

// key=value file helpers shared by manifests and configs. '#' starts a
// comment line.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path,
                      const std::map<std::string, std::string>& values);

}  // namespace robunmt
