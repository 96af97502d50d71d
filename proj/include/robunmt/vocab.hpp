#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace robunmt {

// Content token ids; unk is the only special id allowed inside a Sentence.
using Sentence = std::vector<int>;

enum class Language { l1, l2 };

const char* language_name(Language lang);
Language parse_language(std::string_view name);

// Shared vocabulary for both languages. Special tokens occupy the lowest ids
// in a fixed order; content tokens follow.
class Vocabulary {
 public:
  static constexpr int pad = 0;
  static constexpr int bos = 1;
  static constexpr int eos = 2;
  static constexpr int unk = 3;
  static constexpr int lang1 = 4;
  static constexpr int lang2 = 5;
  static constexpr int num_special = 6;
  static constexpr std::array<std::string_view, num_special> special_tokens{
      "<pad>", "<s>", "</s>", "<unk>", "<lang1>", "<lang2>"};

  Vocabulary() = default;
  // `content` lists non-special tokens in id order (first gets num_special).
  explicit Vocabulary(std::vector<std::string> content);

  static int tag(Language lang) { return lang == Language::l1 ? lang1 : lang2; }

  std::size_t size() const { return num_special + content_.size(); }
  std::size_t content_size() const { return content_.size(); }
  const std::vector<std::string>& content_tokens() const { return content_; }

  static bool is_special(int id) { return id >= 0 && id < num_special; }
  bool contains(std::string_view token) const;
  // Unknown tokens map to unk.
  int id(std::string_view token) const;
  const std::string& token(int id) const;

  Sentence encode(std::span<const std::string> tokens, std::size_t* unknown = nullptr) const;
  std::vector<std::string> decode(std::span<const int> ids) const;
  std::string join(std::span<const int> ids) const;

  // One content token per line; line number is id - num_special.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return content_ == other.content_; }

 private:
  std::vector<std::string> content_;
  std::unordered_map<std::string, int> index_;
};

std::vector<std::string> split_tokens(std::string_view line);

}  // namespace robunmt
