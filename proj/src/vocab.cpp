#include "robunmt/vocab.hpp"

#include <fstream>

#include "robunmt/error.hpp"

namespace robunmt {

const char* language_name(Language lang) { return lang == Language::l1 ? "l1" : "l2"; }

Language parse_language(std::string_view name) {
  if (name == "l1" || name == "lang1") return Language::l1;
  if (name == "l2" || name == "lang2") return Language::l2;
  throw Error("invalid-argument", "unknown language '" + std::string(name) + "'");
}

Vocabulary::Vocabulary(std::vector<std::string> content) : content_(std::move(content)) {
  for (std::size_t i = 0; i < content_.size(); ++i) {
    const std::string& tok = content_[i];
    if (tok.empty() || tok.find_first_of(" \t\r\n") != std::string::npos) {
      throw Error("invalid-vocabulary", "token '" + tok + "' is empty or contains whitespace");
    }
    for (auto special : special_tokens) {
      if (tok == special) throw Error("invalid-vocabulary", "content token shadows " + tok);
    }
    if (!index_.emplace(tok, num_special + static_cast<int>(i)).second) {
      throw Error("invalid-vocabulary", "duplicate token '" + tok + "'");
    }
  }
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= size()) {
    throw Error("invalid-argument", "token id " + std::to_string(id) + " outside vocabulary");
  }
  static const std::array<std::string, num_special> specials{
      std::string(special_tokens[0]), std::string(special_tokens[1]),
      std::string(special_tokens[2]), std::string(special_tokens[3]),
      std::string(special_tokens[4]), std::string(special_tokens[5])};
  if (id < num_special) return specials[static_cast<std::size_t>(id)];
  return content_[static_cast<std::size_t>(id - num_special)];
}

Sentence Vocabulary::encode(std::span<const std::string> tokens, std::size_t* unknown) const {
  Sentence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    const int i = id(t);
    if (i == unk && unknown != nullptr) ++*unknown;
    out.push_back(i);
  }
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::join(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot write vocabulary " + path.string());
  for (const auto& tok : content_) out << tok << '\n';
  if (!out) throw Error("io-error", "failed writing vocabulary " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot read vocabulary " + path.string());
  std::vector<std::string> content;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      throw Error("malformed-input", path.string() + ":" + std::to_string(lineno) +
                                         ": empty vocabulary line");
    }
    content.push_back(line);
  }
  return Vocabulary(std::move(content));
}

std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace robunmt
