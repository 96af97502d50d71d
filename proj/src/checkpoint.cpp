#include "robunmt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "robunmt/error.hpp"

namespace robunmt {

namespace {

constexpr const char* kMagic = "robunmt-checkpoint 1";

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& what) {
  throw Error("checkpoint-corrupt", path.string() + ": " + what);
}

void write_section(std::ostream& out, const char* name,
                   const std::map<std::string, std::string>& values) {
  out << '[' << name << "]\n";
  for (const auto& [k, v] : values) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw Error("invalid-argument", "checkpoint key/value may not contain newlines: " + k);
    }
    out << k << '=' << v << '\n';
  }
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io-error", "cannot write checkpoint " + path.string());
  out << kMagic << '\n';
  write_section(out, "config", ckpt.config.to_map());
  write_section(out, "state", ckpt.state);
  out << "[vocab] " << ckpt.vocab.content_size() << '\n';
  for (const auto& tok : ckpt.vocab.content_tokens()) out << tok << '\n';
  out << "[tensors] " << ckpt.tensors.size() << '\n';
  for (const auto& t : ckpt.tensors) {
    if (numel(t.shape) != t.values.size()) {
      throw Error("shape-mismatch", "checkpoint tensor " + t.name + " shape/value mismatch");
    }
    out << t.name << " f32 " << t.shape.size();
    for (std::size_t d : t.shape) out << ' ' << d;
    out << '\n';
  }
  out << "[data]\n";
  for (const auto& t : ckpt.tensors) {
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(float)));
  }
  if (!out) throw Error("io-error", "failed writing checkpoint " + path.string());
}

namespace {

Checkpoint parse_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint-not-found", "cannot open checkpoint " + path.string());

  std::string line;
  if (!std::getline(in, line) || line != kMagic) corrupt(path, "bad magic line");

  Checkpoint ckpt;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string>* section = nullptr;
  std::size_t vocab_count = 0;
  while (std::getline(in, line)) {
    if (line == "[config]") {
      section = &config;
    } else if (line == "[state]") {
      section = &ckpt.state;
    } else if (line.rfind("[vocab] ", 0) == 0) {
      vocab_count = std::stoul(line.substr(8));
      break;
    } else {
      const auto eq = line.find('=');
      if (section == nullptr || eq == std::string::npos) corrupt(path, "bad header line: " + line);
      (*section)[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  if (!in) corrupt(path, "truncated header");
  ckpt.config = ModelConfig::from_map(config);

  std::vector<std::string> tokens(vocab_count);
  for (auto& tok : tokens) {
    if (!std::getline(in, tok)) corrupt(path, "truncated vocabulary");
  }
  ckpt.vocab = Vocabulary(std::move(tokens));

  if (!std::getline(in, line) || line.rfind("[tensors] ", 0) != 0) {
    corrupt(path, "missing tensor manifest");
  }
  const std::size_t tensor_count = std::stoul(line.substr(10));
  ckpt.tensors.resize(tensor_count);
  for (auto& t : ckpt.tensors) {
    if (!std::getline(in, line)) corrupt(path, "truncated tensor manifest");
    std::istringstream row(line);
    std::string dtype;
    std::size_t rank = 0;
    if (!(row >> t.name >> dtype >> rank) || dtype != "f32") {
      corrupt(path, "bad manifest line: " + line);
    }
    t.shape.resize(rank);
    for (auto& d : t.shape) {
      if (!(row >> d)) corrupt(path, "bad manifest line: " + line);
    }
    t.values.resize(numel(t.shape));
  }
  if (!std::getline(in, line) || line != "[data]") corrupt(path, "missing data section");
  for (auto& t : ckpt.tensors) {
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    if (!in) corrupt(path, "truncated data for " + t.name);
  }
  if (in.peek() != std::char_traits<char>::eof()) corrupt(path, "trailing bytes after data");
  return ckpt;
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error("checkpoint-not-found", "no checkpoint at " + path.string());
  }
  try {
    return parse_checkpoint(path);
  } catch (const std::logic_error& e) {
    corrupt(path, std::string("unparsable number: ") + e.what());
  }
}

Checkpoint capture_model(const Transformer<float>& model, const Vocabulary& vocab) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.vocab = vocab;
  for (const auto* p : model.parameters()) ckpt.tensors.push_back({p->name, p->shape, p->value});
  return ckpt;
}

void restore_model(Transformer<float>& model, const Checkpoint& ckpt) {
  if (!(model.config() == ckpt.config)) {
    throw Error("checkpoint-mismatch", "checkpoint model config differs from target model");
  }
  for (auto* p : model.parameters()) {
    const NamedTensor* t = ckpt.find(p->name);
    if (t == nullptr) throw Error("checkpoint-mismatch", "checkpoint lacks tensor " + p->name);
    if (t->shape != p->shape) {
      throw Error("checkpoint-mismatch", "tensor " + p->name + " has shape " +
                                             shape_string(t->shape) + ", model expects " +
                                             shape_string(p->shape));
    }
    p->value = t->values;
  }
}

Transformer<float> model_from_checkpoint(const Checkpoint& ckpt) {
  Transformer<float> model(ckpt.config, 0);
  restore_model(model, ckpt);
  return model;
}

}  // namespace robunmt
