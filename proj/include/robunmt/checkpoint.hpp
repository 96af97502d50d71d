#pragma once

// Checkpoint file layout (text header, then raw little-endian float32 data):
//
//   robunmt-checkpoint 1
//   [config]            key=value lines of ModelConfig
//   [state]             key=value lines (training state; may be empty)
//   [vocab] <n>         n content tokens, one per line, in id order
//   [tensors] <m>       m lines: <name> f32 <rank> <dim>...
//   [data]              tensors back to back in manifest order
//
// Loading restores every byte of every tensor, so save -> load is bit-exact.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "robunmt/model.hpp"
#include "robunmt/vocab.hpp"

namespace robunmt {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  ModelConfig config;
  Vocabulary vocab;
  std::vector<NamedTensor> tensors;
  std::map<std::string, std::string> state;

  const NamedTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws Error with category checkpoint-not-found or checkpoint-corrupt.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model parameters <-> checkpoint tensors (matched by name and shape).
Checkpoint capture_model(const Transformer<float>& model, const Vocabulary& vocab);
void restore_model(Transformer<float>& model, const Checkpoint& ckpt);
Transformer<float> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace robunmt
