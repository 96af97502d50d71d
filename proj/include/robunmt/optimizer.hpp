#pragma once

#include <cstddef>
#include <vector>

#include "robunmt/tensor.hpp"

namespace robunmt {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables

  void validate() const;
};

// Adam with bias correction and global-norm gradient clipping. Moments are
// kept per parameter in the order the parameters were given.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamConfig config);

  // Applies one update from the accumulated Parameter::grad buffers and
  // returns the pre-clip global gradient norm. Gradients are left intact.
  double step();

  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_steps(std::size_t steps) { steps_ = steps; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::size_t steps_ = 0;
};

// sqrt of the sum of squares of every gradient entry.
template <typename T>
double global_grad_norm(const std::vector<Parameter<T>*>& params);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace robunmt
