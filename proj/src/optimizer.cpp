#include "robunmt/optimizer.hpp"

#include <cmath>

#include "robunmt/error.hpp"

namespace robunmt {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw Error("invalid-config", "lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw Error("invalid-config", "beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw Error("invalid-config", "beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw Error("invalid-config", "adam eps must be positive");
}

template <typename T>
double global_grad_norm(const std::vector<Parameter<T>*>& params) {
  double total = 0.0;
  for (const auto* p : params) {
    for (T g : p->grad) total += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(total);
}

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), T(0));
    v_.emplace_back(p->size(), T(0));
  }
}

template <typename T>
double Adam<T>::step() {
  const double norm = global_grad_norm(params_);
  double clip = 1.0;
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) clip = config_.clip_norm / norm;
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const T step_size = static_cast<T>(config_.lr * std::sqrt(correction2) / correction1);
  const T eps_hat = static_cast<T>(config_.eps * std::sqrt(correction2));
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2), tclip = static_cast<T>(clip);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<T>& p = *params_[i];
    if (p.grad.empty()) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const T g = p.grad[j] * tclip;
      m[j] = tb1 * m[j] + (T(1) - tb1) * g;
      v[j] = tb2 * v[j] + (T(1) - tb2) * g * g;
      p.value[j] -= step_size * m[j] / (std::sqrt(v[j]) + eps_hat);
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double global_grad_norm<float>(const std::vector<Parameter<float>*>&);
template double global_grad_norm<double>(const std::vector<Parameter<double>*>&);

}  // namespace robunmt
