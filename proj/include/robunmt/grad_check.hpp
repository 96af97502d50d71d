#pragma once

// Central finite-difference validation of the analytic gradients produced by
// Graph::backward().

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "robunmt/tensor.hpp"

namespace robunmt {

struct GradCheckOptions {
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor),
  // so coordinates whose true gradient is far below unit scale are compared
  // absolutely instead of amplifying finite-difference round-off.
  double floor = 1e-3;
  // Coordinates to probe; empty means every coordinate.
  std::vector<std::size_t> coordinates;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coordinates_checked = 0;
};

template <typename T>
using GraphBuilder = std::function<Var(Graph<T>&, Var)>;

// Checks d f / d point where f is a scalar graph built on top of `point`.
template <typename T>
GradCheckReport grad_check(const GraphBuilder<T>& f, const Shape& shape, std::span<const T> point,
                           T h, const GradCheckOptions& options = {});

// Checks d loss / d param for a loss that reads `param` through
// Graph::parameter(). The parameter is perturbed in place and restored.
template <typename T>
GradCheckReport grad_check_parameter(const std::function<Var(Graph<T>&)>& loss,
                                     Parameter<T>& param, T h,
                                     const GradCheckOptions& options = {});

}  // namespace robunmt
