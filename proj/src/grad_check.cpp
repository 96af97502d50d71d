#include "robunmt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "robunmt/error.hpp"

namespace robunmt {

namespace {

template <typename T>
void require_finite(T value, std::size_t coordinate, const char* where) {
  if (!std::isfinite(static_cast<double>(value))) {
    throw Error("non-finite", std::string("grad_check: non-finite ") + where + " at coordinate " +
                                  std::to_string(coordinate));
  }
}

std::vector<std::size_t> probe_set(const GradCheckOptions& options, std::size_t n) {
  if (!options.coordinates.empty()) {
    for (std::size_t c : options.coordinates) {
      if (c >= n) throw Error("invalid-argument", "grad_check: coordinate out of range");
    }
    return options.coordinates;
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

template <typename T>
void check_step(T h) {
  if (!(h > T(0)) || !std::isfinite(static_cast<double>(h))) {
    throw Error("invalid-argument", "grad_check: step h must be positive and finite");
  }
}

void record(GradCheckReport& report, std::size_t coordinate, double analytic, double numeric,
            double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  const double rel = std::abs(analytic - numeric) / denom;
  if (report.coordinates_checked == 0 || rel > report.max_relative_error) {
    report.max_relative_error = rel;
    report.worst_coordinate = coordinate;
    report.analytic_at_worst = analytic;
    report.numeric_at_worst = numeric;
  }
  ++report.coordinates_checked;
}

}  // namespace

template <typename T>
GradCheckReport grad_check(const GraphBuilder<T>& f, const Shape& shape, std::span<const T> point,
                           T h, const GradCheckOptions& options) {
  check_step(h);
  std::vector<T> x(point.begin(), point.end());
  if (numel(shape) != x.size()) throw Error("shape-mismatch", "grad_check: point/shape mismatch");

  Graph<T> graph;
  Var in = graph.input(shape, x, true);
  Var loss = f(graph, in);
  require_finite(graph.scalar(loss), 0, "loss");
  graph.backward(loss);
  const std::vector<T> analytic = graph.grad(in);

  auto eval = [&](const std::vector<T>& at) {
    Graph<T> g(GradMode::off);
    return g.scalar(f(g, g.input(shape, at)));
  };

  GradCheckReport report;
  for (std::size_t c : probe_set(options, x.size())) {
    require_finite(analytic[c], c, "analytic gradient");
    const T saved = x[c];
    x[c] = saved + h;
    const T up = eval(x);
    x[c] = saved - h;
    const T down = eval(x);
    x[c] = saved;
    require_finite(up, c, "loss");
    require_finite(down, c, "loss");
    const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * h);
    record(report, c, analytic[c], numeric, options.floor);
  }
  return report;
}

template <typename T>
GradCheckReport grad_check_parameter(const std::function<Var(Graph<T>&)>& loss,
                                     Parameter<T>& param, T h, const GradCheckOptions& options) {
  check_step(h);
  const std::vector<T> saved_grad = param.grad;
  param.zero_grad();
  {
    Graph<T> graph;
    Var l = loss(graph);
    require_finite(graph.scalar(l), 0, "loss");
    graph.backward(l);
  }
  const std::vector<T> analytic = param.grad;
  param.grad = saved_grad;

  auto eval = [&]() {
    Graph<T> g(GradMode::off);
    return g.scalar(loss(g));
  };

  GradCheckReport report;
  for (std::size_t c : probe_set(options, param.value.size())) {
    require_finite(analytic[c], c, "analytic gradient");
    const T saved = param.value[c];
    param.value[c] = saved + h;
    const T up = eval();
    param.value[c] = saved - h;
    const T down = eval();
    param.value[c] = saved;
    require_finite(up, c, "loss");
    require_finite(down, c, "loss");
    const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * h);
    record(report, c, analytic[c], numeric, options.floor);
  }
  return report;
}

template GradCheckReport grad_check<float>(const GraphBuilder<float>&, const Shape&,
                                           std::span<const float>, float,
                                           const GradCheckOptions&);
template GradCheckReport grad_check<double>(const GraphBuilder<double>&, const Shape&,
                                            std::span<const double>, double,
                                            const GradCheckOptions&);
template GradCheckReport grad_check_parameter<float>(const std::function<Var(Graph<float>&)>&,
                                                     Parameter<float>&, float,
                                                     const GradCheckOptions&);
template GradCheckReport grad_check_parameter<double>(const std::function<Var(Graph<double>&)>&,
                                                      Parameter<double>&, double,
                                                      const GradCheckOptions&);

}  // namespace robunmt
