#pragma once

// Tape-based reverse-mode automatic differentiation over dense row-major
// arrays. A Graph records one forward pass; backward() replays the tape in
// reverse and pushes gradients into the Parameters that fed it.

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace robunmt {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// A trainable array that outlives any single graph.
template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on first accumulation

  Parameter() = default;
  Parameter(std::string name_, Shape shape_)
      : name(std::move(name_)), shape(std::move(shape_)), value(numel(shape), T(0)) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.assign(value.size(), T(0)); }
};

enum class OpKind {
  input,
  parameter,
  matmul,
  add,
  add_row,
  mul,
  scale,
  gelu,
  softmax,
  layer_norm,
  gather,
  attention,
  cross_entropy,
  sum,
};

const char* op_name(OpKind kind);

// One recorded value in the graph: the array, its gradient buffer and the
// operation that produced it.
template <typename T>
struct DiffArray {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  OpKind op = OpKind::input;

  std::size_t size() const { return values.size(); }
};

// Handle to a node of a Graph.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const { return id != npos; }
};

// Geometry of a batched multi-head scaled dot-product attention. Queries and
// keys are laid out as (batch * len) x d_model rows.
struct AttentionSpec {
  std::size_t batch = 0;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::size_t heads = 1;
  std::vector<std::size_t> key_lengths;  // keys at index >= key_lengths[b] are masked
  bool causal = false;
};

enum class GradMode { record, off };

template <typename T>
class Graph {
 public:
  explicit Graph(GradMode mode = GradMode::record) : mode_(mode) {}

  Var input(Shape shape, std::vector<T> values, bool requires_grad = false);
  Var parameter(Parameter<T>& param);

  // (m x k) * (k x n), or (m x k) * (n x k)^T when transpose_b.
  Var matmul(Var a, Var b, bool transpose_b = false);
  Var add(Var a, Var b);
  // Adds a length-n bias to every row of an (m x n) array.
  Var add_row(Var a, Var bias);
  Var mul(Var a, Var b);
  Var scale(Var a, T factor);
  Var gelu(Var a);
  // Softmax over the last dimension.
  Var softmax(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5));
  // Rows of `table` selected by ids; output is ids.size() x cols.
  Var gather(Var table, std::span<const int> ids);
  Var attention(Var q, Var k, Var v, const AttentionSpec& spec);
  // Mean negative log-likelihood of `targets` under row-wise softmax of
  // logits. Negative targets are ignored.
  Var cross_entropy(Var logits, std::span<const int> targets);
  Var sum(Var a);

  // Fills gradients for every node reachable from a scalar loss and adds
  // parameter gradients into the bound Parameter::grad buffers.
  void backward(Var loss);

  const DiffArray<T>& operator[](Var v) const;
  std::span<const T> values(Var v) const { return (*this)[v].values; }
  // Gradient of the last backward() with respect to v (zeros if none flowed).
  std::vector<T> grad(Var v) const;
  T scalar(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }
  std::size_t backward_visits() const { return backward_visits_; }
  GradMode mode() const { return mode_; }

 private:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Var push(DiffArray<T> node, BackwardFn fn);
  DiffArray<T>& at(Var v);
  std::vector<T>& grad_buffer(std::size_t id);
  bool any_requires(std::initializer_list<Var> vars) const;

  GradMode mode_;
  std::vector<DiffArray<T>> nodes_;
  std::vector<BackwardFn> backward_fns_;
  std::vector<std::pair<std::size_t, Parameter<T>*>> bound_params_;
  bool backward_done_ = false;
  std::size_t backward_visits_ = 0;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace robunmt
