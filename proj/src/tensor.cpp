#include "robunmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "robunmt/error.hpp"
#include "robunmt/kernels.hpp"

namespace robunmt {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::add_row: return "add_row";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::gelu: return "gelu";
    case OpKind::softmax: return "softmax";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::gather: return "gather";
    case OpKind::attention: return "attention";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::sum: return "sum";
  }
  return "unknown";
}

namespace {

[[noreturn]] void shape_error(OpKind op, const std::string& detail) {
  throw Error("shape-mismatch", std::string(op_name(op)) + ": " + detail);
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

bool is_matrix(const Shape& s) { return s.size() == 2; }

}  // namespace

template <typename T>
Var Graph<T>::push(DiffArray<T> node, BackwardFn fn) {
  if (backward_done_) {
    throw Error("graph-consumed", "cannot record into a graph after backward()");
  }
  nodes_.push_back(std::move(node));
  backward_fns_.push_back(std::move(fn));
  return Var{nodes_.size() - 1};
}

template <typename T>
DiffArray<T>& Graph<T>::at(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw Error("invalid-var", "variable not in graph");
  return nodes_[v.id];
}

template <typename T>
const DiffArray<T>& Graph<T>::operator[](Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw Error("invalid-var", "variable not in graph");
  return nodes_[v.id];
}

template <typename T>
std::vector<T>& Graph<T>::grad_buffer(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad.assign(node.values.size(), T(0));
  return node.grad;
}

template <typename T>
bool Graph<T>::any_requires(std::initializer_list<Var> vars) const {
  if (mode_ == GradMode::off) return false;
  for (Var v : vars) {
    if (nodes_[v.id].requires_grad) return true;
  }
  return false;
}

template <typename T>
std::vector<T> Graph<T>::grad(Var v) const {
  const auto& node = (*this)[v];
  if (node.grad.empty()) return std::vector<T>(node.values.size(), T(0));
  return node.grad;
}

template <typename T>
T Graph<T>::scalar(Var v) const {
  const auto& node = (*this)[v];
  if (node.values.size() != 1) {
    throw Error("shape-mismatch", "scalar(): node has shape " + shape_string(node.shape));
  }
  return node.values[0];
}

template <typename T>
Var Graph<T>::input(Shape shape, std::vector<T> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    shape_error(OpKind::input, "shape " + shape_string(shape) + " but " +
                                   std::to_string(values.size()) + " values");
  }
  DiffArray<T> node{std::move(shape), std::move(values), {},
                    requires_grad && mode_ == GradMode::record, OpKind::input};
  return push(std::move(node), nullptr);
}

template <typename T>
Var Graph<T>::parameter(Parameter<T>& param) {
  const bool track = mode_ == GradMode::record;
  DiffArray<T> node{param.shape, param.value, {}, track, OpKind::parameter};
  Var v = push(std::move(node), nullptr);
  if (track) bound_params_.emplace_back(v.id, &param);
  return v;
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b, bool transpose_b) {
  const Shape& sa = (*this)[a].shape;
  const Shape& sb = (*this)[b].shape;
  if (!is_matrix(sa) || !is_matrix(sb)) {
    shape_error(OpKind::matmul, shape_string(sa) + " x " + shape_string(sb));
  }
  const std::size_t m = sa[0], k = sa[1];
  const std::size_t kb = transpose_b ? sb[1] : sb[0];
  const std::size_t n = transpose_b ? sb[0] : sb[1];
  if (k != kb) {
    shape_error(OpKind::matmul, shape_string(sa) + " x " + shape_string(sb) +
                                    (transpose_b ? "^T" : ""));
  }
  DiffArray<T> out{{m, n}, std::vector<T>(m * n), {}, any_requires({a, b}), OpKind::matmul};
  kernels::gemm(m, n, k, nodes_[a.id].values.data(), false, nodes_[b.id].values.data(),
                transpose_b, out.values.data(), T(0));
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [ia = a.id, ib = b.id, m, n, k, transpose_b](Graph& g, std::size_t self) {
      const T* dc = g.nodes_[self].grad.data();
      if (g.nodes_[ia].requires_grad) {
        auto& da = g.grad_buffer(ia);
        // dA = dC * op(B)^T
        kernels::gemm(m, k, n, dc, false, g.nodes_[ib].values.data(), !transpose_b, da.data(),
                      T(1));
      }
      if (g.nodes_[ib].requires_grad) {
        auto& db = g.grad_buffer(ib);
        if (transpose_b) {
          kernels::gemm(n, k, m, dc, true, g.nodes_[ia].values.data(), false, db.data(), T(1));
        } else {
          kernels::gemm(k, n, m, g.nodes_[ia].values.data(), true, dc, false, db.data(), T(1));
        }
      }
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const auto& na = (*this)[a];
  const auto& nb = (*this)[b];
  if (na.shape != nb.shape) {
    shape_error(OpKind::add, shape_string(na.shape) + " + " + shape_string(nb.shape));
  }
  DiffArray<T> out{na.shape, na.values, {}, any_requires({a, b}), OpKind::add};
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += nb.values[i];
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [ia = a.id, ib = b.id](Graph& g, std::size_t self) {
      const auto& dy = g.nodes_[self].grad;
      for (std::size_t id : {ia, ib}) {
        if (!g.nodes_[id].requires_grad) continue;
        auto& dx = g.grad_buffer(id);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      }
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::add_row(Var a, Var bias) {
  const auto& na = (*this)[a];
  const auto& nb = (*this)[bias];
  const std::size_t n = last_dim(na.shape);
  if (!is_matrix(na.shape) || nb.values.size() != n) {
    shape_error(OpKind::add_row, shape_string(na.shape) + " + row " + shape_string(nb.shape));
  }
  DiffArray<T> out{na.shape, na.values, {}, any_requires({a, bias}), OpKind::add_row};
  const std::size_t rows = out.values.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < n; ++c) out.values[r * n + c] += nb.values[c];
  }
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [ia = a.id, ib = bias.id, rows, n](Graph& g, std::size_t self) {
      const auto& dy = g.nodes_[self].grad;
      if (g.nodes_[ia].requires_grad) {
        auto& dx = g.grad_buffer(ia);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      }
      if (g.nodes_[ib].requires_grad) {
        auto& db = g.grad_buffer(ib);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < n; ++c) db[c] += dy[r * n + c];
        }
      }
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  const auto& na = (*this)[a];
  const auto& nb = (*this)[b];
  if (na.shape != nb.shape) {
    shape_error(OpKind::mul, shape_string(na.shape) + " * " + shape_string(nb.shape));
  }
  DiffArray<T> out{na.shape, na.values, {}, any_requires({a, b}), OpKind::mul};
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= nb.values[i];
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [ia = a.id, ib = b.id](Graph& g, std::size_t self) {
      const auto& dy = g.nodes_[self].grad;
      if (g.nodes_[ia].requires_grad) {
        auto& dx = g.grad_buffer(ia);
        const auto& other = g.nodes_[ib].values;
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * other[i];
      }
      if (g.nodes_[ib].requires_grad) {
        auto& dx = g.grad_buffer(ib);
        const auto& other = g.nodes_[ia].values;
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * other[i];
      }
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::scale(Var a, T factor) {
  const auto& na = (*this)[a];
  DiffArray<T> out{na.shape, na.values, {}, any_requires({a}), OpKind::scale};
  for (T& v : out.values) v *= factor;
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [ia = a.id, factor](Graph& g, std::size_t self) {
      const auto& dy = g.nodes_[self].grad;
      auto& dx = g.grad_buffer(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::gelu(Var a) {
  const auto& na = (*this)[a];
  DiffArray<T> out{na.shape, na.values, {}, any_requires({a}), OpKind::gelu};
  for (T& v : out.values) v = kernels::gelu(v);
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [ia = a.id](Graph& g, std::size_t self) {
      const auto& dy = g.nodes_[self].grad;
      const auto& x = g.nodes_[ia].values;
      auto& dx = g.grad_buffer(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * kernels::gelu_derivative(x[i]);
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::softmax(Var a) {
  const auto& na = (*this)[a];
  const std::size_t n = last_dim(na.shape);
  if (n == 0) shape_error(OpKind::softmax, "empty last dimension");
  DiffArray<T> out{na.shape, na.values, {}, any_requires({a}), OpKind::softmax};
  const std::size_t rows = out.values.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::softmax_row(std::span<T>(out.values.data() + r * n, n));
  }
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [ia = a.id, rows, n](Graph& g, std::size_t self) {
      const auto& dy = g.nodes_[self].grad;
      const auto& y = g.nodes_[self].values;
      auto& dx = g.grad_buffer(ia);
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::size_t c = 0; c < n; ++c) dot += dy[r * n + c] * y[r * n + c];
        for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += y[r * n + c] * (dy[r * n + c] - dot);
      }
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::layer_norm(Var x, Var gamma, Var beta, T eps) {
  const auto& nx = (*this)[x];
  const std::size_t n = last_dim(nx.shape);
  if (!is_matrix(nx.shape) || (*this)[gamma].values.size() != n ||
      (*this)[beta].values.size() != n) {
    shape_error(OpKind::layer_norm, shape_string(nx.shape) + " with gamma " +
                                        shape_string((*this)[gamma].shape) + " beta " +
                                        shape_string((*this)[beta].shape));
  }
  const std::size_t rows = nx.values.size() / n;
  DiffArray<T> out{nx.shape, std::vector<T>(nx.values.size()), {}, any_requires({x, gamma, beta}),
                   OpKind::layer_norm};
  std::vector<T> xhat;
  std::vector<T> inv_std;
  if (out.requires_grad) {
    xhat.resize(nx.values.size());
    inv_std.resize(rows);
  }
  kernels::layer_norm(rows, n, nx.values.data(), (*this)[gamma].values.data(),
                      (*this)[beta].values.data(), eps, out.values.data(),
                      xhat.empty() ? nullptr : xhat.data(),
                      inv_std.empty() ? nullptr : inv_std.data());
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [ix = x.id, ig = gamma.id, ib = beta.id, rows, n, xhat = std::move(xhat),
          inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
      const auto& dy = g.nodes_[self].grad;
      const auto& gam = g.nodes_[ig].values;
      if (g.nodes_[ig].requires_grad) {
        auto& dg = g.grad_buffer(ig);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < n; ++c) dg[c] += dy[r * n + c] * xhat[r * n + c];
      }
      if (g.nodes_[ib].requires_grad) {
        auto& db = g.grad_buffer(ib);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < n; ++c) db[c] += dy[r * n + c];
      }
      if (g.nodes_[ix].requires_grad) {
        auto& dx = g.grad_buffer(ix);
        const T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_dxhat = 0;
          T mean_dxhat_xhat = 0;
          for (std::size_t c = 0; c < n; ++c) {
            const T d = dy[r * n + c] * gam[c];
            mean_dxhat += d;
            mean_dxhat_xhat += d * xhat[r * n + c];
          }
          mean_dxhat *= inv_n;
          mean_dxhat_xhat *= inv_n;
          for (std::size_t c = 0; c < n; ++c) {
            const T d = dy[r * n + c] * gam[c];
            dx[r * n + c] +=
                inv_std[r] * (d - mean_dxhat - xhat[r * n + c] * mean_dxhat_xhat);
          }
        }
      }
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::gather(Var table, std::span<const int> ids) {
  const auto& nt = (*this)[table];
  if (!is_matrix(nt.shape)) shape_error(OpKind::gather, "table " + shape_string(nt.shape));
  const std::size_t rows = nt.shape[0];
  const std::size_t n = nt.shape[1];
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      shape_error(OpKind::gather, "index " + std::to_string(id) + " outside table " +
                                      shape_string(nt.shape));
    }
  }
  DiffArray<T> out{{ids.size(), n}, std::vector<T>(ids.size() * n), {}, any_requires({table}),
                   OpKind::gather};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(nt.values.begin() + static_cast<std::ptrdiff_t>(ids[i] * n), n,
                out.values.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [it = table.id, idx = std::vector<int>(ids.begin(), ids.end()), n](Graph& g,
                                                                             std::size_t self) {
      const auto& dy = g.nodes_[self].grad;
      auto& dt = g.grad_buffer(it);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const std::size_t base = static_cast<std::size_t>(idx[i]) * n;
        for (std::size_t c = 0; c < n; ++c) dt[base + c] += dy[i * n + c];
      }
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::attention(Var q, Var k, Var v, const AttentionSpec& spec) {
  const auto& nq = (*this)[q];
  const auto& nk = (*this)[k];
  const auto& nv = (*this)[v];
  const std::size_t d = last_dim(nq.shape);
  const std::size_t B = spec.batch, Lq = spec.query_len, Lk = spec.key_len, H = spec.heads;
  if (!is_matrix(nq.shape) || nq.shape[0] != B * Lq || nk.shape != Shape{B * Lk, d} ||
      nv.shape != Shape{B * Lk, d} || H == 0 || d % H != 0 || spec.key_lengths.size() != B) {
    shape_error(OpKind::attention, "q " + shape_string(nq.shape) + " k " +
                                       shape_string(nk.shape) + " v " + shape_string(nv.shape) +
                                       " batch " + std::to_string(B) + " heads " +
                                       std::to_string(H));
  }
  const std::size_t dh = d / H;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
  DiffArray<T> out{{B * Lq, d}, std::vector<T>(B * Lq * d, T(0)), {}, any_requires({q, k, v}),
                   OpKind::attention};
  // probs[((b*H + h)*Lq + i)*Lk + j]
  std::vector<T> probs(B * H * Lq * Lk, T(0));
  const T* Q = nq.values.data();
  const T* K = nk.values.data();
  const T* V = nv.values.data();
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t klen = std::min(spec.key_lengths[b], Lk);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < Lq; ++i) {
        const std::size_t visible = spec.causal ? std::min(klen, i + 1) : klen;
        if (visible == 0) continue;
        T* p = probs.data() + ((b * H + h) * Lq + i) * Lk;
        const T* qi = Q + (b * Lq + i) * d + h * dh;
        for (std::size_t j = 0; j < visible; ++j) {
          const T* kj = K + (b * Lk + j) * d + h * dh;
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          p[j] = s * inv_scale;
        }
        kernels::softmax_row(std::span<T>(p, visible));
        T* oi = out.values.data() + (b * Lq + i) * d + h * dh;
        for (std::size_t j = 0; j < visible; ++j) {
          const T* vj = V + (b * Lk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [iq = q.id, ik = k.id, iv = v.id, B, Lq, Lk, H, d, dh, inv_scale,
          key_lengths = spec.key_lengths, causal = spec.causal,
          probs = std::move(probs)](Graph& g, std::size_t self) {
      const auto& dO = g.nodes_[self].grad;
      const T* Qv = g.nodes_[iq].values.data();
      const T* Kv = g.nodes_[ik].values.data();
      const T* Vv = g.nodes_[iv].values.data();
      const bool need_q = g.nodes_[iq].requires_grad;
      const bool need_k = g.nodes_[ik].requires_grad;
      const bool need_v = g.nodes_[iv].requires_grad;
      T* dQ = need_q ? g.grad_buffer(iq).data() : nullptr;
      T* dK = need_k ? g.grad_buffer(ik).data() : nullptr;
      T* dV = need_v ? g.grad_buffer(iv).data() : nullptr;
      std::vector<T> dS(Lk);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t klen = std::min(key_lengths[b], Lk);
        for (std::size_t h = 0; h < H; ++h) {
          for (std::size_t i = 0; i < Lq; ++i) {
            const std::size_t visible = causal ? std::min(klen, i + 1) : klen;
            if (visible == 0) continue;
            const T* p = probs.data() + ((b * H + h) * Lq + i) * Lk;
            const T* doi = dO.data() + (b * Lq + i) * d + h * dh;
            T weighted = 0;
            for (std::size_t j = 0; j < visible; ++j) {
              const T* vj = Vv + (b * Lk + j) * d + h * dh;
              T dp = 0;
              for (std::size_t c = 0; c < dh; ++c) dp += doi[c] * vj[c];
              dS[j] = dp;
              weighted += dp * p[j];
              if (dV != nullptr) {
                T* dvj = dV + (b * Lk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dvj[c] += p[j] * doi[c];
              }
            }
            const T* qi = Qv + (b * Lq + i) * d + h * dh;
            T* dqi = dQ != nullptr ? dQ + (b * Lq + i) * d + h * dh : nullptr;
            for (std::size_t j = 0; j < visible; ++j) {
              const T ds = p[j] * (dS[j] - weighted) * inv_scale;
              if (ds == T(0)) continue;
              const T* kj = Kv + (b * Lk + j) * d + h * dh;
              if (dqi != nullptr) {
                for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
              }
              if (dK != nullptr) {
                T* dkj = dK + (b * Lk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
              }
            }
          }
        }
      }
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::cross_entropy(Var logits, std::span<const int> targets) {
  const auto& nl = (*this)[logits];
  if (!is_matrix(nl.shape) || nl.shape[0] != targets.size()) {
    shape_error(OpKind::cross_entropy, "logits " + shape_string(nl.shape) + " with " +
                                           std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = nl.shape[0];
  const std::size_t n = nl.shape[1];
  std::size_t count = 0;
  for (int t : targets) {
    if (t < 0) continue;
    if (static_cast<std::size_t>(t) >= n) {
      shape_error(OpKind::cross_entropy, "target " + std::to_string(t) + " outside " +
                                             std::to_string(n) + " classes");
    }
    ++count;
  }
  if (count == 0) throw Error("empty-target", "cross_entropy: no non-ignored targets");
  std::vector<T> probs(nl.values);
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0) continue;
    std::span<T> row(probs.data() + r * n, n);
    kernels::softmax_row(row);
    // log p computed from the logits for accuracy at p -> 0
    const T* lr = nl.values.data() + r * n;
    const T peak = *std::max_element(lr, lr + n);
    T z = 0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(lr[c] - peak);
    total += (std::log(z) + peak) - lr[targets[r]];
  }
  const T inv_count = T(1) / static_cast<T>(count);
  DiffArray<T> out{{1}, {total * inv_count}, {}, any_requires({logits}), OpKind::cross_entropy};
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [il = logits.id, tgt = std::vector<int>(targets.begin(), targets.end()), rows, n,
          inv_count, probs = std::move(probs)](Graph& g, std::size_t self) {
      const T dl = g.nodes_[self].grad[0] * inv_count;
      auto& dx = g.grad_buffer(il);
      for (std::size_t r = 0; r < rows; ++r) {
        if (tgt[r] < 0) continue;
        for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += dl * probs[r * n + c];
        dx[r * n + static_cast<std::size_t>(tgt[r])] -= dl;
      }
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
Var Graph<T>::sum(Var a) {
  const auto& na = (*this)[a];
  T total = 0;
  for (T v : na.values) total += v;
  DiffArray<T> out{{1}, {total}, {}, any_requires({a}), OpKind::sum};
  BackwardFn fn;
  if (out.requires_grad) {
    fn = [ia = a.id](Graph& g, std::size_t self) {
      const T dy = g.nodes_[self].grad[0];
      auto& dx = g.grad_buffer(ia);
      for (T& v : dx) v += dy;
    };
  }
  return push(std::move(out), std::move(fn));
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (nodes_.empty()) throw Error("empty-graph", "backward() on an empty graph");
  if (backward_done_) throw Error("graph-consumed", "backward() already ran on this graph");
  auto& root = at(loss);
  if (root.values.size() != 1) {
    throw Error("non-scalar-loss", "backward() needs a scalar loss, got shape " +
                                       shape_string(root.shape));
  }
  backward_done_ = true;
  if (!root.requires_grad) return;
  grad_buffer(loss.id)[0] = T(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty() || !backward_fns_[id]) continue;
    ++backward_visits_;
    backward_fns_[id](*this, id);
  }
  for (auto& [id, param] : bound_params_) {
    const auto& g = nodes_[id].grad;
    if (g.empty()) continue;
    if (param->grad.size() != g.size()) param->grad.assign(g.size(), T(0));
    for (std::size_t i = 0; i < g.size(); ++i) param->grad[i] += g[i];
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace robunmt
