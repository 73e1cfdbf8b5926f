#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "avsa/error.hpp"

namespace avsa {

// Reverse-mode tape. Nodes are created in forward order and replayed in
// reverse creation order, so every node's gradient is complete before its
// backward fires. Graph construction and backward are single-threaded;
// kernels may parallelize over independent outputs, which keeps results
// bit-identical for any thread count.

template <typename T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  uint64_t order = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

namespace detail {
inline uint64_t next_node_order() {
  static uint64_t counter = 0;
  return ++counter;
}
}  // namespace detail

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(std::vector<int> shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    size_t total = 1;
    for (int d : shape) total *= static_cast<size_t>(d);
    n->shape = std::move(shape);
    n->value.assign(total, T(0));
    n->requires_grad = requires_grad;
    n->order = detail::next_node_order();
    return Tensor(std::move(n));
  }

  static Tensor from_vector(std::vector<int> shape, const std::vector<T>& data,
                            bool requires_grad = false) {
    Tensor t = leaf(std::move(shape), requires_grad);
    if (data.size() != t.numel()) throw ShapeError("Tensor::from_vector: size mismatch");
    t.node()->value = data;
    return t;
  }

  static Tensor scalar(T v) { return from_vector({1}, {v}); }

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int>& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  size_t numel() const { return n_->numel(); }
  std::vector<T>& value() { return n_->value; }
  const std::vector<T>& value() const { return n_->value; }
  std::vector<T>& grad() { n_->ensure_grad(); return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }
  T item() const {
    if (numel() != 1) throw ShapeError("Tensor::item: not a scalar");
    return n_->value[0];
  }

  void zero_grad() { n_->grad.assign(n_->value.size(), T(0)); }

  // Backward from a scalar output. Touches each reachable node exactly once.
  void backward() const {
    if (numel() != 1) throw ShapeError("Tensor::backward: output must be scalar");
    std::vector<std::shared_ptr<Node<T>>> nodes;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::shared_ptr<Node<T>>> stack{n_};
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      nodes.push_back(cur);
      for (auto& p : cur->parents)
        if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const auto& a, const auto& b) { return a->order > b->order; });
    n_->ensure_grad();
    n_->grad[0] = T(1);
    for (auto& node : nodes)
      if (node->backward) {
        node->ensure_grad();
        node->backward(*node);
      }
  }

  std::shared_ptr<Node<T>>& node() { return n_; }
  const std::shared_ptr<Node<T>>& node() const { return n_; }

 private:
  explicit Tensor(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}
  template <typename U>
  friend Tensor<U> make_op(std::vector<int> shape, std::vector<Tensor<U>> parents,
                           std::function<void(Node<U>&)> backward);
  std::shared_ptr<Node<T>> n_;
};

template <typename T>
Tensor<T> make_op(std::vector<int> shape, std::vector<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  size_t total = 1;
  for (int d : shape) total *= static_cast<size_t>(d);
  n->shape = std::move(shape);
  n->value.assign(total, T(0));
  n->order = detail::next_node_order();
  for (auto& p : parents) {
    if (p.node()->requires_grad) n->requires_grad = true;
    n->parents.push_back(p.node());
  }
  if (n->requires_grad) n->backward = std::move(backward);
  return Tensor<T>(std::move(n));
}

// ---------------------------------------------------------------------------
// plain GEMM kernels (no tape); row-major
// ---------------------------------------------------------------------------

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(int m, int k, int n, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static) if (m >= 8)
  for (int i = 0; i < m; ++i) {
    T* __restrict crow = c + static_cast<size_t>(i) * n;
    const T* arow = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* __restrict brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(int m, int k, int n, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static) if (m >= 8)
  for (int i = 0; i < m; ++i) {
    const T* __restrict arow = a + static_cast<size_t>(i) * k;
    T* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* __restrict brow = b + static_cast<size_t>(j) * k;
      T acc = 0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <typename T>
void gemm_tn(int m, int k, int n, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static) if (k >= 8)
  for (int p = 0; p < k; ++p) {
    T* __restrict crow = c + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const T av = a[static_cast<size_t>(i) * k + p];
      const T* __restrict brow = b + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// ---------------------------------------------------------------------------
// elementwise and linear ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = make_op<T>(a.shape(), {a, b}, [an, bn](Node<T>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
    }
  });
  for (size_t i = 0; i < out.numel(); ++i)
    out.value()[i] = an->value[i] + bn->value[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("sub: shape mismatch");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = make_op<T>(a.shape(), {a, b}, [an, bn](Node<T>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
    }
  });
  for (size_t i = 0; i < out.numel(); ++i)
    out.value()[i] = an->value[i] - bn->value[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mul: shape mismatch");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = make_op<T>(a.shape(), {a, b}, [an, bn](Node<T>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        an->grad[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
  for (size_t i = 0; i < out.numel(); ++i)
    out.value()[i] = an->value[i] * bn->value[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  auto an = a.node();
  Tensor<T> out = make_op<T>(a.shape(), {a}, [an, c](Node<T>& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
  });
  for (size_t i = 0; i < out.numel(); ++i) out.value()[i] = c * an->value[i];
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  auto an = a.node();
  Tensor<T> out = make_op<T>(a.shape(), {a}, [an](Node<T>& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (an->value[i] > T(0)) an->grad[i] += self.grad[i];
  });
  for (size_t i = 0; i < out.numel(); ++i)
    out.value()[i] = an->value[i] > T(0) ? an->value[i] : T(0);
  return out;
}

// y = x W, x: [m,k], w: [k,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& x, const Tensor<T>& w) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
    throw ShapeError("matmul: incompatible shapes");
  const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
  auto xn = x.node(), wn = w.node();
  Tensor<T> out = make_op<T>({m, n}, {x, w}, [xn, wn, m, k, n](Node<T>& self) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      gemm_nt(m, n, k, self.grad.data(), wn->value.data(), xn->grad.data());
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      gemm_tn(m, k, n, xn->value.data(), self.grad.data(), wn->grad.data());
    }
  });
  gemm_nn(m, k, n, xn->value.data(), wn->value.data(), out.value().data());
  return out;
}

// x: [r, c] plus a length-c bias on every row
template <typename T>
Tensor<T> add_rowwise(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
    throw ShapeError("add_rowwise: incompatible shapes");
  const int r = x.dim(0), c = x.dim(1);
  auto xn = x.node(), bn = bias.node();
  Tensor<T> out = make_op<T>(x.shape(), {x, bias}, [xn, bn, r, c](Node<T>& self) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          bn->grad[j] += self.grad[static_cast<size_t>(i) * c + j];
    }
  });
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.value()[static_cast<size_t>(i) * c + j] =
          xn->value[static_cast<size_t>(i) * c + j] + bn->value[j];
  return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> new_shape) {
  size_t total = 1;
  for (int d : new_shape) total *= static_cast<size_t>(d);
  if (total != x.numel()) throw ShapeError("reshape: element count mismatch");
  auto xn = x.node();
  Tensor<T> out = make_op<T>(std::move(new_shape), {x}, [xn](Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
  out.value() = xn->value;
  return out;
}

namespace detail {
inline std::vector<size_t> row_major_strides(const std::vector<int>& shape) {
  std::vector<size_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
    s[i] = s[i + 1] * static_cast<size_t>(shape[i + 1]);
  return s;
}
}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes) {
  if (axes.size() != static_cast<size_t>(x.rank())) throw ShapeError("permute: bad axes");
  const auto& in_shape = x.shape();
  std::vector<int> out_shape(axes.size());
  for (size_t i = 0; i < axes.size(); ++i) out_shape[i] = in_shape[axes[i]];
  const auto in_strides = detail::row_major_strides(in_shape);
  // stride of output index i in the input buffer
  std::vector<size_t> map_strides(axes.size());
  for (size_t i = 0; i < axes.size(); ++i) map_strides[i] = in_strides[axes[i]];
  auto xn = x.node();
  const size_t n = x.numel();
  // odometer walk: src is updated incrementally as output indices advance
  auto iterate = [out_shape, map_strides, n](auto&& fn) {
    const int rank = static_cast<int>(out_shape.size());
    std::vector<int> idx(rank, 0);
    size_t src = 0;
    for (size_t o = 0; o < n; ++o) {
      fn(o, src);
      for (int i = rank - 1; i >= 0; --i) {
        src += map_strides[i];
        if (++idx[i] < out_shape[i]) break;
        idx[i] = 0;
        src -= map_strides[i] * static_cast<size_t>(out_shape[i]);
      }
    }
  };
  Tensor<T> out = make_op<T>(out_shape, {x}, [xn, iterate](Node<T>& self) {
    xn->ensure_grad();
    iterate([&](size_t o, size_t src) { xn->grad[src] += self.grad[o]; });
  });
  iterate([&](size_t o, size_t src) { out.value()[o] = xn->value[src]; });
  return out;
}

// stack row vectors (each [d] or [1,d]) into [n, d]
template <typename T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty input");
  const size_t d = rows[0].numel();
  for (const auto& r : rows)
    if (r.numel() != d) throw ShapeError("stack_rows: row size mismatch");
  const int n = static_cast<int>(rows.size());
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& r : rows) parents.push_back(r.node());
  Tensor<T> out = make_op<T>({n, static_cast<int>(d)}, rows, [parents, d](Node<T>& self) {
    for (size_t i = 0; i < parents.size(); ++i) {
      if (!parents[i]->requires_grad) continue;
      parents[i]->ensure_grad();
      for (size_t j = 0; j < d; ++j)
        parents[i]->grad[j] += self.grad[i * d + j];
    }
  });
  for (size_t i = 0; i < parents.size(); ++i)
    for (size_t j = 0; j < d; ++j)
      out.value()[i * d + j] = parents[i]->value[j];
  return out;
}

// gather rows of [n, d] by index; backward scatter-adds
template <typename T>
Tensor<T> rows(const Tensor<T>& x, const std::vector<int>& idx) {
  if (x.rank() != 2) throw ShapeError("rows: expected a matrix");
  const int d = x.dim(1);
  for (int i : idx)
    if (i < 0 || i >= x.dim(0)) throw ShapeError("rows: index out of range");
  auto xn = x.node();
  auto indices = idx;
  Tensor<T> out = make_op<T>({static_cast<int>(idx.size()), d}, {x},
                             [xn, indices, d](Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < indices.size(); ++i)
      for (int j = 0; j < d; ++j)
        xn->grad[static_cast<size_t>(indices[i]) * d + j] +=
            self.grad[i * d + j];
  });
  for (size_t i = 0; i < indices.size(); ++i)
    for (int j = 0; j < d; ++j)
      out.value()[i * d + j] = xn->value[static_cast<size_t>(indices[i]) * d + j];
  return out;
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("concat_rows: column mismatch");
  const int d = a.dim(1);
  auto an = a.node(), bn = b.node();
  const size_t na = a.numel();
  Tensor<T> out = make_op<T>({a.dim(0) + b.dim(0), d}, {a, b}, [an, bn, na](Node<T>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < na; ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += self.grad[na + i];
    }
  });
  std::copy(an->value.begin(), an->value.end(), out.value().begin());
  std::copy(bn->value.begin(), bn->value.end(), out.value().begin() + na);
  return out;
}

// concat along the last axis for matrices: [n, da] ++ [n, db] -> [n, da+db]
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw ShapeError("concat_cols: row mismatch");
  const int n = a.dim(0), da = a.dim(1), db = b.dim(1);
  auto an = a.node(), bn = b.node();
  Tensor<T> out = make_op<T>({n, da + db}, {a, b}, [an, bn, n, da, db](Node<T>& self) {
    for (int i = 0; i < n; ++i) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (int j = 0; j < da; ++j)
          an->grad[static_cast<size_t>(i) * da + j] +=
              self.grad[static_cast<size_t>(i) * (da + db) + j];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int j = 0; j < db; ++j)
          bn->grad[static_cast<size_t>(i) * db + j] +=
              self.grad[static_cast<size_t>(i) * (da + db) + da + j];
      }
    }
  });
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < da; ++j)
      out.value()[static_cast<size_t>(i) * (da + db) + j] =
          an->value[static_cast<size_t>(i) * da + j];
    for (int j = 0; j < db; ++j)
      out.value()[static_cast<size_t>(i) * (da + db) + da + j] =
          bn->value[static_cast<size_t>(i) * db + j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions and normalizations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  auto xn = x.node();
  Tensor<T> out = make_op<T>({1}, {x}, [xn](Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self.grad[0];
  });
  T acc = 0;
  for (T v : xn->value) acc += v;
  out.value()[0] = acc;
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

// softmax over the last axis, stabilized by max subtraction
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const int d = x.dim(x.rank() - 1);
  const size_t n_rows = x.numel() / d;
  auto xn = x.node();
  Tensor<T> out = make_op<T>(x.shape(), {x}, [xn, d, n_rows](Node<T>& self) {
    xn->ensure_grad();
    for (size_t r = 0; r < n_rows; ++r) {
      const T* y = self.value.data() + r * d;
      const T* gy = self.grad.data() + r * d;
      T dot = 0;
      for (int j = 0; j < d; ++j) dot += y[j] * gy[j];
      T* gx = xn->grad.data() + r * d;
      for (int j = 0; j < d; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
  for (size_t r = 0; r < n_rows; ++r) {
    const T* xin = xn->value.data() + r * d;
    T* y = out.value().data() + r * d;
    T m = xin[0];
    for (int j = 1; j < d; ++j) m = std::max(m, xin[j]);
    T sum = 0;
    for (int j = 0; j < d; ++j) {
      y[j] = std::exp(xin[j] - m);
      sum += y[j];
    }
    for (int j = 0; j < d; ++j) y[j] /= sum;
  }
  return out;
}

// layer normalization over the last axis with affine gain/bias of length d
template <typename T>
Tensor<T> layer_norm_lastdim(const Tensor<T>& x, const Tensor<T>& gain,
                             const Tensor<T>& bias, T eps = T(1e-5)) {
  const int d = x.dim(x.rank() - 1);
  if (d < 2) throw ShapeError("layer_norm: feature axis must have length >= 2");
  if (gain.numel() != static_cast<size_t>(d) || bias.numel() != static_cast<size_t>(d))
    throw ShapeError("layer_norm: gain/bias length mismatch");
  const size_t n_rows = x.numel() / d;
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  // per-row mean and inverse std captured for backward
  auto stats = std::make_shared<std::vector<T>>(2 * n_rows);
  Tensor<T> out = make_op<T>(x.shape(), {x, gain, bias},
                             [xn, gn, bn, stats, d, n_rows](Node<T>& self) {
    for (size_t r = 0; r < n_rows; ++r) {
      const T mean = (*stats)[2 * r], istd = (*stats)[2 * r + 1];
      const T* xin = xn->value.data() + r * d;
      const T* gy = self.grad.data() + r * d;
      // xhat_j = (x_j - mean) * istd; y = g*xhat + b
      T sum_gh = 0, sum_gh_xhat = 0;
      for (int j = 0; j < d; ++j) {
        const T xhat = (xin[j] - mean) * istd;
        const T gh = gy[j] * gn->value[j];
        sum_gh += gh;
        sum_gh_xhat += gh * xhat;
        if (gn->requires_grad) {
          gn->ensure_grad();
          gn->grad[j] += gy[j] * xhat;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[j] += gy[j];
        }
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        T* gx = xn->grad.data() + r * d;
        for (int j = 0; j < d; ++j) {
          const T xhat = (xin[j] - mean) * istd;
          const T gh = gy[j] * gn->value[j];
          gx[j] += istd * (gh - sum_gh / d - xhat * sum_gh_xhat / d);
        }
      }
    }
  });
  for (size_t r = 0; r < n_rows; ++r) {
    const T* xin = xn->value.data() + r * d;
    T mean = 0;
    for (int j = 0; j < d; ++j) mean += xin[j];
    mean /= d;
    T var = 0;
    for (int j = 0; j < d; ++j) var += (xin[j] - mean) * (xin[j] - mean);
    var /= d;
    const T istd = T(1) / std::sqrt(var + eps);
    (*stats)[2 * r] = mean;
    (*stats)[2 * r + 1] = istd;
    T* y = out.value().data() + r * d;
    for (int j = 0; j < d; ++j)
      y[j] = gn->value[j] * ((xin[j] - mean) * istd) + bn->value[j];
  }
  return out;
}

// L2-normalize each row of a matrix
template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& x, T eps = T(1e-12)) {
  if (x.rank() != 2) throw ShapeError("normalize_rows: expected a matrix");
  const int n = x.dim(0), d = x.dim(1);
  auto xn = x.node();
  auto norms = std::make_shared<std::vector<T>>(n);
  Tensor<T> out = make_op<T>(x.shape(), {x}, [xn, norms, n, d](Node<T>& self) {
    xn->ensure_grad();
    for (int r = 0; r < n; ++r) {
      const T* y = self.value.data() + static_cast<size_t>(r) * d;
      const T* gy = self.grad.data() + static_cast<size_t>(r) * d;
      T* gx = xn->grad.data() + static_cast<size_t>(r) * d;
      T dot = 0;
      for (int j = 0; j < d; ++j) dot += y[j] * gy[j];
      const T inv = T(1) / (*norms)[r];
      for (int j = 0; j < d; ++j) gx[j] += inv * (gy[j] - y[j] * dot);
    }
  });
  for (int r = 0; r < n; ++r) {
    const T* xin = xn->value.data() + static_cast<size_t>(r) * d;
    T ss = 0;
    for (int j = 0; j < d; ++j) ss += xin[j] * xin[j];
    const T norm = std::sqrt(ss) + eps;
    (*norms)[r] = norm;
    T* y = out.value().data() + static_cast<size_t>(r) * d;
    for (int j = 0; j < d; ++j) y[j] = xin[j] / norm;
  }
  return out;
}

template <typename T>
Tensor<T> sum_lastdim(const Tensor<T>& x) {
  const int d = x.dim(x.rank() - 1);
  const size_t n_rows = x.numel() / d;
  std::vector<int> out_shape(x.shape().begin(), x.shape().end() - 1);
  if (out_shape.empty()) out_shape.push_back(1);
  auto xn = x.node();
  Tensor<T> out = make_op<T>(out_shape, {x}, [xn, d, n_rows](Node<T>& self) {
    xn->ensure_grad();
    for (size_t r = 0; r < n_rows; ++r)
      for (int j = 0; j < d; ++j) xn->grad[r * d + j] += self.grad[r];
  });
  for (size_t r = 0; r < n_rows; ++r) {
    T acc = 0;
    for (int j = 0; j < d; ++j) acc += xn->value[r * d + j];
    out.value()[r] = acc;
  }
  return out;
}

// row-wise cosine similarity of two [n, d] matrices -> [n]
template <typename T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
  return sum_lastdim(mul(normalize_rows(a), normalize_rows(b)));
}

// ---------------------------------------------------------------------------
// batch normalization (channel axis 1, any rank >= 2)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::vector<T>& running_mean, std::vector<T>& running_var,
                     T momentum, T eps, bool training) {
  if (x.rank() < 2) throw ShapeError("batch_norm: rank must be >= 2");
  const int channels = x.dim(1);
  if (gamma.numel() != static_cast<size_t>(channels) ||
      beta.numel() != static_cast<size_t>(channels) ||
      running_mean.size() != static_cast<size_t>(channels))
    throw ShapeError("batch_norm: channel count mismatch");
  size_t inner = 1;
  for (int i = 2; i < x.rank(); ++i) inner *= static_cast<size_t>(x.dim(i));
  const int batch = x.dim(0);
  const size_t per_channel = static_cast<size_t>(batch) * inner;
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();

  std::vector<T> mean(channels), var(channels);
  if (training) {
    for (int c = 0; c < channels; ++c) {
      T m = 0;
      for (int b = 0; b < batch; ++b) {
        const T* p = xn->value.data() + (static_cast<size_t>(b) * channels + c) * inner;
        for (size_t i = 0; i < inner; ++i) m += p[i];
      }
      m /= static_cast<T>(per_channel);
      T v = 0;
      for (int b = 0; b < batch; ++b) {
        const T* p = xn->value.data() + (static_cast<size_t>(b) * channels + c) * inner;
        for (size_t i = 0; i < inner; ++i) v += (p[i] - m) * (p[i] - m);
      }
      v /= static_cast<T>(per_channel);
      mean[c] = m;
      var[c] = v;
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * m;
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * v;
    }
  } else {
    mean = running_mean;
    var = running_var;
  }

  auto mean_c = std::make_shared<std::vector<T>>(mean);
  auto var_c = std::make_shared<std::vector<T>>(var);
  Tensor<T> out = make_op<T>(x.shape(), {x, gamma, beta},
                             [xn, gn, bn, mean_c, var_c, training, eps, batch, channels,
                              inner, per_channel](Node<T>& self) {
    for (int c = 0; c < channels; ++c) {
      const T m = (*mean_c)[c];
      const T istd = T(1) / std::sqrt((*var_c)[c] + eps);
      T sum_gy = 0, sum_gy_xhat = 0;
      for (int b = 0; b < batch; ++b) {
        const size_t off = (static_cast<size_t>(b) * channels + c) * inner;
        for (size_t i = 0; i < inner; ++i) {
          const T xhat = (xn->value[off + i] - m) * istd;
          sum_gy += self.grad[off + i];
          sum_gy_xhat += self.grad[off + i] * xhat;
        }
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        gn->grad[c] += sum_gy_xhat;
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        bn->grad[c] += sum_gy;
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        const T g = gn->value[c];
        const T n_inv = T(1) / static_cast<T>(per_channel);
        for (int b = 0; b < batch; ++b) {
          const size_t off = (static_cast<size_t>(b) * channels + c) * inner;
          for (size_t i = 0; i < inner; ++i) {
            if (training) {
              const T xhat = (xn->value[off + i] - m) * istd;
              xn->grad[off + i] += g * istd *
                  (self.grad[off + i] - sum_gy * n_inv - xhat * sum_gy_xhat * n_inv);
            } else {
              // eval mode is a fixed affine map
              xn->grad[off + i] += g * istd * self.grad[off + i];
            }
          }
        }
      }
    }
  });
  for (int c = 0; c < channels; ++c) {
    const T m = mean[c];
    const T istd = T(1) / std::sqrt(var[c] + eps);
    const T g = gn->value[c], b0 = bn->value[c];
    for (int b = 0; b < batch; ++b) {
      const size_t off = (static_cast<size_t>(b) * channels + c) * inner;
      for (size_t i = 0; i < inner; ++i)
        out.value()[off + i] = g * ((xn->value[off + i] - m) * istd) + b0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// convolution and pooling
// ---------------------------------------------------------------------------

namespace detail {
inline int conv_out_size(int in, int k, int s, int p) {
  return (in + 2 * p - k) / s + 1;
}

template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int sh, int sw,
            int ph, int pw, int oh, int ow, T* col) {
  // col: [c*kh*kw, oh*ow]
  for (int ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        T* crow = col + ((static_cast<size_t>(ci) * kh + ki) * kw + kj) *
                            (static_cast<size_t>(oh) * ow);
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * sh - ph + ki;
          if (ii < 0 || ii >= h) {
            for (int oj = 0; oj < ow; ++oj) crow[static_cast<size_t>(oi) * ow + oj] = 0;
            continue;
          }
          const T* xrow = x + (static_cast<size_t>(ci) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * sw - pw + kj;
            crow[static_cast<size_t>(oi) * ow + oj] =
                (jj >= 0 && jj < w) ? xrow[jj] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, int c, int h, int w, int kh, int kw, int sh, int sw,
                int ph, int pw, int oh, int ow, T* x) {
  for (int ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const T* crow = col + ((static_cast<size_t>(ci) * kh + ki) * kw + kj) *
                                  (static_cast<size_t>(oh) * ow);
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * sh - ph + ki;
          if (ii < 0 || ii >= h) continue;
          T* xrow = x + (static_cast<size_t>(ci) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * sw - pw + kj;
            if (jj >= 0 && jj < w) xrow[jj] += crow[static_cast<size_t>(oi) * ow + oj];
          }
        }
      }
}
}  // namespace detail

// x: [b, c, h, w], weight: [o, c, kh, kw], bias: [o] (may be undefined)
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride_h, int stride_w, int pad_h, int pad_w) {
  if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1))
    throw ShapeError("conv2d: incompatible shapes");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int oh = detail::conv_out_size(h, kh, stride_h, pad_h);
  const int ow = detail::conv_out_size(w, kw, stride_w, pad_w);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: output size would be empty");
  const bool has_bias = bias.defined();
  auto xn = x.node();
  auto wn = weight.node();
  auto bn = has_bias ? bias.node() : nullptr;
  const int ck = c * kh * kw;
  const size_t out_plane = static_cast<size_t>(oh) * ow;

  std::vector<Tensor<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  Tensor<T> out = make_op<T>({b, o, oh, ow}, parents,
                             [=](Node<T>& self) {
    std::vector<T> col(static_cast<size_t>(ck) * out_plane);
    std::vector<T> dcol(static_cast<size_t>(ck) * out_plane);
    for (int bi = 0; bi < b; ++bi) {
      const T* gy = self.grad.data() + static_cast<size_t>(bi) * o * out_plane;
      if (wn->requires_grad || xn->requires_grad) {
        if (wn->requires_grad) {
          wn->ensure_grad();
          detail::im2col(xn->value.data() + static_cast<size_t>(bi) * c * h * w,
                         c, h, w, kh, kw, stride_h, stride_w, pad_h, pad_w, oh, ow,
                         col.data());
          // dW[o, ck] += gy[o, ohw] * col[ck, ohw]^T
          gemm_nt(o, static_cast<int>(out_plane), ck, gy, col.data(), wn->grad.data());
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          std::fill(dcol.begin(), dcol.end(), T(0));
          // dcol[ck, ohw] += W[o, ck]^T * gy[o, ohw]
          gemm_tn(o, ck, static_cast<int>(out_plane), wn->value.data(), gy, dcol.data());
          detail::col2im_add(dcol.data(), c, h, w, kh, kw, stride_h, stride_w,
                             pad_h, pad_w, oh, ow,
                             xn->grad.data() + static_cast<size_t>(bi) * c * h * w);
        }
      }
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        for (int oi = 0; oi < o; ++oi) {
          T acc = 0;
          for (size_t i = 0; i < out_plane; ++i) acc += gy[static_cast<size_t>(oi) * out_plane + i];
          bn->grad[oi] += acc;
        }
      }
    }
  });
  {
    std::vector<T> col(static_cast<size_t>(ck) * out_plane);
    for (int bi = 0; bi < b; ++bi) {
      detail::im2col(xn->value.data() + static_cast<size_t>(bi) * c * h * w, c, h, w,
                     kh, kw, stride_h, stride_w, pad_h, pad_w, oh, ow, col.data());
      T* y = out.value().data() + static_cast<size_t>(bi) * o * out_plane;
      if (has_bias)
        for (int oi = 0; oi < o; ++oi)
          std::fill(y + static_cast<size_t>(oi) * out_plane,
                    y + static_cast<size_t>(oi + 1) * out_plane, bn->value[oi]);
      gemm_nn(o, ck, static_cast<int>(out_plane), wn->value.data(), col.data(), y);
    }
  }
  return out;
}

// x: [b, c, l], weight: [o, c, k]
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int pad) {
  Tensor<T> x4 = reshape(x, {x.dim(0), x.dim(1), 1, x.dim(2)});
  Tensor<T> w4 = reshape(weight, {weight.dim(0), weight.dim(1), 1, weight.dim(2)});
  Tensor<T> y = conv2d(x4, w4, bias, 1, stride, 0, pad);
  return reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

// non-overlapping max pooling, stride = kernel
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kh, int kw) {
  if (x.rank() != 4) throw ShapeError("max_pool2d: expected [b,c,h,w]");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / kh, ow = w / kw;
  if (oh == 0 || ow == 0) throw ShapeError("max_pool2d: kernel larger than input");
  auto xn = x.node();
  auto argmax = std::make_shared<std::vector<size_t>>(
      static_cast<size_t>(b) * c * oh * ow);
  Tensor<T> out = make_op<T>({b, c, oh, ow}, {x}, [xn, argmax](Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[(*argmax)[i]] += self.grad[i];
  });
  size_t oidx = 0;
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int oi = 0; oi < oh; ++oi)
        for (int oj = 0; oj < ow; ++oj) {
          T best = -std::numeric_limits<T>::infinity();
          size_t best_idx = 0;
          for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
              const size_t idx =
                  ((static_cast<size_t>(bi) * c + ci) * h + oi * kh + ki) * w +
                  oj * kw + kj;
              if (xn->value[idx] > best) {
                best = xn->value[idx];
                best_idx = idx;
              }
            }
          out.value()[oidx] = best;
          (*argmax)[oidx] = best_idx;
          ++oidx;
        }
  return out;
}

// max over all axes past the channel axis: [b, c, ...] -> [b, c]
template <typename T>
Tensor<T> global_max(const Tensor<T>& x) {
  if (x.rank() < 3) throw ShapeError("global_max: rank must be >= 3");
  const int b = x.dim(0), c = x.dim(1);
  size_t inner = 1;
  for (int i = 2; i < x.rank(); ++i) inner *= static_cast<size_t>(x.dim(i));
  auto xn = x.node();
  auto argmax = std::make_shared<std::vector<size_t>>(static_cast<size_t>(b) * c);
  Tensor<T> out = make_op<T>({b, c}, {x}, [xn, argmax](Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[(*argmax)[i]] += self.grad[i];
  });
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const size_t off = (static_cast<size_t>(bi) * c + ci) * inner;
      T best = xn->value[off];
      size_t best_idx = off;
      for (size_t i = 1; i < inner; ++i)
        if (xn->value[off + i] > best) {
          best = xn->value[off + i];
          best_idx = off + i;
        }
      out.value()[static_cast<size_t>(bi) * c + ci] = best;
      (*argmax)[static_cast<size_t>(bi) * c + ci] = best_idx;
    }
  return out;
}

// elementwise max of two same-shape tensors
template <typename T>
Tensor<T> elementwise_max(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("elementwise_max: shape mismatch");
  auto an = a.node(), bn = b.node();
  Tensor<T> out = make_op<T>(a.shape(), {a, b}, [an, bn](Node<T>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (an->value[i] >= bn->value[i]) {
        if (an->requires_grad) {
          an->ensure_grad();
          an->grad[i] += self.grad[i];
        }
      } else if (bn->requires_grad) {
        bn->ensure_grad();
        bn->grad[i] += self.grad[i];
      }
    }
  });
  for (size_t i = 0; i < out.numel(); ++i)
    out.value()[i] = std::max(an->value[i], bn->value[i]);
  return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// summed cross entropy from logits [n, classes] against integer targets
template <typename T>
Tensor<T> cross_entropy_from_logits(const Tensor<T>& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2 || targets.size() != static_cast<size_t>(logits.dim(0)))
    throw ShapeError("cross_entropy_from_logits: bad shapes");
  const int n = logits.dim(0), c = logits.dim(1);
  for (int t : targets)
    if (t < 0 || t >= c) throw ShapeError("cross_entropy_from_logits: target out of range");
  auto xn = logits.node();
  auto probs = std::make_shared<std::vector<T>>(logits.numel());
  auto tgt = targets;
  Tensor<T> out = make_op<T>({1}, {logits}, [xn, probs, tgt, n, c](Node<T>& self) {
    xn->ensure_grad();
    const T g = self.grad[0];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j)
        xn->grad[static_cast<size_t>(i) * c + j] +=
            g * ((*probs)[static_cast<size_t>(i) * c + j] - (j == tgt[i] ? T(1) : T(0)));
  });
  T loss = 0;
  for (int i = 0; i < n; ++i) {
    const T* row = xn->value.data() + static_cast<size_t>(i) * c;
    T m = row[0];
    for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
    T sum = 0;
    for (int j = 0; j < c; ++j) {
      (*probs)[static_cast<size_t>(i) * c + j] = std::exp(row[j] - m);
      sum += (*probs)[static_cast<size_t>(i) * c + j];
    }
    for (int j = 0; j < c; ++j) (*probs)[static_cast<size_t>(i) * c + j] /= sum;
    loss += m + std::log(sum) - row[targets[i]];
  }
  out.value()[0] = loss;
  return out;
}

}  // namespace avsa
