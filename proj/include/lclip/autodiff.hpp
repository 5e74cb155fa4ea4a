#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lclip/tensor.hpp"

namespace lclip::ad {

// Reverse-mode tape over eagerly evaluated tensors. Every op computes its
// value immediately and, when any input requires gradients, records a closure
// that scatters the node's cotangent into its parents. backward() walks the
// graph once in reverse topological order; all losses are scalar-valued so no
// forward mode exists.
template <class T>
struct Node {
  TensorT<T> value;
  TensorT<T> grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> constant(TensorT<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  return n;
}

template <class T>
Var<T> leaf(TensorT<T> v, bool requires_grad = true) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

namespace detail {

template <class T>
void ensure_grad(Node<T>& n) {
  if (!n.grad_ready) {
    n.grad = TensorT<T>::zeros(n.value.shape());
    n.grad_ready = true;
  }
}

template <class T>
Var<T> make_op(TensorT<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

template <class T>
TensorT<T>& pgrad(Node<T>& n, std::size_t i) {
  ensure_grad(*n.parents[i]);
  return n.parents[i]->grad;
}

template <class T>
bool pwants(const Node<T>& n, std::size_t i) {
  return n.parents[i]->requires_grad;
}

}  // namespace detail

template <class T>
void backward(const Var<T>& root) {
  if (root->value.numel() != 1)
    throw DimensionError("backward: root must be scalar, got " +
                         shape_string(root->value.shape()));
  // Iterative post-order DFS.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  detail::ensure_grad(*root);
  root->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad_ready) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "add");
  TensorT<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t k = 0; k < 2; ++k)
      if (detail::pwants(n, k)) {
        auto& g = detail::pgrad(n, k);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
      }
  });
}

template <class T>
Var<T> add_n(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw PreconditionError("add_n: empty operand list");
  TensorT<T> out = xs[0]->value;
  for (std::size_t k = 1; k < xs.size(); ++k) {
    check_same_shape(out, xs[k]->value, "add_n");
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += xs[k]->value[i];
  }
  return detail::make_op<T>(std::move(out), xs, [](Node<T>& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k)
      if (detail::pwants(n, k)) {
        auto& g = detail::pgrad(n, k);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
      }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "sub");
  TensorT<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    if (detail::pwants(n, 0)) {
      auto& g = detail::pgrad(n, 0);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (detail::pwants(n, 1)) {
      auto& g = detail::pgrad(n, 1);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "mul");
  TensorT<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    if (detail::pwants(n, 0)) {
      auto& g = detail::pgrad(n, 0);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (detail::pwants(n, 1)) {
      auto& g = detail::pgrad(n, 1);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
  TensorT<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return detail::make_op<T>(std::move(out), {a}, [c](Node<T>& n) {
    auto& g = detail::pgrad(n, 0);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * c;
  });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  return scale(a, T(-1));
}

// out = gamma * W + beta with scalar gamma/beta broadcast over W. This is the
// whole multiplex transform, so its gradients feed both the shared tensor and
// the per-instance scalars.
template <class T>
Var<T> affine_scalar(const Var<T>& w, const Var<T>& gamma, const Var<T>& beta) {
  if (gamma->value.numel() != 1 || beta->value.numel() != 1)
    throw DimensionError("affine_scalar: gamma/beta must be scalars");
  const T g = gamma->value[0], b = beta->value[0];
  TensorT<T> out = w->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = g * out[i] + b;
  return detail::make_op<T>(std::move(out), {w, gamma, beta}, [](Node<T>& n) {
    const auto& wv = n.parents[0]->value;
    const T g = n.parents[1]->value[0];
    if (detail::pwants(n, 0)) {
      auto& gw = detail::pgrad(n, 0);
      for (std::size_t i = 0; i < gw.numel(); ++i) gw[i] += n.grad[i] * g;
    }
    if (detail::pwants(n, 1)) {
      T s = 0;
      for (std::size_t i = 0; i < wv.numel(); ++i) s += n.grad[i] * wv[i];
      detail::pgrad(n, 1)[0] += s;
    }
    if (detail::pwants(n, 2)) {
      T s = 0;
      for (std::size_t i = 0; i < n.grad.numel(); ++i) s += n.grad[i];
      detail::pgrad(n, 2)[0] += s;
    }
  });
}

// max(0, x); subgradient 0 at the kink.
template <class T>
Var<T> relu(const Var<T>& a) {
  TensorT<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > T(0) ? out[i] : T(0);
  return detail::make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    const auto& av = n.parents[0]->value;
    auto& g = detail::pgrad(n, 0);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (av[i] > T(0)) g[i] += n.grad[i];
  });
}

// Exact GELU: x * Phi(x).
template <class T>
Var<T> gelu(const Var<T>& a) {
  TensorT<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T x = out[i];
    out[i] = x * T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  }
  return detail::make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    const auto& av = n.parents[0]->value;
    auto& g = detail::pgrad(n, 0);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T x = av[i];
      const T phi = std::exp(T(-0.5) * x * x) * T(0.3989422804014326779);
      const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
      g[i] += n.grad[i] * (cdf + x * phi);
    }
  });
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  TensorT<T> out = lclip::matmul(a->value, b->value);
  return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    const std::size_t m = av.rows(), k = av.cols(), c = bv.cols();
    if (detail::pwants(n, 0)) {
      auto& ga = detail::pgrad(n, 0);  // dA += dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T s = 0;
          for (std::size_t j = 0; j < c; ++j) s += n.grad(i, j) * bv(p, j);
          ga(i, p) += s;
        }
    }
    if (detail::pwants(n, 1)) {
      auto& gb = detail::pgrad(n, 1);  // dB += A^T * dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = av(i, p);
          for (std::size_t j = 0; j < c; ++j) gb(p, j) += aip * n.grad(i, j);
        }
    }
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  TensorT<T> out = lclip::transpose(a->value);
  return detail::make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    auto& g = detail::pgrad(n, 0);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += n.grad(j, i);
  });
}

template <class T>
Var<T> slice_rows(const Var<T>& a, std::size_t r0, std::size_t r1) {
  const auto& v = a->value;
  if (v.rank() != 2 || r0 >= r1 || r1 > v.rows())
    throw DimensionError("slice_rows: invalid range on " + shape_string(v.shape()));
  const std::size_t n = v.cols();
  TensorT<T> out(Shape{r1 - r0, n});
  std::copy(v.data() + r0 * n, v.data() + r1 * n, out.data());
  return detail::make_op<T>(std::move(out), {a}, [r0, n](Node<T>& n_) {
    auto& g = detail::pgrad(n_, 0);
    for (std::size_t i = 0; i < n_.grad.numel(); ++i) g[r0 * n + i] += n_.grad[i];
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, std::size_t c0, std::size_t c1) {
  const auto& v = a->value;
  if (v.rank() != 2 || c0 >= c1 || c1 > v.cols())
    throw DimensionError("slice_cols: invalid range on " + shape_string(v.shape()));
  TensorT<T> out(Shape{v.rows(), c1 - c0});
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = v(i, j);
  return detail::make_op<T>(std::move(out), {a}, [c0](Node<T>& n) {
    auto& g = detail::pgrad(n, 0);
    for (std::size_t i = 0; i < n.grad.rows(); ++i)
      for (std::size_t j = 0; j < n.grad.cols(); ++j) g(i, c0 + j) += n.grad(i, j);
  });
}

// Row i of a matrix as a rank-1 vector.
template <class T>
Var<T> row_vec(const Var<T>& a, std::size_t i) {
  const auto& v = a->value;
  if (v.rank() != 2 || i >= v.rows())
    throw IndexError("row_vec: row " + std::to_string(i) + " out of " + shape_string(v.shape()));
  const std::size_t n = v.cols();
  TensorT<T> out(Shape{n});
  std::copy(v.data() + i * n, v.data() + (i + 1) * n, out.data());
  return detail::make_op<T>(std::move(out), {a}, [i, n](Node<T>& n_) {
    auto& g = detail::pgrad(n_, 0);
    for (std::size_t j = 0; j < n; ++j) g[i * n + j] += n_.grad[j];
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw PreconditionError("concat_cols: empty list");
  const std::size_t m = parts[0]->value.rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p->value.rank() != 2 || p->value.rows() != m)
      throw DimensionError("concat_cols: row mismatch");
    total += p->value.cols();
  }
  TensorT<T> out(Shape{m, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < p->value.cols(); ++j) out(i, off + j) = p->value(i, j);
    off += p->value.cols();
  }
  return detail::make_op<T>(std::move(out), parts, [](Node<T>& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      const std::size_t c = n.parents[k]->value.cols();
      if (detail::pwants(n, k)) {
        auto& g = detail::pgrad(n, k);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < c; ++j) g(i, j) += n.grad(i, off + j);
      }
      off += c;
    }
  });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw PreconditionError("concat_rows: empty list");
  const std::size_t n = parts[0]->value.cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p->value.rank() != 2 || p->value.cols() != n)
      throw DimensionError("concat_rows: column mismatch");
    total += p->value.rows();
  }
  TensorT<T> out(Shape{total, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data(), p->value.data() + p->value.numel(), out.data() + off);
    off += p->value.numel();
  }
  return detail::make_op<T>(std::move(out), parts, [](Node<T>& nd) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < nd.parents.size(); ++k) {
      const std::size_t cnt = nd.parents[k]->value.numel();
      if (detail::pwants(nd, k)) {
        auto& g = detail::pgrad(nd, k);
        for (std::size_t i = 0; i < cnt; ++i) g[i] += nd.grad[off + i];
      }
      off += cnt;
    }
  });
}

// Stack rank-1 vectors of equal length into a matrix, one per row.
template <class T>
Var<T> stack_rows(const std::vector<Var<T>>& rows) {
  if (rows.empty()) throw PreconditionError("stack_rows: empty list");
  const std::size_t n = rows[0]->value.numel();
  TensorT<T> out(Shape{rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->value.numel() != n)
      throw DimensionError("stack_rows: length mismatch");
    std::copy(rows[i]->value.data(), rows[i]->value.data() + n, out.data() + i * n);
  }
  return detail::make_op<T>(std::move(out), rows, [n](Node<T>& n_) {
    for (std::size_t k = 0; k < n_.parents.size(); ++k)
      if (detail::pwants(n_, k)) {
        auto& g = detail::pgrad(n_, k);
        for (std::size_t j = 0; j < n; ++j) g[j] += n_.grad[k * n + j];
      }
  });
}

// X[m×n] + b[n] on every row.
template <class T>
Var<T> add_row_broadcast(const Var<T>& x, const Var<T>& b) {
  const auto& xv = x->value;
  if (xv.rank() != 2 || b->value.numel() != xv.cols())
    throw DimensionError("add_row_broadcast: " + shape_string(xv.shape()) + " vs " +
                         shape_string(b->value.shape()));
  TensorT<T> out = xv;
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < xv.cols(); ++j) out(i, j) += b->value[j];
  return detail::make_op<T>(std::move(out), {x, b}, [](Node<T>& n) {
    if (detail::pwants(n, 0)) {
      auto& g = detail::pgrad(n, 0);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (detail::pwants(n, 1)) {
      auto& g = detail::pgrad(n, 1);
      for (std::size_t i = 0; i < n.grad.rows(); ++i)
        for (std::size_t j = 0; j < n.grad.cols(); ++j) g[j] += n.grad(i, j);
    }
  });
}

// Embedding gather: rows of A selected by ids. Backward scatter-adds.
template <class T>
Var<T> gather_rows(const Var<T>& a, std::vector<std::size_t> ids) {
  const auto& v = a->value;
  if (v.rank() != 2) throw DimensionError("gather_rows: rank-2 expected");
  for (std::size_t id : ids)
    if (id >= v.rows())
      throw IndexError("gather_rows: id " + std::to_string(id) + " out of " +
                       std::to_string(v.rows()));
  const std::size_t n = v.cols();
  TensorT<T> out(Shape{ids.size(), n});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(v.data() + ids[i] * n, v.data() + (ids[i] + 1) * n, out.data() + i * n);
  return detail::make_op<T>(std::move(out), {a}, [ids = std::move(ids), n](Node<T>& n_) {
    auto& g = detail::pgrad(n_, 0);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) g[ids[i] * n + j] += n_.grad(i, j);
  });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations
// ---------------------------------------------------------------------------

template <class T>
Var<T> layer_norm_rows(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                       T eps = T(1e-5)) {
  const auto& xv = x->value;
  if (xv.rank() != 2 || gamma->value.numel() != xv.cols() || beta->value.numel() != xv.cols())
    throw DimensionError("layer_norm_rows: bad shapes");
  const std::size_t m = xv.rows(), n = xv.cols();
  TensorT<T> out(Shape{m, n});
  TensorT<T> xhat(Shape{m, n});
  std::vector<T> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += xv(i, j);
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const T d = xv(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (xv(i, j) - mu) * is;
      out(i, j) = xhat(i, j) * gamma->value[j] + beta->value[j];
    }
  }
  return detail::make_op<T>(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& nd) {
        const std::size_t m = xhat.rows(), n = xhat.cols();
        const auto& gv = nd.parents[1]->value;
        if (detail::pwants(nd, 0)) {
          auto& gx = detail::pgrad(nd, 0);
          for (std::size_t i = 0; i < m; ++i) {
            T sum_dh = 0, sum_dh_xh = 0;
            for (std::size_t j = 0; j < n; ++j) {
              const T dh = nd.grad(i, j) * gv[j];
              sum_dh += dh;
              sum_dh_xh += dh * xhat(i, j);
            }
            const T inv_n = T(1) / static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T dh = nd.grad(i, j) * gv[j];
              gx(i, j) += inv_std[i] * (dh - sum_dh * inv_n - xhat(i, j) * sum_dh_xh * inv_n);
            }
          }
        }
        if (detail::pwants(nd, 1)) {
          auto& gg = detail::pgrad(nd, 1);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += nd.grad(i, j) * xhat(i, j);
        }
        if (detail::pwants(nd, 2)) {
          auto& gb = detail::pgrad(nd, 2);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += nd.grad(i, j);
        }
      });
}

// RMS normalization per row: y = x / rms(x) * gamma + beta. No mean
// subtraction, so uniform input shifts keep a gradient path (mean-subtracting
// norms annihilate them exactly, which leaves broadcast-shift params with
// structurally zero gradients).
template <class T>
Var<T> rms_norm_rows(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                     T eps = T(1e-5)) {
  const auto& xv = x->value;
  if (xv.rank() != 2 || gamma->value.numel() != xv.cols() || beta->value.numel() != xv.cols())
    throw DimensionError("rms_norm_rows: bad shapes");
  const std::size_t m = xv.rows(), n = xv.cols();
  TensorT<T> out(Shape{m, n});
  TensorT<T> xhat(Shape{m, n});
  std::vector<T> inv_rms(m);
  for (std::size_t i = 0; i < m; ++i) {
    T ms = 0;
    for (std::size_t j = 0; j < n; ++j) ms += xv(i, j) * xv(i, j);
    ms /= static_cast<T>(n);
    const T ir = T(1) / std::sqrt(ms + eps);
    inv_rms[i] = ir;
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = xv(i, j) * ir;
      out(i, j) = xhat(i, j) * gamma->value[j] + beta->value[j];
    }
  }
  return detail::make_op<T>(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_rms = std::move(inv_rms)](Node<T>& nd) {
        const std::size_t m = xhat.rows(), n = xhat.cols();
        const auto& gv = nd.parents[1]->value;
        if (detail::pwants(nd, 0)) {
          auto& gx = detail::pgrad(nd, 0);
          const T inv_n = T(1) / static_cast<T>(n);
          for (std::size_t i = 0; i < m; ++i) {
            T sum_dh_xh = 0;
            for (std::size_t j = 0; j < n; ++j) sum_dh_xh += nd.grad(i, j) * gv[j] * xhat(i, j);
            for (std::size_t j = 0; j < n; ++j) {
              const T dh = nd.grad(i, j) * gv[j];
              gx(i, j) += inv_rms[i] * (dh - xhat(i, j) * sum_dh_xh * inv_n);
            }
          }
        }
        if (detail::pwants(nd, 1)) {
          auto& gg = detail::pgrad(nd, 1);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += nd.grad(i, j) * xhat(i, j);
        }
        if (detail::pwants(nd, 2)) {
          auto& gb = detail::pgrad(nd, 2);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += nd.grad(i, j);
        }
      });
}

template <class T>
Var<T> softmax_rows(const Var<T>& x) {
  const auto& xv = x->value;
  if (xv.rank() != 2) throw DimensionError("softmax_rows: rank-2 expected");
  TensorT<T> out = xv;
  const std::size_t m = xv.rows(), n = xv.cols();
  for (std::size_t i = 0; i < m; ++i) {
    T mx = out(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, out(i, j));
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = std::exp(out(i, j) - mx);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= z;
  }
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& nd) {
    const auto& y = nd.value;
    auto& g = detail::pgrad(nd, 0);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      T s = 0;
      for (std::size_t j = 0; j < y.cols(); ++j) s += nd.grad(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j)
        g(i, j) += y(i, j) * (nd.grad(i, j) - s);
    }
  });
}

template <class T>
Var<T> log_softmax_rows(const Var<T>& x) {
  const auto& xv = x->value;
  if (xv.rank() != 2) throw DimensionError("log_softmax_rows: rank-2 expected");
  TensorT<T> out = xv;
  const std::size_t m = xv.rows(), n = xv.cols();
  for (std::size_t i = 0; i < m; ++i) {
    T mx = out(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, out(i, j));
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(out(i, j) - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out(i, j) -= lse;
  }
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& nd) {
    const auto& ls = nd.value;
    auto& g = detail::pgrad(nd, 0);
    for (std::size_t i = 0; i < ls.rows(); ++i) {
      T s = 0;
      for (std::size_t j = 0; j < ls.cols(); ++j) s += nd.grad(i, j);
      for (std::size_t j = 0; j < ls.cols(); ++j)
        g(i, j) += nd.grad(i, j) - std::exp(ls(i, j)) * s;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and vector ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (std::size_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
  return detail::make_op<T>(TensorT<T>::scalar(s), {a}, [](Node<T>& n) {
    auto& g = detail::pgrad(n, 0);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a->value.numel()));
}

template <class T>
Var<T> dot(const Var<T>& u, const Var<T>& v) {
  check_same_shape(u->value, v->value, "dot");
  T s = 0;
  for (std::size_t i = 0; i < u->value.numel(); ++i) s += u->value[i] * v->value[i];
  return detail::make_op<T>(TensorT<T>::scalar(s), {u, v}, [](Node<T>& n) {
    const auto& uv = n.parents[0]->value;
    const auto& vv = n.parents[1]->value;
    if (detail::pwants(n, 0)) {
      auto& g = detail::pgrad(n, 0);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0] * vv[i];
    }
    if (detail::pwants(n, 1)) {
      auto& g = detail::pgrad(n, 1);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0] * uv[i];
    }
  });
}

template <class T>
Var<T> l2_normalize(const Var<T>& v) {
  const T nrm = v->value.norm2();
  if (nrm == T(0)) throw DegenerateInputError("l2_normalize: zero-norm input");
  TensorT<T> out = v->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] / nrm;
  return detail::make_op<T>(std::move(out), {v}, [nrm](Node<T>& n) {
    const auto& y = n.value;
    auto& g = detail::pgrad(n, 0);
    T yg = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) yg += y[i] * n.grad[i];
    for (std::size_t i = 0; i < y.numel(); ++i)
      g[i] += (n.grad[i] - y[i] * yg) / nrm;
  });
}

template <class T>
Var<T> cosine(const Var<T>& u, const Var<T>& v) {
  if (u->value.numel() != v->value.numel() || u->value.numel() == 0)
    throw DimensionError("cosine: length mismatch");
  const T nu = u->value.norm2(), nv = v->value.norm2();
  if (nu == T(0) || nv == T(0)) throw DegenerateInputError("cosine: zero-norm input");
  // Identical inputs: cos is exactly 1 with exactly zero gradient. Computing
  // it the general way leaves rounding residue that adaptive optimizers blow
  // up into full-size steps, destroying exact fixed points.
  if (u->value == v->value)
    return detail::make_op<T>(TensorT<T>::scalar(T(1)), {u, v}, [](Node<T>&) {});
  const T c = dot_product(u->value, v->value) / (nu * nv);
  return detail::make_op<T>(TensorT<T>::scalar(c), {u, v},
                            [nu, nv, c](Node<T>& n) {
    const auto& uv = n.parents[0]->value;
    const auto& vv = n.parents[1]->value;
    const T g0 = n.grad[0];
    if (detail::pwants(n, 0)) {
      auto& g = detail::pgrad(n, 0);
      for (std::size_t i = 0; i < g.numel(); ++i)
        g[i] += g0 * (vv[i] / (nu * nv) - c * uv[i] / (nu * nu));
    }
    if (detail::pwants(n, 1)) {
      auto& g = detail::pgrad(n, 1);
      for (std::size_t i = 0; i < g.numel(); ++i)
        g[i] += g0 * (uv[i] / (nu * nv) - c * vv[i] / (nv * nv));
    }
  });
}

// Mean absolute error over coordinates; sign(0) taken as 0.
template <class T>
Var<T> mae(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "mae");
  const std::size_t n = a->value.numel();
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a->value[i] - b->value[i]);
  s /= static_cast<T>(n);
  return detail::make_op<T>(TensorT<T>::scalar(s), {a, b}, [](Node<T>& nd) {
    const auto& av = nd.parents[0]->value;
    const auto& bv = nd.parents[1]->value;
    const std::size_t n = av.numel();
    const T g0 = nd.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = av[i] - bv[i];
      const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      if (detail::pwants(nd, 0)) detail::pgrad(nd, 0)[i] += g0 * sgn;
      if (detail::pwants(nd, 1)) detail::pgrad(nd, 1)[i] -= g0 * sgn;
    }
  });
}

// Per-row gather of one column each: out[i] = x(i, ids[i]).
template <class T>
Var<T> gather_per_row(const Var<T>& x, std::vector<std::size_t> ids) {
  const auto& v = x->value;
  if (v.rank() != 2 || ids.size() != v.rows())
    throw DimensionError("gather_per_row: need one id per row");
  for (std::size_t id : ids)
    if (id >= v.cols()) throw IndexError("gather_per_row: column id out of range");
  TensorT<T> out(Shape{ids.size()});
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = v(i, ids[i]);
  return detail::make_op<T>(std::move(out), {x}, [ids = std::move(ids)](Node<T>& n) {
    auto& g = detail::pgrad(n, 0);
    for (std::size_t i = 0; i < ids.size(); ++i) g(i, ids[i]) += n.grad[i];
  });
}

}  // namespace lclip::ad
