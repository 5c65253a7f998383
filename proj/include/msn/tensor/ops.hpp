#pragma once

// Differentiable operations over Tensor.  Broadcasting is restricted to the
// leading dimensions: the smaller operand's shape must be a suffix of the
// larger one's.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "msn/tensor/tensor.hpp"

namespace msn {

namespace detail {

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <class T>
Shape broadcast_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " are not broadcast-compatible");
}

// C[m x n] += A[m x k] * B[k x n]
template <class T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T.  B is transposed once so the inner loop
// runs over contiguous columns; every C element still sums over p in order.
template <class T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  if (m == 1) {
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[p] * bj[p];
      c[j] += acc;
    }
    return;
  }
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  std::vector<T> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), T(0));
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = bt.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * bp[j];
    }
    T* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += row[j];
  }
}

// C[m x n] += A[k x m]^T * B[k x n]
template <class T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* ap = a + p * m;
    const T* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = ap[i];
      T* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <class T>
T gelu_value(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

// Visits i in [0, n) with the matching indices into operands of sizes na and
// nb; one operand spans the output and the other repeats as a suffix.
template <class F>
void tiled(std::size_t n, std::size_t na, std::size_t nb, F&& f) {
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
  } else if (na == n) {
    for (std::size_t off = 0; off < n; off += nb)
      for (std::size_t j = 0; j < nb; ++j) f(off + j, off + j, j);
  } else {
    for (std::size_t off = 0; off < n; off += na)
      for (std::size_t j = 0; j < na; ++j) f(off + j, j, off + j);
  }
}

template <class T, class Fwd, class Bwd>
Tensor<T> unary(OpKind kind, const Tensor<T>& a, Fwd fwd, Bwd bwd) {
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_op<T>(kind, a.shape(), std::move(out), {&a}, [bwd](Node<T>& self) {
    auto* ga = grad_target(self, 0);
    if (!ga) return;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += self.grad[i] * bwd(x[i], self.value[i]);
  });
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Shape shape = detail::broadcast_shape("add", a, b);
  const auto &av = a.values(), &bv = b.values();
  const std::size_t n = shape_numel(shape), na = av.size(), nb = bv.size();
  std::vector<T> out(n);
  detail::tiled(n, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] + bv[ib]; });
  return detail::make_op<T>(OpKind::add, std::move(shape), std::move(out), {&a, &b},
                            [](detail::Node<T>& self) {
                              for (std::size_t p = 0; p < 2; ++p) {
                                auto* g = detail::grad_target(self, p);
                                if (!g) continue;
                                const std::size_t n = self.grad.size(), m = g->size();
                                detail::tiled(n, m, n, [&](std::size_t i, std::size_t ig, std::size_t) { (*g)[ig] += self.grad[i]; });
                              }
                            });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  Shape shape = detail::broadcast_shape("sub", a, b);
  const auto &av = a.values(), &bv = b.values();
  const std::size_t n = shape_numel(shape), na = av.size(), nb = bv.size();
  std::vector<T> out(n);
  detail::tiled(n, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] - bv[ib]; });
  return detail::make_op<T>(OpKind::sub, std::move(shape), std::move(out), {&a, &b},
                            [](detail::Node<T>& self) {
                              for (std::size_t p = 0; p < 2; ++p) {
                                auto* g = detail::grad_target(self, p);
                                if (!g) continue;
                                const T sign = p == 0 ? T(1) : T(-1);
                                const std::size_t n = self.grad.size(), m = g->size();
                                detail::tiled(n, m, n,
                                              [&](std::size_t i, std::size_t ig, std::size_t) { (*g)[ig] += sign * self.grad[i]; });
                              }
                            });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  Shape shape = detail::broadcast_shape("mul", a, b);
  const auto &av = a.values(), &bv = b.values();
  const std::size_t n = shape_numel(shape), na = av.size(), nb = bv.size();
  std::vector<T> out(n);
  detail::tiled(n, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] * bv[ib]; });
  return detail::make_op<T>(OpKind::mul, std::move(shape), std::move(out), {&a, &b},
                            [](detail::Node<T>& self) {
                              const auto& x = self.parents[0]->value;
                              const auto& y = self.parents[1]->value;
                              const std::size_t n = self.grad.size(), nx = x.size(), ny = y.size();
                              if (auto* g = detail::grad_target(self, 0)) {
                                detail::tiled(n, nx, ny, [&](std::size_t i, std::size_t ix, std::size_t iy) {
                                  (*g)[ix] += self.grad[i] * y[iy];
                                });
                              }
                              if (auto* g = detail::grad_target(self, 1)) {
                                detail::tiled(n, nx, ny, [&](std::size_t i, std::size_t ix, std::size_t iy) {
                                  (*g)[iy] += self.grad[i] * x[ix];
                                });
                              }
                            });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return detail::unary<T>(
      OpKind::scale, a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  return detail::unary<T>(
      OpKind::gelu, a, [](T x) { return detail::gelu_value(x); },
      [](T x, T) { return detail::gelu_grad(x); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary<T>(
      OpKind::exp, a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
  if (finite_checks_enabled()) {
    for (auto v : a.values()) {
      if (!(v > T(0))) throw NumericFault("log: argument outside domain (" + std::to_string(v) + ")");
    }
  }
  return detail::unary<T>(
      OpKind::log, a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::unary<T>(
      OpKind::square, a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (auto v : a.values()) acc += v;
  return detail::make_op<T>(OpKind::sum, {1}, {acc}, {&a}, [](detail::Node<T>& self) {
    auto* g = detail::grad_target(self, 0);
    if (!g) return;
    for (auto& v : *g) v += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  T acc = T(0);
  for (auto v : a.values()) acc += v;
  const T inv = T(1) / static_cast<T>(a.numel());
  return detail::make_op<T>(OpKind::mean, {1}, {acc * inv}, {&a}, [inv](detail::Node<T>& self) {
    auto* g = detail::grad_target(self, 0);
    if (!g) return;
    for (auto& v : *g) v += self.grad[0] * inv;
  });
}

// a: [..., m, k].  b: [k, n] shared across the leading dims of a, or a tensor
// of the same rank as a with identical leading dims (batched).  trans_b reads
// b as [..., n, k].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_b = false) {
  if (a.rank() < 1 || b.rank() < 2) {
    throw ShapeError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const bool batched = b.rank() > 2;
  const std::size_t k = a.shape().back();
  const std::size_t bk = trans_b ? b.shape().back() : b.shape()[b.rank() - 2];
  const std::size_t n = trans_b ? b.shape()[b.rank() - 2] : b.shape().back();
  if (k != bk) {
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + (trans_b ? "^T" : ""));
  }
  std::size_t batch = 1, m = 1;
  if (batched) {
    if (a.rank() != b.rank() ||
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
      throw ShapeError("matmul: batch dimensions differ: " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    }
    m = a.shape()[a.rank() - 2];
    batch = a.numel() / (m * k);
  } else {
    m = a.numel() / k;
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  std::vector<T> out(batch * m * n, T(0));
  const T* ap = a.values().data();
  const T* bp = b.values().data();
  for (std::size_t s = 0; s < batch; ++s) {
    const T* as = ap + s * m * k;
    const T* bs = batched ? bp + s * k * n : bp;
    T* cs = out.data() + s * m * n;
    if (trans_b) {
      detail::gemm_nt(m, k, n, as, bs, cs);
    } else {
      detail::gemm_nn(m, k, n, as, bs, cs);
    }
  }
  return detail::make_op<T>(
      OpKind::matmul, std::move(out_shape), std::move(out), {&a, &b},
      [batch, m, k, n, batched, trans_b](detail::Node<T>& self) {
        const T* av = self.parents[0]->value.data();
        const T* bv = self.parents[1]->value.data();
        const T* gc = self.grad.data();
        auto* ga = detail::grad_target(self, 0);
        auto* gb = detail::grad_target(self, 1);
        for (std::size_t s = 0; s < batch; ++s) {
          const T* as = av + s * m * k;
          const T* bs = batched ? bv + s * k * n : bv;
          const T* gs = gc + s * m * n;
          if (ga) {
            T* gas = ga->data() + s * m * k;
            if (trans_b) {
              detail::gemm_nn(m, n, k, gs, bs, gas);
            } else {
              detail::gemm_nt(m, n, k, gs, bs, gas);
            }
          }
          if (gb) {
            T* gbs = gb->data() + (batched ? s * k * n : 0);
            if (trans_b) {
              detail::gemm_tn(n, m, k, gs, as, gbs);
            } else {
              detail::gemm_tn(k, m, n, as, gs, gbs);
            }
          }
        }
      });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return detail::make_op<T>(OpKind::reshape, std::move(shape), a.values(), {&a}, [](detail::Node<T>& self) {
    auto* g = detail::grad_target(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

// Softmax over the last dimension.  With causal=true the last two dims must
// be square [.., T, T] and entry (i, j) with j > i is masked out.
template <class T>
Tensor<T> softmax(const Tensor<T>& a, bool causal = false) {
  const std::size_t n = a.shape().back();
  if (causal && (a.rank() < 2 || a.shape()[a.rank() - 2] != n)) {
    throw ShapeError("softmax: causal mask needs square trailing dims, got " + shape_str(a.shape()));
  }
  const std::size_t rows = a.numel() / n;
  const auto& x = a.values();
  std::vector<T> out(x.size(), T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t limit = causal ? (r % n) + 1 : n;
    const T* xr = x.data() + r * n;
    T* yr = out.data() + r * n;
    T mx = xr[0];
    for (std::size_t j = 1; j < limit; ++j) mx = std::max(mx, xr[j]);
    T z = T(0);
    for (std::size_t j = 0; j < limit; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < limit; ++j) yr[j] /= z;
  }
  return detail::make_op<T>(OpKind::softmax, a.shape(), std::move(out), {&a}, [rows, n](detail::Node<T>& self) {
    auto* g = detail::grad_target(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * n;
      const T* gy = self.grad.data() + r * n;
      T dot = T(0);
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * gy[j];
      T* gx = g->data() + r * n;
      for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

// Layer normalization over the last dimension with affine gamma/beta of
// shape [H].
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t h = x.shape().back();
  if (gamma.shape() != Shape{h} || beta.shape() != Shape{h}) {
    throw ShapeError("layer_norm: affine shapes " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / h;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<T> out(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * h;
    T mu = T(0);
    for (std::size_t j = 0; j < h; ++j) mu += xr[j];
    mu /= static_cast<T>(h);
    T var = T(0);
    for (std::size_t j = 0; j < h; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(h);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < h; ++j) {
      xhat[r * h + j] = (xr[j] - mu) * rstd[r];
      out[r * h + j] = xhat[r * h + j] * gv[j] + bv[j];
    }
  }
  return detail::make_op<T>(
      OpKind::layer_norm, x.shape(), std::move(out), {&x, &gamma, &beta},
      [rows, h, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node<T>& self) {
        const auto& gv = self.parents[1]->value;
        auto* gx = detail::grad_target(self, 0);
        auto* gg = detail::grad_target(self, 1);
        auto* gb = detail::grad_target(self, 2);
        std::vector<T> dxhat(h);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gy = self.grad.data() + r * h;
          const T* xh = xhat.data() + r * h;
          if (gg) {
            for (std::size_t j = 0; j < h; ++j) (*gg)[j] += gy[j] * xh[j];
          }
          if (gb) {
            for (std::size_t j = 0; j < h; ++j) (*gb)[j] += gy[j];
          }
          if (gx) {
            T m1 = T(0), m2 = T(0);
            for (std::size_t j = 0; j < h; ++j) {
              dxhat[j] = gy[j] * gv[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * xh[j];
            }
            m1 /= static_cast<T>(h);
            m2 /= static_cast<T>(h);
            T* g = gx->data() + r * h;
            for (std::size_t j = 0; j < h; ++j) g[j] += rstd[r] * (dxhat[j] - m1 - xh[j] * m2);
          }
        }
      });
}

// Row lookup: table [V, H], ids laid out with shape ids_shape.  Output is
// ids_shape + [H].
template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids, Shape ids_shape) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be 2-D, got " + shape_str(table.shape()));
  if (shape_numel(ids_shape) != ids.size()) {
    throw ShapeError("embedding: ids shape " + shape_str(ids_shape) + " does not match " +
                     std::to_string(ids.size()) + " ids");
  }
  const std::size_t v = table.dim(0), h = table.dim(1);
  std::vector<T> out(ids.size() * h);
  const auto& tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw InvalidArgument("embedding: id " + std::to_string(ids[i]) + " out of range [0," +
                            std::to_string(v) + ")");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * h, h, out.data() + i * h);
  }
  ids_shape.push_back(h);
  return detail::make_op<T>(OpKind::embedding, std::move(ids_shape), std::move(out), {&table},
                            [idx = std::vector<std::int32_t>(ids.begin(), ids.end()), h](detail::Node<T>& self) {
                              auto* g = detail::grad_target(self, 0);
                              if (!g) return;
                              for (std::size_t i = 0; i < idx.size(); ++i) {
                                T* row = g->data() + static_cast<std::size_t>(idx[i]) * h;
                                const T* gy = self.grad.data() + i * h;
                                for (std::size_t j = 0; j < h; ++j) row[j] += gy[j];
                              }
                            });
}

// Concatenate along the last dimension; leading dims must agree.
template <class T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw ShapeError("concat_last: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ outside the last dimension");
  }
  const std::size_t p = a.shape().back(), q = b.shape().back(), rows = a.numel() / p;
  std::vector<T> out(rows * (p + q));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + r * p, p, out.data() + r * (p + q));
    std::copy_n(b.values().data() + r * q, q, out.data() + r * (p + q) + p);
  }
  Shape shape = a.shape();
  shape.back() = p + q;
  return detail::make_op<T>(OpKind::concat, std::move(shape), std::move(out), {&a, &b},
                            [rows, p, q](detail::Node<T>& self) {
                              auto* ga = detail::grad_target(self, 0);
                              auto* gb = detail::grad_target(self, 1);
                              for (std::size_t r = 0; r < rows; ++r) {
                                const T* g = self.grad.data() + r * (p + q);
                                if (ga) {
                                  for (std::size_t j = 0; j < p; ++j) (*ga)[r * p + j] += g[j];
                                }
                                if (gb) {
                                  for (std::size_t j = 0; j < q; ++j) (*gb)[r * q + j] += g[p + j];
                                }
                              }
                            });
}

// [B, H] -> [B, steps, H], repeating each row at every step.
template <class T>
Tensor<T> broadcast_steps(const Tensor<T>& e, std::size_t steps) {
  if (e.rank() != 2) throw ShapeError("broadcast_steps: expected [B,H], got " + shape_str(e.shape()));
  const std::size_t b = e.dim(0), h = e.dim(1);
  std::vector<T> out(b * steps * h);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < steps; ++t) std::copy_n(e.values().data() + i * h, h, out.data() + (i * steps + t) * h);
  }
  return detail::make_op<T>(OpKind::broadcast_steps, {b, steps, h}, std::move(out), {&e},
                            [b, steps, h](detail::Node<T>& self) {
                              auto* g = detail::grad_target(self, 0);
                              if (!g) return;
                              for (std::size_t i = 0; i < b; ++i) {
                                for (std::size_t t = 0; t < steps; ++t) {
                                  const T* gy = self.grad.data() + (i * steps + t) * h;
                                  for (std::size_t j = 0; j < h; ++j) (*g)[i * h + j] += gy[j];
                                }
                              }
                            });
}

namespace detail {

// Index map between [B, T, nh*hd] and [B, nh, T, hd].
struct HeadLayout {
  std::size_t b, t, nh, hd;
  std::size_t merged(std::size_t bi, std::size_t ti, std::size_t hi, std::size_t di) const {
    return ((bi * t + ti) * nh + hi) * hd + di;
  }
  std::size_t split(std::size_t bi, std::size_t ti, std::size_t hi, std::size_t di) const {
    return ((bi * nh + hi) * t + ti) * hd + di;
  }
  template <class F>
  void for_each(F f) const {
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t hi = 0; hi < nh; ++hi)
          for (std::size_t di = 0; di < hd; ++di) f(merged(bi, ti, hi, di), split(bi, ti, hi, di));
  }
};

}  // namespace detail

template <class T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t n_heads) {
  if (x.rank() != 3 || x.dim(2) % n_heads != 0) {
    throw ShapeError("split_heads: cannot split " + shape_str(x.shape()) + " into " + std::to_string(n_heads) +
                     " heads");
  }
  const detail::HeadLayout lay{x.dim(0), x.dim(1), n_heads, x.dim(2) / n_heads};
  std::vector<T> out(x.numel());
  const auto& xv = x.values();
  lay.for_each([&](std::size_t m, std::size_t s) { out[s] = xv[m]; });
  return detail::make_op<T>(OpKind::split_heads, {lay.b, lay.nh, lay.t, lay.hd}, std::move(out), {&x},
                            [lay](detail::Node<T>& self) {
                              auto* g = detail::grad_target(self, 0);
                              if (!g) return;
                              lay.for_each([&](std::size_t m, std::size_t s) { (*g)[m] += self.grad[s]; });
                            });
}

template <class T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("merge_heads: expected [B,nh,T,hd], got " + shape_str(x.shape()));
  const detail::HeadLayout lay{x.dim(0), x.dim(2), x.dim(1), x.dim(3)};
  std::vector<T> out(x.numel());
  const auto& xv = x.values();
  lay.for_each([&](std::size_t m, std::size_t s) { out[m] = xv[s]; });
  return detail::make_op<T>(OpKind::merge_heads, {lay.b, lay.t, lay.nh * lay.hd}, std::move(out), {&x},
                            [lay](detail::Node<T>& self) {
                              auto* g = detail::grad_target(self, 0);
                              if (!g) return;
                              lay.for_each([&](std::size_t m, std::size_t s) { (*g)[s] += self.grad[m]; });
                            });
}

// Forward value is q; the gradient flows to e unchanged and q receives none.
template <class T>
Tensor<T> straight_through(const Tensor<T>& e, const Tensor<T>& q) {
  if (e.shape() != q.shape()) {
    throw ShapeError("straight_through: shapes " + shape_str(e.shape()) + " and " + shape_str(q.shape()) +
                     " differ");
  }
  return detail::make_op<T>(OpKind::straight_through, q.shape(), q.values(), {&e}, [](detail::Node<T>& self) {
    auto* g = detail::grad_target(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

}  // namespace msn
