#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "matrn/gemm.hpp"
#include "matrn/tensor.hpp"

namespace matrn {

template <class T>
inline Tensor<T> make_output(const Shape& s, bool track) {
  Tensor<T> t = Tensor<T>::zeros(s);
  if (track) t.ensure_grad();
  return t;
}

template <class T>
inline void record(std::function<void()> fn) {
  Tape<T>::active()->record(std::move(fn));
}

// ---------------------------------------------------------------------------
// structural ops

template <class T>
Tensor<T> detach(const Tensor<T>& x) {
  Tensor<T> t;
  t.shape = x.shape;
  t.data = x.data;  // shares storage, drops the gradient link
  return t;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& s) {
  if (shape_numel(s) != x.size())
    throw DimensionError("reshape " + shape_str(x.shape) + " -> " + shape_str(s) +
                         ": element count mismatch");
  bool track = grad_enabled_for<T>({&x});
  Tensor<T> out;
  out.shape = s;
  out.data = x.data;  // view; same flat layout
  if (track) {
    if (x.tracked()) {
      out.grad = x.grad;  // identity jacobian, grads accumulate in place
      out.requires_grad = true;
    } else {
      out.ensure_grad();
    }
  }
  return out;
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
  const int nd = x.ndim();
  if (static_cast<int>(perm.size()) != nd)
    throw DimensionError("permute rank mismatch for " + shape_str(x.shape));
  Shape os(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i) os[static_cast<size_t>(i)] = x.shape[static_cast<size_t>(perm[static_cast<size_t>(i)])];

  std::vector<int64_t> in_strides(static_cast<size_t>(nd), 1);
  for (int i = nd - 2; i >= 0; --i)
    in_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i + 1)] * x.shape[static_cast<size_t>(i + 1)];
  std::vector<int64_t> gather(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i) gather[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];

  bool track = grad_enabled_for<T>({&x});
  Tensor<T> out = make_output<T>(os, track);
  const T* xp = x.ptr();
  T* op = out.ptr();
  const int64_t n = out.size();
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t src = 0;
    for (int i = 0; i < nd; ++i) src += idx[static_cast<size_t>(i)] * gather[static_cast<size_t>(i)];
    op[flat] = xp[src];
    for (int i = nd - 1; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < os[static_cast<size_t>(i)]) break;
      idx[static_cast<size_t>(i)] = 0;
    }
  }
  if (track && x.tracked()) {
    record<T>([x, out, gather, os, nd]() mutable {
      const T* og = out.gptr();
      T* xg = x.gptr();
      std::vector<int64_t> idx2(static_cast<size_t>(nd), 0);
      const int64_t n2 = out.size();
      for (int64_t flat = 0; flat < n2; ++flat) {
        int64_t src = 0;
        for (int i = 0; i < nd; ++i) src += idx2[static_cast<size_t>(i)] * gather[static_cast<size_t>(i)];
        xg[src] += og[flat];
        for (int i = nd - 1; i >= 0; --i) {
          if (++idx2[static_cast<size_t>(i)] < os[static_cast<size_t>(i)]) break;
          idx2[static_cast<size_t>(i)] = 0;
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  const int nd = parts[0].ndim();
  if (axis < 0) axis += nd;
  Shape os = parts[0].shape;
  int total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != nd) throw DimensionError("concat rank mismatch");
    for (int i = 0; i < nd; ++i)
      if (i != axis && p.shape[static_cast<size_t>(i)] != os[static_cast<size_t>(i)])
        throw DimensionError("concat shape mismatch " + shape_str(p.shape) + " vs " + shape_str(os));
    total += p.shape[static_cast<size_t>(axis)];
  }
  os[static_cast<size_t>(axis)] = total;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= os[static_cast<size_t>(i)];
  for (int i = axis + 1; i < nd; ++i) inner *= os[static_cast<size_t>(i)];

  bool track = false;
  for (const auto& p : parts)
    if (grad_enabled_for<T>({&p})) track = true;
  Tensor<T> out = make_output<T>(os, track);
  T* op = out.ptr();
  const int64_t out_row = static_cast<int64_t>(total) * inner;
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t prow = static_cast<int64_t>(p.shape[static_cast<size_t>(axis)]) * inner;
    const T* pp = p.ptr();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(op + o * out_row + off, pp + o * prow, static_cast<size_t>(prow) * sizeof(T));
    off += prow;
  }
  if (track) {
    record<T>([parts, out, outer, out_row]() mutable {
      const T* og = out.gptr();
      int64_t off2 = 0;
      for (auto& p : parts) {
        const int64_t row = static_cast<int64_t>(p.size()) / outer;
        if (p.tracked()) {
          T* pg = p.gptr();
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < row; ++i) pg[o * row + i] += og[o * out_row + off2 + i];
        }
        off2 += row;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int len) {
  const int nd = x.ndim();
  if (axis < 0) axis += nd;
  const int extent = x.shape[static_cast<size_t>(axis)];
  if (start < 0 || len <= 0 || start + len > extent)
    throw DimensionError("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of range for axis extent " + std::to_string(extent));
  Shape os = x.shape;
  os[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < nd; ++i) inner *= x.shape[static_cast<size_t>(i)];

  bool track = grad_enabled_for<T>({&x});
  Tensor<T> out = make_output<T>(os, track);
  const T* xp = x.ptr();
  T* op = out.ptr();
  const int64_t in_row = static_cast<int64_t>(extent) * inner;
  const int64_t out_row = static_cast<int64_t>(len) * inner;
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(op + o * out_row, xp + o * in_row + start * inner,
                static_cast<size_t>(out_row) * sizeof(T));
  if (track && x.tracked()) {
    record<T>([x, out, outer, inner, in_row, out_row, start]() mutable {
      const T* og = out.gptr();
      T* xg = x.gptr();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < out_row; ++i) xg[o * in_row + start * inner + i] += og[o * out_row + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise ops

template <class T, class F, class DF>
Tensor<T> unary_op(const Tensor<T>& x, F f, DF df) {
  bool track = grad_enabled_for<T>({&x});
  Tensor<T> out = make_output<T>(x.shape, track);
  const T* xp = x.ptr();
  T* op = out.ptr();
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) op[i] = f(xp[i]);
  if (track && x.tracked()) {
    record<T>([x, out, df]() mutable {
      const T* og = out.gptr();
      const T* xp2 = x.ptr();
      const T* op2 = out.ptr();
      T* xg = x.gptr();
      const int64_t n2 = x.size();
      for (int64_t i = 0; i < n2; ++i) xg[i] += og[i] * df(xp2[i], op2[i]);
    });
  }
  return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = T(0.7071067811865475);
  const T inv_sqrt2pi = T(0.3989422804014327);
  return unary_op(
      x,
      [=](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [=](T v, T) {
        return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) +
               v * inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return unary_op(
      x, [=](T v) { return v * c; }, [=](T, T) { return c; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return unary_op(
      x, [=](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T, class F, class DFA, class DFB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, DFA dfa, DFB dfb) {
  if (a.shape != b.shape)
    throw DimensionError(std::string(name) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  bool track = grad_enabled_for<T>({&a, &b});
  Tensor<T> out = make_output<T>(a.shape, track);
  const T* ap = a.ptr();
  const T* bp = b.ptr();
  T* op = out.ptr();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) op[i] = f(ap[i], bp[i]);
  if (track) {
    record<T>([a, b, out, dfa, dfb]() mutable {
      const T* og = out.gptr();
      const T* ap2 = a.ptr();
      const T* bp2 = b.ptr();
      const int64_t n2 = a.size();
      if (a.tracked()) {
        T* ag = a.gptr();
        for (int64_t i = 0; i < n2; ++i) ag[i] += og[i] * dfa(ap2[i], bp2[i]);
      }
      if (b.tracked()) {
        T* bg = b.gptr();
        for (int64_t i = 0; i < n2; ++i) bg[i] += og[i] * dfb(ap2[i], bp2[i]);
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

/// x[..., n] + b[n]
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  const int n = x.dim(-1);
  if (b.ndim() != 1 || b.dim(0) != n)
    throw DimensionError("add_bias: bias " + shape_str(b.shape) + " vs input " + shape_str(x.shape));
  bool track = grad_enabled_for<T>({&x, &b});
  Tensor<T> out = make_output<T>(x.shape, track);
  const T* xp = x.ptr();
  const T* bp = b.ptr();
  T* op = out.ptr();
  const int64_t rows = x.size() / n;
  for (int64_t r = 0; r < rows; ++r)
    for (int i = 0; i < n; ++i) op[r * n + i] = xp[r * n + i] + bp[i];
  if (track) {
    record<T>([x, b, out, rows, n]() mutable {
      const T* og = out.gptr();
      if (x.tracked()) {
        T* xg = x.gptr();
        const int64_t total = rows * n;
        for (int64_t i = 0; i < total; ++i) xg[i] += og[i];
      }
      if (b.tracked()) {
        T* bg = b.gptr();
        for (int64_t r = 0; r < rows; ++r)
          for (int i = 0; i < n; ++i) bg[i] += og[r * n + i];
      }
    });
  }
  return out;
}

/// x[B, ...rest] + p[...rest], broadcast over the leading axis.
template <class T>
Tensor<T> add_broadcast0(const Tensor<T>& x, const Tensor<T>& p) {
  if (x.ndim() != p.ndim() + 1)
    throw DimensionError("add_broadcast0 rank: " + shape_str(x.shape) + " vs " + shape_str(p.shape));
  for (int i = 0; i < p.ndim(); ++i)
    if (x.shape[static_cast<size_t>(i + 1)] != p.shape[static_cast<size_t>(i)])
      throw DimensionError("add_broadcast0 shape: " + shape_str(x.shape) + " vs " + shape_str(p.shape));
  bool track = grad_enabled_for<T>({&x, &p});
  Tensor<T> out = make_output<T>(x.shape, track);
  const int64_t pn = p.size();
  const int64_t batch = x.dim(0);
  const T* xp = x.ptr();
  const T* pp = p.ptr();
  T* op = out.ptr();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t i = 0; i < pn; ++i) op[b * pn + i] = xp[b * pn + i] + pp[i];
  if (track) {
    record<T>([x, p, out, batch, pn]() mutable {
      const T* og = out.gptr();
      if (x.tracked()) {
        T* xg = x.gptr();
        const int64_t total = batch * pn;
        for (int64_t i = 0; i < total; ++i) xg[i] += og[i];
      }
      if (p.tracked()) {
        T* pg = p.gptr();
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t i = 0; i < pn; ++i) pg[i] += og[b * pn + i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matrix products

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                         shape_str(b.shape));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  bool track = grad_enabled_for<T>({&a, &b});
  Tensor<T> out = make_output<T>({m, n}, track);
  gemm(false, false, m, n, k, T(1), a.ptr(), k, b.ptr(), n, T(0), out.ptr(), n);
  if (track) {
    record<T>([a, b, out, m, n, k]() mutable {
      if (a.tracked())
        gemm(false, true, m, k, n, T(1), out.gptr(), n, b.ptr(), n, T(1), a.gptr(), k);
      if (b.tracked())
        gemm(true, false, k, n, m, T(1), a.ptr(), k, out.gptr(), n, T(1), b.gptr(), n);
    });
  }
  return out;
}

/// x[..., k] @ w[k, n]: leading dims folded into rows.
template <class T>
Tensor<T> matmul_folded(const Tensor<T>& x, const Tensor<T>& w) {
  if (w.ndim() != 2 || x.dim(-1) != w.dim(0))
    throw DimensionError("matmul_folded: " + shape_str(x.shape) + " @ " + shape_str(w.shape));
  const int k = w.dim(0), n = w.dim(1);
  const int64_t rows = x.size() / k;
  bool track = grad_enabled_for<T>({&x, &w});
  Shape os = x.shape;
  os.back() = n;
  Tensor<T> out = make_output<T>(os, track);
  gemm(false, false, static_cast<int>(rows), n, k, T(1), x.ptr(), k, w.ptr(), n, T(0), out.ptr(), n);
  if (track) {
    record<T>([x, w, out, rows, n, k]() mutable {
      if (x.tracked())
        gemm(false, true, static_cast<int>(rows), k, n, T(1), out.gptr(), n, w.ptr(), n, T(1),
             x.gptr(), k);
      if (w.tracked())
        gemm(true, false, k, n, static_cast<int>(rows), T(1), x.ptr(), k, out.gptr(), n, T(1),
             w.gptr(), n);
    });
  }
  return out;
}

/// Batched matmul with optional transposes; either operand may be 2-D and is
/// then broadcast across the batch.
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool ta = false, bool tb = false) {
  const bool a_batched = a.ndim() == 3;
  const bool b_batched = b.ndim() == 3;
  if ((a.ndim() != 2 && a.ndim() != 3) || (b.ndim() != 2 && b.ndim() != 3) ||
      (!a_batched && !b_batched))
    throw DimensionError("bmm: need at least one 3-D operand, got " + shape_str(a.shape) + " and " +
                         shape_str(b.shape));
  const int batch = a_batched ? a.dim(0) : b.dim(0);
  if (a_batched && b_batched && a.dim(0) != b.dim(0))
    throw DimensionError("bmm: batch mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const int am = a.dim(a_batched ? 1 : 0), an = a.dim(a_batched ? 2 : 1);
  const int bm = b.dim(b_batched ? 1 : 0), bn = b.dim(b_batched ? 2 : 1);
  const int m = ta ? an : am, ka = ta ? am : an;
  const int kb = tb ? bn : bm, n = tb ? bm : bn;
  if (ka != kb)
    throw DimensionError("bmm: inner dim mismatch " + shape_str(a.shape) + (ta ? "^T" : "") +
                         " and " + shape_str(b.shape) + (tb ? "^T" : ""));
  const int k = ka;
  const int64_t a_step = a_batched ? static_cast<int64_t>(am) * an : 0;
  const int64_t b_step = b_batched ? static_cast<int64_t>(bm) * bn : 0;
  const int lda = an, ldb = bn;
  bool track = grad_enabled_for<T>({&a, &b});
  Tensor<T> out = make_output<T>({batch, m, n}, track);
  for (int i = 0; i < batch; ++i)
    gemm(ta, tb, m, n, k, T(1), a.ptr() + i * a_step, lda, b.ptr() + i * b_step, ldb, T(0),
         out.ptr() + static_cast<int64_t>(i) * m * n, n);
  if (track) {
    record<T>([a, b, out, batch, m, n, k, ta, tb, a_step, b_step, lda, ldb]() mutable {
      const int64_t o_step = static_cast<int64_t>(m) * n;
      for (int i = 0; i < batch; ++i) {
        const T* go = out.gptr() + i * o_step;
        const T* ap = a.ptr() + i * a_step;
        const T* bp = b.ptr() + i * b_step;
        if (a.tracked()) {
          T* ag = a.gptr() + i * a_step;
          // dA = ta ? (op(B) dC^T)^... handle four cases explicitly
          if (!ta)
            gemm(false, !tb, m, k, n, T(1), go, n, bp, ldb, T(1), ag, lda);
          else
            gemm(tb, true, k, m, n, T(1), bp, ldb, go, n, T(1), ag, lda);
        }
        if (b.tracked()) {
          T* bg = b.gptr() + i * b_step;
          if (!tb)
            gemm(!ta, false, k, n, m, T(1), ap, lda, go, n, T(1), bg, ldb);
          else
            gemm(true, ta, n, k, m, T(1), go, n, ap, lda, T(1), bg, ldb);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization / softmax

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1) {
  const int nd = x.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd)
    throw DimensionError("softmax: invalid axis for " + shape_str(x.shape));
  const int n = x.shape[static_cast<size_t>(axis)];
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < nd; ++i) inner *= x.shape[static_cast<size_t>(i)];

  bool track = grad_enabled_for<T>({&x});
  Tensor<T> out = make_output<T>(x.shape, track);
  const T* xp = x.ptr();
  T* op = out.ptr();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * n * inner + in;
      T mx = xp[base];
      for (int i = 0; i < n; ++i) {
        const T v = xp[base + i * inner];
        if (v != v) throw NumericError("softmax: NaN in input");
        if (v > mx) mx = v;
      }
      T sum = T(0);
      for (int i = 0; i < n; ++i) {
        const T e = std::exp(xp[base + i * inner] - mx);
        op[base + i * inner] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (int i = 0; i < n; ++i) op[base + i * inner] *= inv;
    }
  }
  if (track && x.tracked()) {
    record<T>([x, out, outer, inner, n]() mutable {
      const T* og = out.gptr();
      const T* op2 = out.ptr();
      T* xg = x.gptr();
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t base = o * n * inner + in;
          T dot = T(0);
          for (int i = 0; i < n; ++i) dot += og[base + i * inner] * op2[base + i * inner];
          for (int i = 0; i < n; ++i)
            xg[base + i * inner] += op2[base + i * inner] * (og[base + i * inner] - dot);
        }
      }
    });
  }
  return out;
}

/// Layer norm over the last axis with affine parameters.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  const int n = x.dim(-1);
  if (gamma.size() != n || beta.size() != n)
    throw DimensionError("layer_norm: affine params mismatch dim " + std::to_string(n));
  bool track = grad_enabled_for<T>({&x, &gamma, &beta});
  Tensor<T> out = make_output<T>(x.shape, track);
  const int64_t rows = x.size() / n;
  // xhat retained for backward
  auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.size()));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  const T* xp = x.ptr();
  const T* gp = gamma.ptr();
  const T* bp = beta.ptr();
  T* op = out.ptr();
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = xp + r * n;
    T mean = T(0);
    for (int i = 0; i < n; ++i) mean += row[i];
    mean /= T(n);
    T var = T(0);
    for (int i = 0; i < n; ++i) {
      const T d = row[i] - mean;
      var += d * d;
    }
    var /= T(n);
    const T istd = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(r)] = istd;
    for (int i = 0; i < n; ++i) {
      const T h = (row[i] - mean) * istd;
      (*xhat)[static_cast<size_t>(r * n + i)] = h;
      op[r * n + i] = h * gp[i] + bp[i];
    }
  }
  if (track) {
    record<T>([x, gamma, beta, out, xhat, inv_std, rows, n]() mutable {
      const T* og = out.gptr();
      const T* gp2 = gamma.ptr();
      for (int64_t r = 0; r < rows; ++r) {
        const T* go = og + r * n;
        const T* h = xhat->data() + r * n;
        if (gamma.tracked()) {
          T* gg = gamma.gptr();
          for (int i = 0; i < n; ++i) gg[i] += go[i] * h[i];
        }
        if (beta.tracked()) {
          T* bg = beta.gptr();
          for (int i = 0; i < n; ++i) bg[i] += go[i];
        }
        if (x.tracked()) {
          T* xg = x.gptr() + r * n;
          const T istd = (*inv_std)[static_cast<size_t>(r)];
          T sum_g = T(0), sum_gh = T(0);
          for (int i = 0; i < n; ++i) {
            const T gi = go[i] * gp2[i];
            sum_g += gi;
            sum_gh += gi * h[i];
          }
          const T inv_n = T(1) / T(n);
          for (int i = 0; i < n; ++i) {
            const T gi = go[i] * gp2[i];
            xg[i] += istd * (gi - inv_n * sum_g - h[i] * inv_n * sum_gh);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// convolution

namespace detail {
template <class T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int stride, int pad, int ho, int wo,
            T* col) {
  // col layout: [c*kh*kw, ho*wo]
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* dst = col + ((static_cast<int64_t>(ci) * kh + ki) * kw + kj) * ho * wo;
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) {
            std::fill(dst + static_cast<int64_t>(oi) * wo, dst + static_cast<int64_t>(oi + 1) * wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<int64_t>(ci) * h + ii) * w;
          for (int oj = 0; oj < wo; ++oj) {
            const int jj = oj * stride + kj - pad;
            dst[static_cast<int64_t>(oi) * wo + oj] = (jj >= 0 && jj < w) ? src[jj] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, int c, int h, int w, int kh, int kw, int stride, int pad, int ho, int wo,
            T* x) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* src = col + ((static_cast<int64_t>(ci) * kh + ki) * kw + kj) * ho * wo;
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) continue;
          T* dst = x + (static_cast<int64_t>(ci) * h + ii) * w;
          for (int oj = 0; oj < wo; ++oj) {
            const int jj = oj * stride + kj - pad;
            if (jj >= 0 && jj < w) dst[jj] += src[static_cast<int64_t>(oi) * wo + oj];
          }
        }
      }
    }
  }
}
}  // namespace detail

/// Cross-correlation conv. x: [B,C,H,W], w: [O,C,kh,kw], bias: [O] or empty.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                 int pad) {
  if (x.ndim() != 4 || w.ndim() != 4)
    throw DimensionError("conv2d: need 4-D input and kernel, got " + shape_str(x.shape) + " and " +
                         shape_str(w.shape));
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != C)
    throw DimensionError("conv2d: channel mismatch " + shape_str(x.shape) + " vs " + shape_str(w.shape));
  if (kh > H + 2 * pad || kw > W + 2 * pad)
    throw DimensionError("conv2d: kernel " + shape_str(w.shape) + " larger than padded input " +
                         shape_str(x.shape));
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  const bool has_bias = bias.data != nullptr;

  bool track = grad_enabled_for<T>({&x, &w}) || (has_bias && grad_enabled_for<T>({&bias}));
  Tensor<T> out = make_output<T>({B, O, Ho, Wo}, track);
  const int ck = C * kh * kw;
  const int64_t spatial = static_cast<int64_t>(Ho) * Wo;
  std::vector<T> col(static_cast<size_t>(ck) * spatial);
  for (int b = 0; b < B; ++b) {
    detail::im2col(x.ptr() + static_cast<int64_t>(b) * C * H * W, C, H, W, kh, kw, stride, pad, Ho,
                   Wo, col.data());
    gemm(false, false, O, static_cast<int>(spatial), ck, T(1), w.ptr(), ck, col.data(),
         static_cast<int>(spatial), T(0), out.ptr() + static_cast<int64_t>(b) * O * spatial,
         static_cast<int>(spatial));
    if (has_bias) {
      T* op = out.ptr() + static_cast<int64_t>(b) * O * spatial;
      for (int o = 0; o < O; ++o)
        for (int64_t s = 0; s < spatial; ++s) op[o * spatial + s] += bias.ptr()[o];
    }
  }
  if (track) {
    Tensor<T> bias_c = bias;  // may be empty handle
    record<T>([x, w, bias_c, out, B, C, H, W, O, kh, kw, stride, pad, Ho, Wo, has_bias]() mutable {
      const int ck2 = C * kh * kw;
      const int64_t spatial2 = static_cast<int64_t>(Ho) * Wo;
      std::vector<T> col2(static_cast<size_t>(ck2) * spatial2);
      std::vector<T> dcol(static_cast<size_t>(ck2) * spatial2);
      for (int b = 0; b < B; ++b) {
        const T* go = out.gptr() + static_cast<int64_t>(b) * O * spatial2;
        if (w.tracked() || x.tracked())
          detail::im2col(x.ptr() + static_cast<int64_t>(b) * C * H * W, C, H, W, kh, kw, stride,
                         pad, Ho, Wo, col2.data());
        if (w.tracked())
          gemm(false, true, O, ck2, static_cast<int>(spatial2), T(1), go,
               static_cast<int>(spatial2), col2.data(), static_cast<int>(spatial2), T(1), w.gptr(),
               ck2);
        if (x.tracked()) {
          gemm(true, false, ck2, static_cast<int>(spatial2), O, T(1), w.ptr(), ck2, go,
               static_cast<int>(spatial2), T(0), dcol.data(), static_cast<int>(spatial2));
          detail::col2im(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                         x.gptr() + static_cast<int64_t>(b) * C * H * W);
        }
        if (has_bias && bias_c.tracked()) {
          T* bg = bias_c.gptr();
          for (int o = 0; o < O; ++o)
            for (int64_t s = 0; s < spatial2; ++s) bg[o] += go[o * spatial2 + s];
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  if (x.ndim() != 4) throw DimensionError("upsample_nearest2x: need 4-D input");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  bool track = grad_enabled_for<T>({&x});
  Tensor<T> out = make_output<T>({B, C, 2 * H, 2 * W}, track);
  const T* xp = x.ptr();
  T* op = out.ptr();
  for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
    const T* src = xp + bc * H * W;
    T* dst = op + bc * 4 * H * W;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const T v = src[i * W + j];
        dst[(2 * i) * 2 * W + 2 * j] = v;
        dst[(2 * i) * 2 * W + 2 * j + 1] = v;
        dst[(2 * i + 1) * 2 * W + 2 * j] = v;
        dst[(2 * i + 1) * 2 * W + 2 * j + 1] = v;
      }
  }
  if (track && x.tracked()) {
    record<T>([x, out, B, C, H, W]() mutable {
      const T* og = out.gptr();
      T* xg = x.gptr();
      for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
        const T* gsrc = og + bc * 4 * H * W;
        T* gdst = xg + bc * H * W;
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j)
            gdst[i * W + j] += gsrc[(2 * i) * 2 * W + 2 * j] + gsrc[(2 * i) * 2 * W + 2 * j + 1] +
                               gsrc[(2 * i + 1) * 2 * W + 2 * j] +
                               gsrc[(2 * i + 1) * 2 * W + 2 * j + 1];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions / lookups / losses

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  bool track = grad_enabled_for<T>({&x});
  Tensor<T> out = make_output<T>({1}, track);
  const T* xp = x.ptr();
  T s = T(0);
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) s += xp[i];
  (*out.data)[0] = s;
  if (track && x.tracked()) {
    record<T>([x, out]() mutable {
      const T g = (*out.grad)[0];
      T* xg = x.gptr();
      const int64_t n2 = x.size();
      for (int64_t i = 0; i < n2; ++i) xg[i] += g;
    });
  }
  return out;
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& x) {
  Tensor<T> s = sum_all(x);
  return scale(s, T(1) / T(x.size()));
}

template <class T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<int>& idx) {
  if (table.ndim() != 2) throw DimensionError("embedding_lookup: table must be 2-D");
  const int V = table.dim(0), D = table.dim(1);
  for (int i : idx)
    if (i < 0 || i >= V)
      throw LabelError("embedding_lookup: index " + std::to_string(i) + " out of [0," +
                       std::to_string(V) + ")");
  const int N = static_cast<int>(idx.size());
  bool track = grad_enabled_for<T>({&table});
  Tensor<T> out = make_output<T>({N, D}, track);
  for (int i = 0; i < N; ++i)
    std::memcpy(out.ptr() + static_cast<int64_t>(i) * D, table.ptr() + static_cast<int64_t>(idx[static_cast<size_t>(i)]) * D,
                static_cast<size_t>(D) * sizeof(T));
  if (track && table.tracked()) {
    record<T>([table, out, idx, N, D]() mutable {
      const T* og = out.gptr();
      T* tg = table.gptr();
      for (int i = 0; i < N; ++i)
        for (int d = 0; d < D; ++d) tg[static_cast<int64_t>(idx[static_cast<size_t>(i)]) * D + d] += og[static_cast<int64_t>(i) * D + d];
    });
  }
  return out;
}

/// Mean negative log-likelihood over positions. logits: [..., C] folded to rows,
/// targets: one class index per row. ignore_index < 0 disables ignoring.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                        int ignore_index = -1) {
  const int C = logits.dim(-1);
  const int64_t rows = logits.size() / C;
  if (static_cast<int64_t>(targets.size()) != rows)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  for (int t : targets)
    if (t != ignore_index && (t < 0 || t >= C))
      throw LabelError("cross_entropy: class index " + std::to_string(t) + " out of [0," +
                       std::to_string(C) + ")");
  bool track = grad_enabled_for<T>({&logits});
  Tensor<T> out = make_output<T>({1}, track);
  const T* lp = logits.ptr();
  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(logits.size()));
  int64_t counted = 0;
  T loss = T(0);
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = lp + r * C;
    T mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    T sum = T(0);
    for (int c = 0; c < C; ++c) {
      const T e = std::exp(row[c] - mx);
      (*probs)[static_cast<size_t>(r * C + c)] = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (int c = 0; c < C; ++c) (*probs)[static_cast<size_t>(r * C + c)] *= inv;
    const int t = targets[static_cast<size_t>(r)];
    if (t == ignore_index) continue;
    loss += mx + std::log(sum) - row[t];
    ++counted;
  }
  if (counted == 0) throw UsageError("cross_entropy: no non-ignored positions");
  (*out.data)[0] = loss / T(counted);
  if (track && logits.tracked()) {
    record<T>([logits, out, probs, targets, rows, C, counted, ignore_index]() mutable {
      const T g = (*out.grad)[0] / T(counted);
      T* lg = logits.gptr();
      for (int64_t r = 0; r < rows; ++r) {
        const int t = targets[static_cast<size_t>(r)];
        if (t == ignore_index) continue;
        for (int c = 0; c < C; ++c)
          lg[r * C + c] += g * ((*probs)[static_cast<size_t>(r * C + c)] - (c == t ? T(1) : T(0)));
      }
    });
  }
  return out;
}

template <class T>
void check_finite(const Tensor<T>& x, const std::string& name) {
  const T* p = x.ptr();
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i)
    if (!std::isfinite(static_cast<double>(p[i])))
      throw NumericError("non-finite value in " + name + " at flat index " + std::to_string(i));
}

}  // namespace matrn
