#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

#include "arithlab/nn/tensor.hpp"

namespace arithlab::nn {

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::initializer_list<Tensor<T>> parents) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  Tensor<T> out(std::move(shape), rg);
  if (rg) {
    for (const auto& p : parents) out.node()->parents.push_back(p.node());
  }
  return out;
}

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Rows/cols view of a tensor whose last dim is the feature dim.
template <typename T>
std::size_t leading_rows(const Tensor<T>& t) {
  return t.size() / t.shape().back();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor<T> out = detail::make_result<T>(a.shape(), {a, b});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (out.requires_grad()) {
    auto *an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
    out.node()->backward_fn = [an, bn, on, n] {
      const T* g = on->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        T* ga = an->grad.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> out = detail::make_result<T>(a.shape(), {a, b});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (out.requires_grad()) {
    auto *an = a.node().get(), *bn = b.node().get(), *on = out.node().get();
    out.node()->backward_fn = [an, bn, on, n] {
      const T* g = on->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        T* ga = an->grad.data();
        const T* vb = bn->value.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * vb[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data();
        const T* va = an->value.data();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * va[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> out = detail::make_result<T>(a.shape(), {a});
  const T* pa = a.data();
  T* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * c;
  if (out.requires_grad()) {
    auto *an = a.node().get(), *on = out.node().get();
    out.node()->backward_fn = [an, on, c, n] {
      an->ensure_grad();
      const T* g = on->grad.data();
      T* ga = an->grad.data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * c;
    };
  }
  return out;
}

// Tanh-approximation GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T k0 = T{0.7978845608028654};  // sqrt(2/pi)
  constexpr T k1 = T{0.044715};
  Tensor<T> out = detail::make_result<T>(a.shape(), {a});
  const T* pa = a.data();
  T* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T x = pa[i];
    po[i] = T{0.5} * x * (T{1} + std::tanh(k0 * (x + k1 * x * x * x)));
  }
  if (out.requires_grad()) {
    auto *an = a.node().get(), *on = out.node().get();
    out.node()->backward_fn = [an, on, n] {
      an->ensure_grad();
      const T* g = on->grad.data();
      const T* x = an->value.data();
      T* ga = an->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        const T u = k0 * (x[i] + k1 * x[i] * x[i] * x[i]);
        const T t = std::tanh(u);
        const T du = k0 * (T{1} + T{3} * k1 * x[i] * x[i]);
        const T d = T{0.5} * (T{1} + t) + T{0.5} * x[i] * (T{1} - t * t) * du;
        ga[i] += g[i] * d;
      }
    };
  }
  return out;
}

// Scalar sum of all elements.
template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  Tensor<T> out = detail::make_result<T>({1}, {a});
  const T* pa = a.data();
  T acc{0};
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) acc += pa[i];
  out.data()[0] = acc;
  if (out.requires_grad()) {
    auto *an = a.node().get(), *on = out.node().get();
    out.node()->backward_fn = [an, on, n] {
      an->ensure_grad();
      const T g = on->grad[0];
      T* ga = an->grad.data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

// y[..., N] = x[..., K] . w[K, N] (+ b[N]); leading dims of x are batch.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::require(w.rank() == 2, "linear: weight must be 2-d");
  const std::size_t k = w.dim(0), nout = w.dim(1);
  detail::require(x.shape().back() == k, "linear: inner dims differ");
  const bool has_bias = b.defined();
  if (has_bias)
    detail::require(b.rank() == 1 && b.dim(0) == nout, "linear: bias shape mismatch");

  Shape out_shape = x.shape();
  out_shape.back() = nout;
  Tensor<T> out = has_bias ? detail::make_result<T>(out_shape, {x, w, b})
                           : detail::make_result<T>(out_shape, {x, w});
  const std::size_t rows = detail::leading_rows(x);
  const T* px = x.data();
  const T* pw = w.data();
  T* po = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* yr = po + r * nout;
    if (has_bias) {
      const T* pb = b.data();
      for (std::size_t j = 0; j < nout; ++j) yr[j] = pb[j];
    } else {
      for (std::size_t j = 0; j < nout; ++j) yr[j] = T{0};
    }
    const T* xr = px + r * k;
    for (std::size_t i = 0; i < k; ++i) {
      const T a = xr[i];
      const T* wr = pw + i * nout;
      for (std::size_t j = 0; j < nout; ++j) yr[j] += a * wr[j];
    }
  }
  if (out.requires_grad()) {
    auto *xn = x.node().get(), *wn = w.node().get(), *on = out.node().get();
    auto* bn = has_bias ? b.node().get() : nullptr;
    out.node()->backward_fn = [xn, wn, bn, on, rows, k, nout] {
      const T* g = on->grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        T* gx = xn->grad.data();
        const T* pw = wn->value.data();
        // dx = g . w^T; transposing w keeps the inner loop stride-1.
        std::vector<T> wt(k * nout);
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < nout; ++j) wt[j * k + i] = pw[i * nout + j];
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g + r * nout;
          T* gxr = gx + r * k;
          for (std::size_t j = 0; j < nout; ++j) {
            const T a = gr[j];
            const T* wr = wt.data() + j * k;
            for (std::size_t i = 0; i < k; ++i) gxr[i] += a * wr[i];
          }
        }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        T* gw = wn->grad.data();
        const T* px = xn->value.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* xr = px + r * k;
          const T* gr = g + r * nout;
          for (std::size_t i = 0; i < k; ++i) {
            const T a = xr[i];
            T* gwr = gw + i * nout;
            for (std::size_t j = 0; j < nout; ++j) gwr[j] += a * gr[j];
          }
        }
      }
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g + r * nout;
          for (std::size_t j = 0; j < nout; ++j) gb[j] += gr[j];
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2, "matmul: 2-d tensors expected");
  return linear(a, b, Tensor<T>{});
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require(a.rank() == 2, "transpose: 2-d tensor expected");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out = detail::make_result<T>({n, m}, {a});
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
  if (out.requires_grad()) {
    auto *an = a.node().get(), *on = out.node().get();
    out.node()->backward_fn = [an, on, m, n] {
      an->ensure_grad();
      const T* g = on->grad.data();
      T* ga = an->grad.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attention-shaped kernels

// [B,S,H*dh] -> [B,H,S,dh]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  detail::require(x.rank() == 3, "split_heads: [B,S,D] expected");
  const std::size_t bsz = x.dim(0), s = x.dim(1), d = x.dim(2);
  detail::require(d % heads == 0, "split_heads: D not divisible by heads");
  const std::size_t dh = d / heads;
  Tensor<T> out = detail::make_result<T>({bsz, heads, s, dh}, {x});
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t h = 0; h < heads; ++h) {
        const T* src = px + (b * s + i) * d + h * dh;
        T* dst = po + ((b * heads + h) * s + i) * dh;
        std::copy(src, src + dh, dst);
      }
  if (out.requires_grad()) {
    auto *xn = x.node().get(), *on = out.node().get();
    out.node()->backward_fn = [xn, on, bsz, s, d, heads, dh] {
      xn->ensure_grad();
      const T* g = on->grad.data();
      T* gx = xn->grad.data();
      for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t i = 0; i < s; ++i)
          for (std::size_t h = 0; h < heads; ++h) {
            const T* src = g + ((b * heads + h) * s + i) * dh;
            T* dst = gx + (b * s + i) * d + h * dh;
            for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
          }
    };
  }
  return out;
}

// [B,H,S,dh] -> [B,S,H*dh]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  detail::require(x.rank() == 4, "merge_heads: [B,H,S,dh] expected");
  const std::size_t bsz = x.dim(0), heads = x.dim(1), s = x.dim(2), dh = x.dim(3);
  const std::size_t d = heads * dh;
  Tensor<T> out = detail::make_result<T>({bsz, s, d}, {x});
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < s; ++i) {
        const T* src = px + ((b * heads + h) * s + i) * dh;
        T* dst = po + (b * s + i) * d + h * dh;
        std::copy(src, src + dh, dst);
      }
  if (out.requires_grad()) {
    auto *xn = x.node().get(), *on = out.node().get();
    out.node()->backward_fn = [xn, on, bsz, s, d, heads, dh] {
      xn->ensure_grad();
      const T* g = on->grad.data();
      T* gx = xn->grad.data();
      for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t i = 0; i < s; ++i) {
            const T* src = g + (b * s + i) * d + h * dh;
            T* dst = gx + ((b * heads + h) * s + i) * dh;
            for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
          }
    };
  }
  return out;
}

// scores[b,h,i,j] = alpha * <q[b,h,i,:], k[b,h,j,:]>
template <typename T>
Tensor<T> attn_scores(const Tensor<T>& q, const Tensor<T>& k, T alpha) {
  detail::require(q.rank() == 4 && q.shape() == k.shape(), "attn_scores: shape mismatch");
  const std::size_t bh = q.dim(0) * q.dim(1), s = q.dim(2), dh = q.dim(3);
  Tensor<T> out = detail::make_result<T>({q.dim(0), q.dim(1), s, s}, {q, k});
  const T* pq = q.data();
  const T* pk = k.data();
  T* po = out.data();
  for (std::size_t g = 0; g < bh; ++g) {
    const T* qg = pq + g * s * dh;
    const T* kg = pk + g * s * dh;
    T* og = po + g * s * s;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        T acc{0};
        const T* qi = qg + i * dh;
        const T* kj = kg + j * dh;
        for (std::size_t d = 0; d < dh; ++d) acc += qi[d] * kj[d];
        og[i * s + j] = acc * alpha;
      }
  }
  if (out.requires_grad()) {
    auto *qn = q.node().get(), *kn = k.node().get(), *on = out.node().get();
    out.node()->backward_fn = [qn, kn, on, bh, s, dh, alpha] {
      const T* g = on->grad.data();
      if (qn->requires_grad) {
        qn->ensure_grad();
        T* gq = qn->grad.data();
        const T* pk = kn->value.data();
        for (std::size_t b = 0; b < bh; ++b)
          for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < s; ++j) {
              const T gij = g[(b * s + i) * s + j] * alpha;
              const T* kj = pk + (b * s + j) * dh;
              T* qi = gq + (b * s + i) * dh;
              for (std::size_t d = 0; d < dh; ++d) qi[d] += gij * kj[d];
            }
      }
      if (kn->requires_grad) {
        kn->ensure_grad();
        T* gk = kn->grad.data();
        const T* pq = qn->value.data();
        for (std::size_t b = 0; b < bh; ++b)
          for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < s; ++j) {
              const T gij = g[(b * s + i) * s + j] * alpha;
              const T* qi = pq + (b * s + i) * dh;
              T* kj = gk + (b * s + j) * dh;
              for (std::size_t d = 0; d < dh; ++d) kj[d] += gij * qi[d];
            }
      }
    };
  }
  return out;
}

// Softmax over the last axis restricted to j <= i; positions j > i get 0.
template <typename T>
Tensor<T> causal_softmax(const Tensor<T>& scores) {
  detail::require(scores.rank() == 4 && scores.dim(2) == scores.dim(3),
                  "causal_softmax: [B,H,S,S] expected");
  const std::size_t bh = scores.dim(0) * scores.dim(1), s = scores.dim(2);
  Tensor<T> out = detail::make_result<T>(scores.shape(), {scores});
  const T* ps = scores.data();
  T* po = out.data();
  for (std::size_t g = 0; g < bh; ++g)
    for (std::size_t i = 0; i < s; ++i) {
      const T* row = ps + (g * s + i) * s;
      T* orow = po + (g * s + i) * s;
      T mx = row[0];
      for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
      T denom{0};
      for (std::size_t j = 0; j <= i; ++j) {
        orow[j] = std::exp(row[j] - mx);
        denom += orow[j];
      }
      const T inv = T{1} / denom;
      for (std::size_t j = 0; j <= i; ++j) orow[j] *= inv;
      for (std::size_t j = i + 1; j < s; ++j) orow[j] = T{0};
    }
  if (out.requires_grad()) {
    auto *sn = scores.node().get(), *on = out.node().get();
    out.node()->backward_fn = [sn, on, bh, s] {
      sn->ensure_grad();
      const T* g = on->grad.data();
      const T* p = on->value.data();
      T* gs = sn->grad.data();
      for (std::size_t b = 0; b < bh; ++b)
        for (std::size_t i = 0; i < s; ++i) {
          const T* gr = g + (b * s + i) * s;
          const T* pr = p + (b * s + i) * s;
          T* sr = gs + (b * s + i) * s;
          T dot{0};
          for (std::size_t j = 0; j <= i; ++j) dot += gr[j] * pr[j];
          for (std::size_t j = 0; j <= i; ++j) sr[j] += pr[j] * (gr[j] - dot);
        }
    };
  }
  return out;
}

// ctx[b,h,i,:] = sum_j p[b,h,i,j] * v[b,h,j,:]
template <typename T>
Tensor<T> attn_mix(const Tensor<T>& probs, const Tensor<T>& v) {
  detail::require(probs.rank() == 4 && v.rank() == 4, "attn_mix: 4-d tensors expected");
  detail::require(probs.dim(3) == v.dim(2), "attn_mix: inner dims differ");
  const std::size_t bh = probs.dim(0) * probs.dim(1), s = probs.dim(2), dh = v.dim(3);
  Tensor<T> out = detail::make_result<T>({v.dim(0), v.dim(1), s, dh}, {probs, v});
  const T* pp = probs.data();
  const T* pv = v.data();
  T* po = out.data();
  for (std::size_t g = 0; g < bh; ++g) {
    const T* pg = pp + g * s * s;
    const T* vg = pv + g * s * dh;
    T* og = po + g * s * dh;
    for (std::size_t i = 0; i < s; ++i) {
      T* oi = og + i * dh;
      std::fill(oi, oi + dh, T{0});
      for (std::size_t j = 0; j <= i; ++j) {  // causal rows are zero past i
        const T pij = pg[i * s + j];
        if (pij == T{0}) continue;
        const T* vj = vg + j * dh;
        for (std::size_t d = 0; d < dh; ++d) oi[d] += pij * vj[d];
      }
    }
  }
  if (out.requires_grad()) {
    auto *pn = probs.node().get(), *vn = v.node().get(), *on = out.node().get();
    out.node()->backward_fn = [pn, vn, on, bh, s, dh] {
      const T* g = on->grad.data();
      if (pn->requires_grad) {
        pn->ensure_grad();
        T* gp = pn->grad.data();
        const T* pv = vn->value.data();
        for (std::size_t b = 0; b < bh; ++b)
          for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < s; ++j) {
              const T* gi = g + (b * s + i) * dh;
              const T* vj = pv + (b * s + j) * dh;
              T acc{0};
              for (std::size_t d = 0; d < dh; ++d) acc += gi[d] * vj[d];
              gp[(b * s + i) * s + j] += acc;
            }
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        T* gv = vn->grad.data();
        const T* pp = pn->value.data();
        for (std::size_t b = 0; b < bh; ++b)
          for (std::size_t i = 0; i < s; ++i) {
            const T* gi = g + (b * s + i) * dh;
            for (std::size_t j = 0; j <= i; ++j) {
              const T pij = pp[(b * s + i) * s + j];
              if (pij == T{0}) continue;
              T* vj = gv + (b * s + j) * dh;
              for (std::size_t d = 0; d < dh; ++d) vj[d] += pij * gi[d];
            }
          }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and softmax

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T{1e-5}) {
  const std::size_t d = x.shape().back();
  detail::require(gain.rank() == 1 && gain.dim(0) == d, "layer_norm: gain shape");
  detail::require(bias.rank() == 1 && bias.dim(0) == d, "layer_norm: bias shape");
  const std::size_t rows = detail::leading_rows(x);
  Tensor<T> out = detail::make_result<T>(x.shape(), {x, gain, bias});
  // rstd/xhat cached for backward
  auto rstd = std::make_shared<std::vector<T>>(rows);
  auto xhat = std::make_shared<std::vector<T>>(rows * d);
  const T* px = x.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  T* po = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = px + r * d;
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) {
      const T c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rs = T{1} / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    T* hr = xhat->data() + r * d;
    T* yr = po + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mean) * rs;
      yr[j] = hr[j] * pg[j] + pb[j];
    }
  }
  if (out.requires_grad()) {
    auto *xn = x.node().get(), *gn = gain.node().get(), *bn = bias.node().get(), *on = out.node().get();
    out.node()->backward_fn = [xn, gn, bn, on, rstd, xhat, rows, d] {
      const T* g = on->grad.data();
      const T* pg = gn->value.data();
      if (gn->requires_grad) {
        gn->ensure_grad();
        T* gg = gn->grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g + r * d;
          const T* hr = xhat->data() + r * d;
          for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * hr[j];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g + r * d;
          for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
        }
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        T* gx = xn->grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g + r * d;
          const T* hr = xhat->data() + r * d;
          const T rs = (*rstd)[r];
          T sum_gh{0}, sum_ghh{0};
          for (std::size_t j = 0; j < d; ++j) {
            const T gh = gr[j] * pg[j];
            sum_gh += gh;
            sum_ghh += gh * hr[j];
          }
          const T inv_d = T{1} / static_cast<T>(d);
          T* xr = gx + r * d;
          for (std::size_t j = 0; j < d; ++j) {
            const T gh = gr[j] * pg[j];
            xr[j] += rs * (gh - inv_d * sum_gh - hr[j] * inv_d * sum_ghh);
          }
        }
      }
    };
  }
  return out;
}

// Softmax over an arbitrary axis, max-stabilized.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  detail::require(axis < x.rank(), "softmax: axis out of range");
  const std::size_t n = x.dim(axis);
  std::size_t inner = 1, outer = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  Tensor<T> out = detail::make_result<T>(x.shape(), {x});
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = px[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, px[base + j * inner]);
      T denom{0};
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(px[base + j * inner] - mx);
        po[base + j * inner] = e;
        denom += e;
      }
      const T inv = T{1} / denom;
      for (std::size_t j = 0; j < n; ++j) po[base + j * inner] *= inv;
    }
  if (out.requires_grad()) {
    auto *xn = x.node().get(), *on = out.node().get();
    out.node()->backward_fn = [xn, on, outer, inner, n] {
      xn->ensure_grad();
      const T* g = on->grad.data();
      const T* p = on->value.data();
      T* gx = xn->grad.data();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          T dot{0};
          for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * p[base + j * inner];
          for (std::size_t j = 0; j < n; ++j)
            gx[base + j * inner] += p[base + j * inner] * (g[base + j * inner] - dot);
        }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings

// Gathers table rows: out[i,:] = table[ids[i],:], reshaped to [B,S,D].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids, std::size_t bsz,
                    std::size_t s) {
  detail::require(table.rank() == 2, "embedding: table must be [V,D]");
  detail::require(ids.size() == bsz * s, "embedding: id count mismatch");
  const std::size_t v = table.dim(0), d = table.dim(1);
  Tensor<T> out = detail::make_result<T>({bsz, s, d}, {table});
  const T* pt = table.data();
  T* po = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = ids[i];
    detail::require(id >= 0 && static_cast<std::size_t>(id) < v, "embedding: id out of range");
    std::copy(pt + static_cast<std::size_t>(id) * d, pt + (static_cast<std::size_t>(id) + 1) * d,
              po + i * d);
  }
  if (out.requires_grad()) {
    auto *tn = table.node().get(), *on = out.node().get();
    std::vector<std::int32_t> ids_copy(ids.begin(), ids.end());
    out.node()->backward_fn = [tn, on, ids_copy = std::move(ids_copy), d] {
      tn->ensure_grad();
      const T* g = on->grad.data();
      T* gt = tn->grad.data();
      for (std::size_t i = 0; i < ids_copy.size(); ++i) {
        T* row = gt + static_cast<std::size_t>(ids_copy[i]) * d;
        const T* gr = g + i * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += gr[j];
      }
    };
  }
  return out;
}

// y[b,s,:] = x[b,s,:] + pos[s,:], broadcasting pos over the batch. pos may
// be longer than S; only the first S rows are used.
template <typename T>
Tensor<T> add_position(const Tensor<T>& x, const Tensor<T>& pos) {
  detail::require(x.rank() == 3 && pos.rank() == 2, "add_position: [B,S,D] + [C,D]");
  const std::size_t bsz = x.dim(0), s = x.dim(1), d = x.dim(2);
  detail::require(pos.dim(0) >= s && pos.dim(1) == d, "add_position: pos too short");
  Tensor<T> out = detail::make_result<T>(x.shape(), {x, pos});
  const T* px = x.data();
  const T* pp = pos.data();
  T* po = out.data();
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t i = 0; i < s; ++i) {
      const T* xr = px + (b * s + i) * d;
      const T* pr = pp + i * d;
      T* yr = po + (b * s + i) * d;
      for (std::size_t j = 0; j < d; ++j) yr[j] = xr[j] + pr[j];
    }
  if (out.requires_grad()) {
    auto *xn = x.node().get(), *pn = pos.node().get(), *on = out.node().get();
    out.node()->backward_fn = [xn, pn, on, bsz, s, d] {
      const T* g = on->grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        T* gx = xn->grad.data();
        const std::size_t n = bsz * s * d;
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
      }
      if (pn->requires_grad) {
        pn->ensure_grad();
        T* gp = pn->grad.data();
        for (std::size_t b = 0; b < bsz; ++b)
          for (std::size_t i = 0; i < s; ++i) {
            const T* gr = g + (b * s + i) * d;
            T* pr = gp + i * d;
            for (std::size_t j = 0; j < d; ++j) pr[j] += gr[j];
          }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss

// Masked mean NLL over rows of logits [R, V] (leading dims collapsed).
// Returns the scalar loss; per_row (optional) receives the detached NLL of
// every masked row and 0 elsewhere.
template <typename T>
Tensor<T> cross_entropy_nll(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                            std::span<const std::uint8_t> mask,
                            std::vector<T>* per_row = nullptr) {
  const std::size_t v = logits.shape().back();
  const std::size_t rows = detail::leading_rows(logits);
  detail::require(targets.size() == rows && mask.size() == rows,
                  "cross_entropy: row count mismatch");
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r)
    if (mask[r]) {
      detail::require(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < v,
                      "cross_entropy: target id out of vocabulary");
      count++;
    }
  detail::require(count > 0, "cross_entropy: empty mask");

  if (per_row) per_row->assign(rows, T{0});
  Tensor<T> out = detail::make_result<T>({1}, {logits});
  const T* pl = logits.data();
  T total{0};
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    const T* row = pl + r * v;
    T mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    T denom{0};
    for (std::size_t j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
    const T nll = -(row[static_cast<std::size_t>(targets[r])] - mx - std::log(denom));
    if (per_row) (*per_row)[r] = nll;
    total += nll;
  }
  out.data()[0] = total / static_cast<T>(count);
  if (out.requires_grad()) {
    auto *ln = logits.node().get(), *on = out.node().get();
    std::vector<std::int32_t> tgt(targets.begin(), targets.end());
    std::vector<std::uint8_t> msk(mask.begin(), mask.end());
    out.node()->backward_fn = [ln, on, tgt = std::move(tgt), msk = std::move(msk), rows, v,
                               count] {
      ln->ensure_grad();
      const T gscale = on->grad[0] / static_cast<T>(count);
      const T* pl = ln->value.data();
      T* gl = ln->grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        if (!msk[r]) continue;
        const T* row = pl + r * v;
        T* grow = gl + r * v;
        T mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        T denom{0};
        for (std::size_t j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
        const T inv = T{1} / denom;
        for (std::size_t j = 0; j < v; ++j) {
          const T p = std::exp(row[j] - mx) * inv;
          grow[j] += gscale * (p - (static_cast<std::size_t>(tgt[r]) == j ? T{1} : T{0}));
        }
      }
    };
  }
  return out;
}

}  // namespace arithlab::nn
