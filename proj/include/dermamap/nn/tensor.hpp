#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#define EIGEN_DONT_PARALLELIZE 1
#include <Eigen/Dense>

#include "dermamap/common.hpp"

namespace dermamap::nn {

// Dense row-major tensor of up to 4 dimensions.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    v.assign(size_t(numel_of(shape)), fill);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  int64_t numel() const { return int64_t(v.size()); }
  int dim(int i) const { return shape[size_t(i)]; }
  int ndim() const { return int(shape.size()); }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
};

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<EMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const EMat<T>>;

// Reverse-mode tape. Ops append nodes; backward() walks the tape in reverse.
// A Tape instance must stay at a fixed address while in use (backward
// closures capture `this`). One tape per training step; parameters live
// outside the tape and are bound through param leaves.
template <class T>
class Tape {
 public:
  using Id = int32_t;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  const Tensor<T>& val(Id id) const { return nodes_[size_t(id)].val; }
  const Tensor<T>& grad(Id id) const { return nodes_[size_t(id)].grad; }
  bool needs_grad(Id id) const { return nodes_[size_t(id)].needs_grad; }

  // ---- leaves -------------------------------------------------------------

  Id constant(Tensor<T> value) { return push(std::move(value), false, {}); }

  Id leaf(Tensor<T> value, bool needs_grad) {
    return push(std::move(value), grad_enabled_ && needs_grad, {});
  }

  // ---- elementwise --------------------------------------------------------

  Id add(Id a, Id b) {
    check_same_shape(a, b, "add");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out.v[size_t(i)] += vb.v[size_t(i)];
    Id id = push(std::move(out), wants(a) || wants(b), [this, a, b](Id self) {
      if (wants(a)) axpy(grad_mut(a), grad(self), T(1));
      if (wants(b)) axpy(grad_mut(b), grad(self), T(1));
    });
    return id;
  }

  Id scale(Id a, T s) {
    Tensor<T> out = val(a);
    for (auto& x : out.v) x *= s;
    return push(std::move(out), wants(a), [this, a, s](Id self) {
      if (wants(a)) axpy(grad_mut(a), grad(self), s);
    });
  }

  Id mul(Id a, Id b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out.v[size_t(i)] *= vb.v[size_t(i)];
    return push(std::move(out), wants(a) || wants(b), [this, a, b](Id self) {
      const auto& g = grad(self);
      if (wants(a)) {
        auto& ga = grad_mut(a);
        const auto& vb = val(b);
        for (int64_t i = 0; i < g.numel(); ++i)
          ga.v[size_t(i)] += g.v[size_t(i)] * vb.v[size_t(i)];
      }
      if (wants(b)) {
        auto& gb = grad_mut(b);
        const auto& va = val(a);
        for (int64_t i = 0; i < g.numel(); ++i)
          gb.v[size_t(i)] += g.v[size_t(i)] * va.v[size_t(i)];
      }
    });
  }

  Id relu(Id a) {
    Tensor<T> out = val(a);
    for (auto& x : out.v) x = x > T(0) ? x : T(0);
    return push(std::move(out), wants(a), [this, a](Id self) {
      if (!wants(a)) return;
      auto& ga = grad_mut(a);
      const auto& g = grad(self);
      const auto& x = val(a);
      for (int64_t i = 0; i < g.numel(); ++i)
        if (x.v[size_t(i)] > T(0)) ga.v[size_t(i)] += g.v[size_t(i)];
    });
  }

  Id gelu(Id a) {
    Tensor<T> out = val(a);
    for (auto& x : out.v) {
      const double xd = double(x);
      x = T(0.5 * xd * (1.0 + std::erf(xd * M_SQRT1_2)));
    }
    return push(std::move(out), wants(a), [this, a](Id self) {
      if (!wants(a)) return;
      auto& ga = grad_mut(a);
      const auto& g = grad(self);
      const auto& x = val(a);
      constexpr double kInvSqrt2Pi = 0.3989422804014327;
      for (int64_t i = 0; i < g.numel(); ++i) {
        const double xd = double(x.v[size_t(i)]);
        const double d = 0.5 * (1.0 + std::erf(xd * M_SQRT1_2)) +
                         xd * kInvSqrt2Pi * std::exp(-0.5 * xd * xd);
        ga.v[size_t(i)] += g.v[size_t(i)] * T(d);
      }
    });
  }

  Id sigmoid(Id a) {
    Tensor<T> out = val(a);
    for (auto& x : out.v) x = T(1) / (T(1) + T(std::exp(-double(x))));
    return push(std::move(out), wants(a), [this, a](Id self) {
      if (!wants(a)) return;
      auto& ga = grad_mut(a);
      const auto& g = grad(self);
      const auto& y = val(self);
      for (int64_t i = 0; i < g.numel(); ++i) {
        const T s = y.v[size_t(i)];
        ga.v[size_t(i)] += g.v[size_t(i)] * s * (T(1) - s);
      }
    });
  }

  // Same data, new shape (numel preserved).
  Id reshape(Id a, std::vector<int> new_shape) {
    require(Tensor<T>::numel_of(new_shape) == val(a).numel(),
            "reshape: element count mismatch");
    Tensor<T> out;
    out.shape = std::move(new_shape);
    out.v = val(a).v;
    return push(std::move(out), wants(a), [this, a](Id self) {
      if (wants(a)) axpy(grad_mut(a), grad(self), T(1));
    });
  }

  // ---- dense layers -------------------------------------------------------

  // x: [R, K] (trailing dims folded by caller), w: [K, N] -> [R, N].
  Id matmul(Id x, Id w) {
    const auto& xs = val(x).shape;
    const auto& ws = val(w).shape;
    require(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[0],
            "matmul: incompatible shapes");
    const int R = xs[0], K = xs[1], N = ws[1];
    Tensor<T> out({R, N});
    gemm_partitioned(val(x).data(), val(w).data(), out.data(), R, K, N);
    return push(std::move(out), wants(x) || wants(w), [this, x, w, R, K, N](Id self) {
      const auto& g = grad(self);
      if (wants(x)) {
        // dx = g * w^T
        CMapMat<T> G(g.data(), R, N), W(val(w).data(), K, N);
        MapMat<T> GX(grad_mut(x).data(), R, K);
        parallel_rows(R, [&](int r0, int r1) {
          GX.middleRows(r0, r1 - r0).noalias() +=
              G.middleRows(r0, r1 - r0) * W.transpose();
        });
      }
      if (wants(w)) {
        // dw = x^T * g ; partition over columns of dw
        CMapMat<T> G(g.data(), R, N), X(val(x).data(), R, K);
        MapMat<T> GW(grad_mut(w).data(), K, N);
        parallel_rows(N, [&](int c0, int c1) {
          GW.middleCols(c0, c1 - c0).noalias() +=
              X.transpose() * G.middleCols(c0, c1 - c0);
        });
      }
    });
  }

  // x: [R, N] + bias [N] broadcast over rows.
  Id add_bias(Id x, Id b) {
    const auto& xs = val(x).shape;
    require(xs.size() >= 1 && val(b).shape.size() == 1 &&
                xs.back() == val(b).shape[0],
            "add_bias: bias length must equal trailing dim");
    const int N = xs.back();
    const int64_t R = val(x).numel() / N;
    Tensor<T> out = val(x);
    const auto& vb = val(b);
    for (int64_t r = 0; r < R; ++r)
      for (int n = 0; n < N; ++n) out.v[size_t(r * N + n)] += vb.v[size_t(n)];
    return push(std::move(out), wants(x) || wants(b), [this, x, b, R, N](Id self) {
      const auto& g = grad(self);
      if (wants(x)) axpy(grad_mut(x), g, T(1));
      if (wants(b)) {
        auto& gb = grad_mut(b);
        for (int64_t r = 0; r < R; ++r)
          for (int n = 0; n < N; ++n) gb.v[size_t(n)] += g.v[size_t(r * N + n)];
      }
    });
  }

  Id linear(Id x, Id w, Id b) { return add_bias(matmul(x, w), b); }

  // ---- normalization / attention ------------------------------------------

  // Row-wise layer norm over the trailing dim; gamma/beta of length D.
  Id layernorm(Id x, Id gamma, Id beta, T eps = T(1e-5)) {
    const auto& xs = val(x).shape;
    const int D = xs.back();
    const int64_t R = val(x).numel() / D;
    require(val(gamma).numel() == D && val(beta).numel() == D,
            "layernorm: gamma/beta length mismatch");
    Tensor<T> out = val(x);
    Tensor<T> inv_sigma({int(R)});
    Tensor<T> xhat = val(x);
    const auto& vg = val(gamma);
    const auto& vb = val(beta);
    for (int64_t r = 0; r < R; ++r) {
      T* row = out.data() + r * D;
      double mu = 0.0;
      for (int i = 0; i < D; ++i) mu += double(row[i]);
      mu /= D;
      double var = 0.0;
      for (int i = 0; i < D; ++i) {
        const double d = double(row[i]) - mu;
        var += d * d;
      }
      var /= D;
      const T is = T(1.0 / std::sqrt(var + double(eps)));
      inv_sigma.v[size_t(r)] = is;
      T* xh = xhat.data() + r * D;
      for (int i = 0; i < D; ++i) {
        xh[i] = (row[i] - T(mu)) * is;
        row[i] = vg.v[size_t(i)] * xh[i] + vb.v[size_t(i)];
      }
    }
    return push(std::move(out), wants(x) || wants(gamma) || wants(beta),
                [this, x, gamma, beta, R, D, inv_sigma, xhat](Id self) {
      const auto& g = grad(self);
      const auto& vg = val(gamma);
      if (wants(gamma) || wants(beta)) {
        auto* ggam = wants(gamma) ? &grad_mut(gamma) : nullptr;
        auto* gbet = wants(beta) ? &grad_mut(beta) : nullptr;
        for (int64_t r = 0; r < R; ++r)
          for (int i = 0; i < D; ++i) {
            const T gi = g.v[size_t(r * D + i)];
            if (ggam) ggam->v[size_t(i)] += gi * xhat.v[size_t(r * D + i)];
            if (gbet) gbet->v[size_t(i)] += gi;
          }
      }
      if (wants(x)) {
        auto& gx = grad_mut(x);
        for (int64_t r = 0; r < R; ++r) {
          const T is = inv_sigma.v[size_t(r)];
          double mean_h = 0.0, mean_hx = 0.0;
          for (int i = 0; i < D; ++i) {
            const double h = double(vg.v[size_t(i)]) * double(g.v[size_t(r * D + i)]);
            mean_h += h;
            mean_hx += h * double(xhat.v[size_t(r * D + i)]);
          }
          mean_h /= D;
          mean_hx /= D;
          for (int i = 0; i < D; ++i) {
            const double h = double(vg.v[size_t(i)]) * double(g.v[size_t(r * D + i)]);
            gx.v[size_t(r * D + i)] +=
                T((h - mean_h - double(xhat.v[size_t(r * D + i)]) * mean_hx) * double(is));
          }
        }
      }
    });
  }

  // Softmax over the trailing dim.
  Id softmax(Id x) {
    const int C = val(x).shape.back();
    const int64_t R = val(x).numel() / C;
    Tensor<T> out = val(x);
    parallel_rows(int(R), [&](int r0, int r1) {
      for (int64_t r = r0; r < r1; ++r) {
        T* row = out.data() + r * C;
        T mx = row[0];
        for (int i = 1; i < C; ++i) mx = std::max(mx, row[i]);
        double sum = 0.0;
        for (int i = 0; i < C; ++i) {
          const double e = std::exp(double(row[i] - mx));
          row[i] = T(e);
          sum += e;
        }
        const T inv = T(1.0 / sum);
        for (int i = 0; i < C; ++i) row[i] *= inv;
      }
    });
    return push(std::move(out), wants(x), [this, x, R, C](Id self) {
      if (!wants(x)) return;
      const auto& g = grad(self);
      const auto& p = val(self);
      auto& gx = grad_mut(x);
      parallel_rows(int(R), [&](int r0, int r1) {
        for (int64_t r = r0; r < r1; ++r) {
          const T* pr = p.data() + r * C;
          const T* gr = g.data() + r * C;
          double dot = 0.0;
          for (int i = 0; i < C; ++i) dot += double(pr[i]) * double(gr[i]);
          T* o = gx.data() + r * C;
          for (int i = 0; i < C; ++i)
            o[i] += T(double(pr[i]) * (double(gr[i]) - dot));
        }
      });
    });
  }

  // Batched a [G,M,K] x b [G,K,N] -> [G,M,N].
  Id bmm(Id a, Id b) {
    const auto& as = val(a).shape;
    const auto& bs = val(b).shape;
    require(as.size() == 3 && bs.size() == 3 && as[0] == bs[0] && as[2] == bs[1],
            "bmm: incompatible shapes");
    const int G = as[0], M = as[1], K = as[2], N = bs[2];
    Tensor<T> out({G, M, N});
    parallel_rows(G, [&](int g0, int g1) {
      for (int g = g0; g < g1; ++g) {
        CMapMat<T> A(val(a).data() + int64_t(g) * M * K, M, K);
        CMapMat<T> B(val(b).data() + int64_t(g) * K * N, K, N);
        MapMat<T> O(out.data() + int64_t(g) * M * N, M, N);
        O.noalias() = A * B;
      }
    });
    return push(std::move(out), wants(a) || wants(b),
                [this, a, b, G, M, K, N](Id self) {
      const auto& g = grad(self);
      if (wants(a)) {
        auto& ga = grad_mut(a);
        parallel_rows(G, [&](int g0, int g1) {
          for (int i = g0; i < g1; ++i) {
            CMapMat<T> Gm(g.data() + int64_t(i) * M * N, M, N);
            CMapMat<T> B(val(b).data() + int64_t(i) * K * N, K, N);
            MapMat<T> GA(ga.data() + int64_t(i) * M * K, M, K);
            GA.noalias() += Gm * B.transpose();
          }
        });
      }
      if (wants(b)) {
        auto& gb = grad_mut(b);
        parallel_rows(G, [&](int g0, int g1) {
          for (int i = g0; i < g1; ++i) {
            CMapMat<T> Gm(g.data() + int64_t(i) * M * N, M, N);
            CMapMat<T> A(val(a).data() + int64_t(i) * M * K, M, K);
            MapMat<T> GB(gb.data() + int64_t(i) * K * N, K, N);
            GB.noalias() += A.transpose() * Gm;
          }
        });
      }
    });
  }

  // Batched a [G,M,K] x b [G,N,K]^T -> [G,M,N], scaled.
  Id bmm_nt(Id a, Id b, T s = T(1)) {
    const auto& as = val(a).shape;
    const auto& bs = val(b).shape;
    require(as.size() == 3 && bs.size() == 3 && as[0] == bs[0] && as[2] == bs[2],
            "bmm_nt: incompatible shapes");
    const int G = as[0], M = as[1], K = as[2], N = bs[1];
    Tensor<T> out({G, M, N});
    parallel_rows(G, [&](int g0, int g1) {
      for (int g = g0; g < g1; ++g) {
        CMapMat<T> A(val(a).data() + int64_t(g) * M * K, M, K);
        CMapMat<T> B(val(b).data() + int64_t(g) * N * K, N, K);
        MapMat<T> O(out.data() + int64_t(g) * M * N, M, N);
        O.noalias() = (A * B.transpose()) * s;
      }
    });
    return push(std::move(out), wants(a) || wants(b),
                [this, a, b, s, G, M, K, N](Id self) {
      const auto& g = grad(self);
      if (wants(a)) {
        auto& ga = grad_mut(a);
        parallel_rows(G, [&](int g0, int g1) {
          for (int i = g0; i < g1; ++i) {
            CMapMat<T> Gm(g.data() + int64_t(i) * M * N, M, N);
            CMapMat<T> B(val(b).data() + int64_t(i) * N * K, N, K);
            MapMat<T> GA(ga.data() + int64_t(i) * M * K, M, K);
            GA.noalias() += (Gm * B) * s;
          }
        });
      }
      if (wants(b)) {
        auto& gb = grad_mut(b);
        parallel_rows(G, [&](int g0, int g1) {
          for (int i = g0; i < g1; ++i) {
            CMapMat<T> Gm(g.data() + int64_t(i) * M * N, M, N);
            CMapMat<T> A(val(a).data() + int64_t(i) * M * K, M, K);
            MapMat<T> GB(gb.data() + int64_t(i) * N * K, N, K);
            GB.noalias() += (Gm.transpose() * A) * s;
          }
        });
      }
    });
  }

  // qkv [B*Tq, 3*D] -> one of q/k/v as [B*H, Tq, dh] (which in {0,1,2}).
  Id split_heads(Id qkv, int which, int B, int Tq, int H, int dh) {
    const int D = H * dh;
    require(val(qkv).shape.size() == 2 && val(qkv).shape[0] == B * Tq &&
                val(qkv).shape[1] == 3 * D,
            "split_heads: bad qkv shape");
    Tensor<T> out({B * H, Tq, dh});
    const auto& src = val(qkv);
    for (int b = 0; b < B; ++b)
      for (int h = 0; h < H; ++h)
        for (int t = 0; t < Tq; ++t) {
          const T* s = src.data() + (int64_t(b) * Tq + t) * 3 * D + which * D + h * dh;
          T* d = out.data() + ((int64_t(b) * H + h) * Tq + t) * dh;
          std::copy(s, s + dh, d);
        }
    return push(std::move(out), wants(qkv),
                [this, qkv, which, B, Tq, H, dh](Id self) {
      if (!wants(qkv)) return;
      const int D = H * dh;
      const auto& g = grad(self);
      auto& gq = grad_mut(qkv);
      for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
          for (int t = 0; t < Tq; ++t) {
            const T* s = g.data() + ((int64_t(b) * H + h) * Tq + t) * dh;
            T* d = gq.data() + (int64_t(b) * Tq + t) * 3 * D + which * D + h * dh;
            for (int i = 0; i < dh; ++i) d[i] += s[i];
          }
    });
  }

  // ctx [B*H, Tq, dh] -> [B*Tq, D].
  Id merge_heads(Id ctx, int B, int Tq, int H, int dh) {
    const int D = H * dh;
    Tensor<T> out({B * Tq, D});
    const auto& src = val(ctx);
    for (int b = 0; b < B; ++b)
      for (int h = 0; h < H; ++h)
        for (int t = 0; t < Tq; ++t) {
          const T* s = src.data() + ((int64_t(b) * H + h) * Tq + t) * dh;
          T* d = out.data() + (int64_t(b) * Tq + t) * D + h * dh;
          std::copy(s, s + dh, d);
        }
    return push(std::move(out), wants(ctx), [this, ctx, B, Tq, H, dh](Id self) {
      if (!wants(ctx)) return;
      const int D = H * dh;
      const auto& g = grad(self);
      auto& gc = grad_mut(ctx);
      for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
          for (int t = 0; t < Tq; ++t) {
            const T* s = g.data() + (int64_t(b) * Tq + t) * D + h * dh;
            T* d = gc.data() + ((int64_t(b) * H + h) * Tq + t) * dh;
            for (int i = 0; i < dh; ++i) d[i] += s[i];
          }
    });
  }

  // ---- token sequence helpers ([B, T, D] layout) ---------------------------

  Id concat_tokens(Id a, Id b) {
    const auto& as = val(a).shape;
    const auto& bs = val(b).shape;
    require(as.size() == 3 && bs.size() == 3 && as[0] == bs[0] && as[2] == bs[2],
            "concat_tokens: incompatible shapes");
    const int B = as[0], Ta = as[1], Tb = bs[1], D = as[2];
    Tensor<T> out({B, Ta + Tb, D});
    for (int i = 0; i < B; ++i) {
      std::copy(val(a).data() + int64_t(i) * Ta * D,
                val(a).data() + int64_t(i + 1) * Ta * D,
                out.data() + int64_t(i) * (Ta + Tb) * D);
      std::copy(val(b).data() + int64_t(i) * Tb * D,
                val(b).data() + int64_t(i + 1) * Tb * D,
                out.data() + int64_t(i) * (Ta + Tb) * D + int64_t(Ta) * D);
    }
    return push(std::move(out), wants(a) || wants(b),
                [this, a, b, B, Ta, Tb, D](Id self) {
      const auto& g = grad(self);
      for (int i = 0; i < B; ++i) {
        const T* gs = g.data() + int64_t(i) * (Ta + Tb) * D;
        if (wants(a)) {
          T* d = grad_mut(a).data() + int64_t(i) * Ta * D;
          for (int64_t k = 0; k < int64_t(Ta) * D; ++k) d[k] += gs[k];
        }
        if (wants(b)) {
          T* d = grad_mut(b).data() + int64_t(i) * Tb * D;
          const T* s = gs + int64_t(Ta) * D;
          for (int64_t k = 0; k < int64_t(Tb) * D; ++k) d[k] += s[k];
        }
      }
    });
  }

  // Tokens [t0, t1) of x: [B, T, D] -> [B, t1-t0, D].
  Id slice_tokens(Id x, int t0, int t1) {
    const auto& xs = val(x).shape;
    require(xs.size() == 3 && t0 >= 0 && t1 <= xs[1] && t0 < t1,
            "slice_tokens: bad range");
    const int B = xs[0], Tt = xs[1], D = xs[2], n = t1 - t0;
    Tensor<T> out({B, n, D});
    for (int i = 0; i < B; ++i)
      std::copy(val(x).data() + (int64_t(i) * Tt + t0) * D,
                val(x).data() + (int64_t(i) * Tt + t1) * D,
                out.data() + int64_t(i) * n * D);
    return push(std::move(out), wants(x), [this, x, t0, B, Tt, D, n](Id self) {
      if (!wants(x)) return;
      const auto& g = grad(self);
      auto& gx = grad_mut(x);
      for (int i = 0; i < B; ++i) {
        const T* s = g.data() + int64_t(i) * n * D;
        T* d = gx.data() + (int64_t(i) * Tt + t0) * D;
        for (int64_t k = 0; k < int64_t(n) * D; ++k) d[k] += s[k];
      }
    });
  }

  // Broadcast one [T, D] tensor across a batch -> [B, T, D].
  Id broadcast_batch(Id x, int B) {
    const auto& xs = val(x).shape;
    require(xs.size() == 2, "broadcast_batch: expected rank-2 input");
    const int64_t n = val(x).numel();
    Tensor<T> out({B, xs[0], xs[1]});
    for (int i = 0; i < B; ++i)
      std::copy(val(x).data(), val(x).data() + n, out.data() + int64_t(i) * n);
    return push(std::move(out), wants(x), [this, x, B, n](Id self) {
      if (!wants(x)) return;
      const auto& g = grad(self);
      auto& gx = grad_mut(x);
      for (int i = 0; i < B; ++i) {
        const T* s = g.data() + int64_t(i) * n;
        for (int64_t k = 0; k < n; ++k) gx.v[size_t(k)] += s[k];
      }
    });
  }

  // ---- reductions over axis 1 of [B, P, F] ---------------------------------

  Id mean_axis1(Id x) {
    const auto& xs = val(x).shape;
    require(xs.size() == 3, "mean_axis1: expected rank-3 input");
    const int B = xs[0], P = xs[1], F = xs[2];
    Tensor<T> out({B, F});
    for (int b = 0; b < B; ++b)
      for (int p = 0; p < P; ++p)
        for (int f = 0; f < F; ++f)
          out.v[size_t(b) * F + f] += val(x).v[(size_t(b) * P + p) * F + f] / T(P);
    return push(std::move(out), wants(x), [this, x, B, P, F](Id self) {
      if (!wants(x)) return;
      const auto& g = grad(self);
      auto& gx = grad_mut(x);
      for (int b = 0; b < B; ++b)
        for (int p = 0; p < P; ++p)
          for (int f = 0; f < F; ++f)
            gx.v[(size_t(b) * P + p) * F + f] += g.v[size_t(b) * F + f] / T(P);
    });
  }

  Id max_axis1(Id x) {
    const auto& xs = val(x).shape;
    require(xs.size() == 3, "max_axis1: expected rank-3 input");
    const int B = xs[0], P = xs[1], F = xs[2];
    Tensor<T> out({B, F});
    std::vector<int> arg(size_t(B) * F, 0);
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F; ++f) {
        T best = val(x).v[size_t(b) * P * F + f];
        int bi = 0;
        for (int p = 1; p < P; ++p) {
          const T v = val(x).v[(size_t(b) * P + p) * F + f];
          if (v > best) {
            best = v;
            bi = p;
          }
        }
        out.v[size_t(b) * F + f] = best;
        arg[size_t(b) * F + f] = bi;
      }
    return push(std::move(out), wants(x),
                [this, x, B, P, F, arg = std::move(arg)](Id self) {
      if (!wants(x)) return;
      const auto& g = grad(self);
      auto& gx = grad_mut(x);
      for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
          gx.v[(size_t(b) * P + arg[size_t(b) * F + f]) * F + f] +=
              g.v[size_t(b) * F + f];
    });
  }

  // Concatenate along the trailing dim: [B, P, Fa] + [B, P, Fb].
  Id concat_features(Id a, Id b) {
    const auto& as = val(a).shape;
    const auto& bs = val(b).shape;
    require(as.size() == bs.size() &&
                std::equal(as.begin(), as.end() - 1, bs.begin()),
            "concat_features: incompatible shapes");
    const int Fa = as.back(), Fb = bs.back();
    const int64_t R = val(a).numel() / Fa;
    std::vector<int> os = as;
    os.back() = Fa + Fb;
    Tensor<T> out(os);
    for (int64_t r = 0; r < R; ++r) {
      std::copy(val(a).data() + r * Fa, val(a).data() + (r + 1) * Fa,
                out.data() + r * (Fa + Fb));
      std::copy(val(b).data() + r * Fb, val(b).data() + (r + 1) * Fb,
                out.data() + r * (Fa + Fb) + Fa);
    }
    return push(std::move(out), wants(a) || wants(b),
                [this, a, b, R, Fa, Fb](Id self) {
      const auto& g = grad(self);
      for (int64_t r = 0; r < R; ++r) {
        const T* gs = g.data() + r * (Fa + Fb);
        if (wants(a)) {
          T* d = grad_mut(a).data() + r * Fa;
          for (int k = 0; k < Fa; ++k) d[k] += gs[k];
        }
        if (wants(b)) {
          T* d = grad_mut(b).data() + r * Fb;
          for (int k = 0; k < Fb; ++k) d[k] += gs[Fa + k];
        }
      }
    });
  }

  // ---- convolution ----------------------------------------------------------

  // x [B,C,H,W], w [O,C,3,3], stride 1, pad 1 -> [B,O,H,W].
  Id conv3x3(Id x, Id w) {
    const auto& xs = val(x).shape;
    const auto& ws = val(w).shape;
    require(xs.size() == 4 && ws.size() == 4 && ws[2] == 3 && ws[3] == 3 &&
                xs[1] == ws[1],
            "conv3x3: incompatible shapes");
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3], O = ws[0];
    const int K = C * 9;
    Tensor<T> out({B, O, H, W});
    parallel_rows(B, [&](int b0, int b1) {
      std::vector<T> col(size_t(K) * H * W);
      for (int b = b0; b < b1; ++b) {
        im2col(val(x).data() + int64_t(b) * C * H * W, C, H, W, col.data());
        CMapMat<T> Wm(val(w).data(), O, K);
        CMapMat<T> Col(col.data(), K, int64_t(H) * W);
        MapMat<T> Om(out.data() + int64_t(b) * O * H * W, O, int64_t(H) * W);
        Om.noalias() = Wm * Col;
      }
    });
    return push(std::move(out), wants(x) || wants(w),
                [this, x, w, B, C, H, W, O, K](Id self) {
      const auto& g = grad(self);
      if (wants(w)) {
        // Per-sample contributions, reduced in index order for determinism.
        std::vector<std::vector<T>> partial(static_cast<size_t>(B));
        parallel_rows(B, [&](int b0, int b1) {
          std::vector<T> col(size_t(K) * H * W);
          for (int b = b0; b < b1; ++b) {
            im2col(val(x).data() + int64_t(b) * C * H * W, C, H, W, col.data());
            partial[size_t(b)].assign(size_t(O) * K, T(0));
            CMapMat<T> Gm(g.data() + int64_t(b) * O * H * W, O, int64_t(H) * W);
            CMapMat<T> Col(col.data(), K, int64_t(H) * W);
            MapMat<T> Pm(partial[size_t(b)].data(), O, K);
            Pm.noalias() = Gm * Col.transpose();
          }
        });
        auto& gw = grad_mut(w);
        for (int b = 0; b < B; ++b)
          for (int64_t i = 0; i < int64_t(O) * K; ++i)
            gw.v[size_t(i)] += partial[size_t(b)][size_t(i)];
      }
      if (wants(x)) {
        auto& gx = grad_mut(x);
        parallel_rows(B, [&](int b0, int b1) {
          std::vector<T> col(size_t(K) * H * W);
          for (int b = b0; b < b1; ++b) {
            CMapMat<T> Wm(val(w).data(), O, K);
            CMapMat<T> Gm(g.data() + int64_t(b) * O * H * W, O, int64_t(H) * W);
            MapMat<T> Cm(col.data(), K, int64_t(H) * W);
            Cm.noalias() = Wm.transpose() * Gm;
            col2im_add(col.data(), C, H, W, gx.data() + int64_t(b) * C * H * W);
          }
        });
      }
    });
  }

  // Bias over channel dim of [B,O,H,W].
  Id add_channel_bias(Id x, Id b) {
    const auto& xs = val(x).shape;
    require(xs.size() == 4 && val(b).numel() == xs[1],
            "add_channel_bias: bias length must equal channel count");
    const int B = xs[0], O = xs[1];
    const int64_t HW = int64_t(xs[2]) * xs[3];
    Tensor<T> out = val(x);
    for (int i = 0; i < B; ++i)
      for (int o = 0; o < O; ++o) {
        const T bias = val(b).v[size_t(o)];
        T* p = out.data() + (int64_t(i) * O + o) * HW;
        for (int64_t k = 0; k < HW; ++k) p[k] += bias;
      }
    return push(std::move(out), wants(x) || wants(b), [this, x, b, B, O, HW](Id self) {
      const auto& g = grad(self);
      if (wants(x)) axpy(grad_mut(x), g, T(1));
      if (wants(b)) {
        auto& gb = grad_mut(b);
        for (int i = 0; i < B; ++i)
          for (int o = 0; o < O; ++o) {
            const T* p = g.data() + (int64_t(i) * O + o) * HW;
            double acc = 0.0;
            for (int64_t k = 0; k < HW; ++k) acc += double(p[k]);
            gb.v[size_t(o)] += T(acc);
          }
      }
    });
  }

  // 2x2 average pooling, stride 2 (even H, W required).
  Id avgpool2(Id x) {
    const auto& xs = val(x).shape;
    require(xs.size() == 4 && xs[2] % 2 == 0 && xs[3] % 2 == 0,
            "avgpool2: spatial dims must be even");
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int Ho = H / 2, Wo = W / 2;
    Tensor<T> out({B, C, Ho, Wo});
    parallel_rows(B * C, [&](int p0, int p1) {
      for (int p = p0; p < p1; ++p) {
        const T* src = val(x).data() + int64_t(p) * H * W;
        T* dst = out.data() + int64_t(p) * Ho * Wo;
        for (int r = 0; r < Ho; ++r)
          for (int c = 0; c < Wo; ++c)
            dst[int64_t(r) * Wo + c] =
                (src[int64_t(2 * r) * W + 2 * c] + src[int64_t(2 * r) * W + 2 * c + 1] +
                 src[int64_t(2 * r + 1) * W + 2 * c] +
                 src[int64_t(2 * r + 1) * W + 2 * c + 1]) *
                T(0.25);
      }
    });
    return push(std::move(out), wants(x), [this, x, B, C, H, W, Ho, Wo](Id self) {
      if (!wants(x)) return;
      const auto& g = grad(self);
      auto& gx = grad_mut(x);
      parallel_rows(B * C, [&](int p0, int p1) {
        for (int p = p0; p < p1; ++p) {
          const T* gs = g.data() + int64_t(p) * Ho * Wo;
          T* gd = gx.data() + int64_t(p) * H * W;
          for (int r = 0; r < Ho; ++r)
            for (int c = 0; c < Wo; ++c) {
              const T q = gs[int64_t(r) * Wo + c] * T(0.25);
              gd[int64_t(2 * r) * W + 2 * c] += q;
              gd[int64_t(2 * r) * W + 2 * c + 1] += q;
              gd[int64_t(2 * r + 1) * W + 2 * c] += q;
              gd[int64_t(2 * r + 1) * W + 2 * c + 1] += q;
            }
        }
      });
    });
  }

  // ---- losses ---------------------------------------------------------------

  // mean((pred - target)^2); target is a constant.
  Id mse_mean(Id pred, const std::vector<T>& target) {
    require(val(pred).numel() == int64_t(target.size()),
            "mse_mean: length mismatch");
    const int64_t n = val(pred).numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = double(val(pred).v[size_t(i)]) - double(target[size_t(i)]);
      acc += d * d;
    }
    Tensor<T> out({1});
    out.v[0] = T(acc / double(n));
    return push(std::move(out), wants(pred), [this, pred, target, n](Id self) {
      if (!wants(pred)) return;
      const T g = grad(self).v[0];
      auto& gp = grad_mut(pred);
      for (int64_t i = 0; i < n; ++i)
        gp.v[size_t(i)] += g * T(2.0 / double(n)) *
                           (val(pred).v[size_t(i)] - target[size_t(i)]);
    });
  }

  // Rows scaled to unit L2 norm; zero-norm rows are an error.
  Id l2_normalize_rows(Id x) {
    const auto& xs = val(x).shape;
    require(xs.size() == 2, "l2_normalize_rows: expected rank-2 input");
    const int B = xs[0], D = xs[1];
    Tensor<T> out = val(x);
    std::vector<double> inv_norm(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
      double s = 0.0;
      for (int i = 0; i < D; ++i) {
        const double v = double(val(x).v[size_t(b) * D + i]);
        s += v * v;
      }
      require(s > 1e-24, "l2_normalize_rows: zero-norm latent feature");
      inv_norm[size_t(b)] = 1.0 / std::sqrt(s);
      for (int i = 0; i < D; ++i) out.v[size_t(b) * D + i] *= T(inv_norm[size_t(b)]);
    }
    return push(std::move(out), wants(x),
                [this, x, B, D, inv_norm = std::move(inv_norm)](Id self) {
      if (!wants(x)) return;
      const auto& g = grad(self);
      const auto& z = val(self);
      auto& gx = grad_mut(x);
      for (int b = 0; b < B; ++b) {
        double dot = 0.0;
        for (int i = 0; i < D; ++i)
          dot += double(g.v[size_t(b) * D + i]) * double(z.v[size_t(b) * D + i]);
        for (int i = 0; i < D; ++i)
          gx.v[size_t(b) * D + i] +=
              T((double(g.v[size_t(b) * D + i]) - dot * double(z.v[size_t(b) * D + i])) *
                inv_norm[size_t(b)]);
      }
    });
  }

  // Gram matrix z z^T of [B, D] -> [B, B].
  Id gram(Id z) {
    const auto& zs = val(z).shape;
    require(zs.size() == 2, "gram: expected rank-2 input");
    const int B = zs[0], D = zs[1];
    Tensor<T> out({B, B});
    CMapMat<T> Z(val(z).data(), B, D);
    MapMat<T> O(out.data(), B, B);
    O.noalias() = Z * Z.transpose();
    return push(std::move(out), wants(z), [this, z, B, D](Id self) {
      if (!wants(z)) return;
      const auto& g = grad(self);
      CMapMat<T> G(g.data(), B, B);
      CMapMat<T> Z(val(z).data(), B, D);
      MapMat<T> GZ(grad_mut(z).data(), B, D);
      GZ.noalias() += (G + G.transpose()) * Z;
    });
  }

  // Per-sample InfoNCE losses from a similarity matrix:
  //   loss_i = logsumexp_{k != i}(S_ik / tau) - S_{i, pair[i]} / tau
  // pair[i] must differ from i for every row.
  Id info_nce(Id S, const std::vector<int>& pair, T tau) {
    const auto& ss = val(S).shape;
    require(ss.size() == 2 && ss[0] == ss[1], "info_nce: expected square matrix");
    const int B = ss[0];
    require(B >= 2, "info_nce: latent set must hold at least two elements");
    require(int(pair.size()) == B, "info_nce: pair index length mismatch");
    for (int i = 0; i < B; ++i)
      require(pair[size_t(i)] >= 0 && pair[size_t(i)] < B && pair[size_t(i)] != i,
              "info_nce: invalid pair index for sample " + std::to_string(i));
    require(tau > T(0), "info_nce: temperature must be positive");
    Tensor<T> out({B});
    for (int i = 0; i < B; ++i) {
      const T* row = val(S).data() + int64_t(i) * B;
      double mx = -1e300;
      for (int k = 0; k < B; ++k)
        if (k != i) mx = std::max(mx, double(row[k]) / double(tau));
      double sum = 0.0;
      for (int k = 0; k < B; ++k)
        if (k != i) sum += std::exp(double(row[k]) / double(tau) - mx);
      const double lse = mx + std::log(sum);
      out.v[size_t(i)] = T(lse - double(row[pair[size_t(i)]]) / double(tau));
    }
    return push(std::move(out), wants(S), [this, S, pair, tau, B](Id self) {
      if (!wants(S)) return;
      const auto& g = grad(self);
      auto& gs = grad_mut(S);
      for (int i = 0; i < B; ++i) {
        const T* row = val(S).data() + int64_t(i) * B;
        double mx = -1e300;
        for (int k = 0; k < B; ++k)
          if (k != i) mx = std::max(mx, double(row[k]) / double(tau));
        double sum = 0.0;
        for (int k = 0; k < B; ++k)
          if (k != i) sum += std::exp(double(row[k]) / double(tau) - mx);
        const double gi = double(g.v[size_t(i)]);
        for (int k = 0; k < B; ++k) {
          if (k == i) continue;
          const double p = std::exp(double(row[k]) / double(tau) - mx) / sum;
          double d = p / double(tau);
          if (k == pair[size_t(i)]) d -= 1.0 / double(tau);
          gs.v[size_t(i) * B + k] += T(gi * d);
        }
      }
    });
  }

  Id mean_all(Id x) {
    const int64_t n = val(x).numel();
    Tensor<T> out({1});
    double acc = 0.0;
    for (const T v : val(x).v) acc += double(v);
    out.v[0] = T(acc / double(n));
    return push(std::move(out), wants(x), [this, x, n](Id self) {
      if (!wants(x)) return;
      const T g = grad(self).v[0] / T(double(n));
      auto& gx = grad_mut(x);
      for (auto& v : gx.v) v += g;
    });
  }

  // ---- backward -------------------------------------------------------------

  void backward(Id root) {
    require(grad_enabled_, "backward: tape built with gradients disabled");
    require(val(root).numel() == 1, "backward: root must be scalar");
    ensure_grad(root);
    nodes_[size_t(root)].grad.v[0] = T(1);
    for (Id id = root; id >= 0; --id) {
      Node& n = nodes_[size_t(id)];
      if (n.needs_grad && n.back) n.back(id);
    }
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;
    std::function<void(Id)> back;
    bool needs_grad = false;
  };

  bool wants(Id id) const { return nodes_[size_t(id)].needs_grad; }

  Tensor<T>& grad_mut(Id id) {
    ensure_grad(id);
    return nodes_[size_t(id)].grad;
  }

  void ensure_grad(Id id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.v.empty()) {
      n.grad.shape = n.val.shape;
      n.grad.v.assign(n.val.v.size(), T(0));
    }
  }

  Id push(Tensor<T> value, bool needs_grad, std::function<void(Id)> back) {
    Node n;
    n.val = std::move(value);
    n.needs_grad = grad_enabled_ && needs_grad;
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Id(nodes_.size() - 1);
  }

  void check_same_shape(Id a, Id b, const char* op) {
    require(val(a).shape == val(b).shape, std::string(op) + ": shape mismatch");
  }

  static void axpy(Tensor<T>& acc, const Tensor<T>& g, T s) {
    for (int64_t i = 0; i < g.numel(); ++i) acc.v[size_t(i)] += s * g.v[size_t(i)];
  }

  // GEMM out = x * w with row partitioning across threads.
  static void gemm_partitioned(const T* x, const T* w, T* out, int R, int K, int N);

  // Static partition over [0, n); deterministic for any thread count.
  template <class F>
  static void parallel_rows(int n, F&& f);

  static void im2col(const T* x, int C, int H, int W, T* col);
  static void col2im_add(const T* col, int C, int H, int W, T* x);

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

}  // namespace dermamap::nn

#include "dermamap/nn/tensor_impl.hpp"
