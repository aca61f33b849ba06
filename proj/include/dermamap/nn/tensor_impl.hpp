#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dermamap::nn {

template <class T>
template <class F>
void Tape<T>::parallel_rows(int n, F&& f) {
  if (n <= 0) return;
#ifdef _OPENMP
  const int threads = std::min(n, omp_get_max_threads());
  if (threads > 1) {
#pragma omp parallel num_threads(threads)
    {
      const int t = omp_get_thread_num();
      const int chunk = (n + threads - 1) / threads;
      const int lo = t * chunk;
      const int hi = std::min(n, lo + chunk);
      if (lo < hi) f(lo, hi);
    }
    return;
  }
#endif
  f(0, n);
}

template <class T>
void Tape<T>::gemm_partitioned(const T* x, const T* w, T* out, int R, int K, int N) {
  CMapMat<T> X(x, R, K), W(w, K, N);
  MapMat<T> O(out, R, N);
  parallel_rows(R, [&](int r0, int r1) {
    O.middleRows(r0, r1 - r0).noalias() = X.middleRows(r0, r1 - r0) * W;
  });
}

// 3x3, stride 1, pad 1. col is [C*9, H*W]; kernel index varies slowest so the
// weight matrix [O, C*9] matches the (c, kr, kc) layout of conv weights.
template <class T>
void Tape<T>::im2col(const T* x, int C, int H, int W, T* col) {
  const int64_t HW = int64_t(H) * W;
  for (int c = 0; c < C; ++c) {
    for (int kr = 0; kr < 3; ++kr) {
      for (int kc = 0; kc < 3; ++kc) {
        T* dst = col + ((int64_t(c) * 9) + kr * 3 + kc) * HW;
        const int dr = kr - 1, dc = kc - 1;
        for (int r = 0; r < H; ++r) {
          const int sr = r + dr;
          if (sr < 0 || sr >= H) {
            std::fill(dst + int64_t(r) * W, dst + int64_t(r + 1) * W, T(0));
            continue;
          }
          const T* src = x + int64_t(c) * HW + int64_t(sr) * W;
          T* d = dst + int64_t(r) * W;
          const int lo = std::max(0, -dc);
          const int hi = std::min(W, W - dc);
          if (lo > 0) std::fill(d, d + lo, T(0));
          for (int cc = lo; cc < hi; ++cc) d[cc] = src[cc + dc];
          if (hi < W) std::fill(d + hi, d + W, T(0));
        }
      }
    }
  }
}

template <class T>
void Tape<T>::col2im_add(const T* col, int C, int H, int W, T* x) {
  const int64_t HW = int64_t(H) * W;
  for (int c = 0; c < C; ++c) {
    for (int kr = 0; kr < 3; ++kr) {
      for (int kc = 0; kc < 3; ++kc) {
        const T* src = col + ((int64_t(c) * 9) + kr * 3 + kc) * HW;
        const int dr = kr - 1, dc = kc - 1;
        for (int r = 0; r < H; ++r) {
          const int sr = r + dr;
          if (sr < 0 || sr >= H) continue;
          T* dst = x + int64_t(c) * HW + int64_t(sr) * W;
          const T* s = src + int64_t(r) * W;
          const int lo = std::max(0, -dc);
          const int hi = std::min(W, W - dc);
          for (int cc = lo; cc < hi; ++cc) dst[cc + dc] += s[cc];
        }
      }
    }
  }
}

}  // namespace dermamap::nn
