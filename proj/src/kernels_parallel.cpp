#include <algorithm>
#include <vector>

#include "ruinscope/kernels.hpp"

#ifdef RUINSCOPE_HAVE_OPENMP
#include <omp.h>
#endif

namespace ruinscope::kernels::parallel {
namespace {

// Eight interleaved partial sums, combined in a fixed order.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) lane[l] += a[i + l] * b[i + l];
  }
  T acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          T* out = row + oy * ow;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(out, out + ow, T(0));
            continue;
          }
          const T* src = plane + iy * g.width;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            out[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* dx) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  std::fill(dx, dx + g.in_channels * g.height * g.width, T(0));
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = dx + c * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          T* dst = plane + iy * g.width;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_fwd(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y) {
  const std::size_t P = g.out_height() * g.out_width(), Q = g.patch();
  const long batch = static_cast<long>(g.batch);
#pragma omp parallel
  {
    std::vector<T> cols(Q * P);
#pragma omp for schedule(static)
    for (long n = 0; n < batch; ++n) {
      im2col(g, x + n * g.in_channels * g.height * g.width, cols.data());
      T* yn = y + n * g.out_channels * P;
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        T* row = yn + o * P;
        std::fill(row, row + P, b[o]);
        for (std::size_t q = 0; q < Q; ++q) axpy(w[o * Q + q], cols.data() + q * P, row, P);
      }
    }
  }
}

template <typename T>
void conv_bwd_input(const ConvGeometry& g, const T* dy, const T* w, T* dx) {
  const std::size_t P = g.out_height() * g.out_width(), Q = g.patch();
  const long batch = static_cast<long>(g.batch);
#pragma omp parallel
  {
    std::vector<T> dcols(Q * P);
#pragma omp for schedule(static)
    for (long n = 0; n < batch; ++n) {
      std::fill(dcols.begin(), dcols.end(), T(0));
      const T* dyn = dy + n * g.out_channels * P;
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        for (std::size_t q = 0; q < Q; ++q) axpy(w[o * Q + q], dyn + o * P, dcols.data() + q * P, P);
      }
      col2im(g, dcols.data(), dx + n * g.in_channels * g.height * g.width);
    }
  }
}

template <typename T>
void conv_bwd_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* db) {
  const std::size_t P = g.out_height() * g.out_width(), Q = g.patch();
  std::fill(dw, dw + g.out_channels * Q, T(0));
  std::fill(db, db + g.out_channels, T(0));
  std::vector<T> cols(Q * P);
  const long outs = static_cast<long>(g.out_channels);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x + n * g.in_channels * g.height * g.width, cols.data());
    const T* dyn = dy + n * g.out_channels * P;
#pragma omp parallel for schedule(static)
    for (long o = 0; o < outs; ++o) {
      const T* grow = dyn + o * P;
      T bsum = T(0);
      for (std::size_t p = 0; p < P; ++p) bsum += grow[p];
      db[o] += bsum;
      for (std::size_t q = 0; q < Q; ++q) dw[o * Q + q] += dot(grow, cols.data() + q * P, P);
    }
  }
}

template <typename T>
void mm(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(m); ++i) {
    T* row = c + i * n;
    std::fill(row, row + n, T(0));
    for (std::size_t q = 0; q < k; ++q) axpy(a[i * k + q], b + q * n, row, n);
  }
}

template <typename T>
void mm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static)
  for (long q = 0; q < static_cast<long>(k); ++q) {
    T* row = c + q * n;
    std::fill(row, row + n, T(0));
    for (std::size_t i = 0; i < m; ++i) axpy(a[i * k + q], b + i * n, row, n);
  }
}

template <typename T>
void mm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(m); ++i) {
    for (std::size_t q = 0; q < k; ++q) c[i * k + q] = dot(a + i * n, b + q * n, n);
  }
}

template <typename T>
void maxpool(std::size_t planes, std::size_t h, std::size_t w, std::size_t s, const T* x, T* y,
             std::size_t* argmax) {
  const std::size_t oh = h / s, ow = w / s;
#pragma omp parallel for schedule(static)
  for (long p = 0; p < static_cast<long>(planes); ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = p * h * w + (oy * s) * w + ox * s;
        for (std::size_t ky = 0; ky < s; ++ky) {
          for (std::size_t kx = 0; kx < s; ++kx) {
            const std::size_t idx = p * h * w + (oy * s + ky) * w + ox * s + kx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[(p * oh + oy) * ow + ox] = x[best];
        argmax[(p * oh + oy) * ow + ox] = best;
      }
    }
  }
}

}  // namespace

#define RUINSCOPE_PARALLEL_DEFS(T)                                                                            \
  void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y) {                     \
    conv_fwd(g, x, w, b, y);                                                                                 \
  }                                                                                                          \
  void conv2d_backward_input(const ConvGeometry& g, const T* dy, const T* w, T* dx) {                        \
    conv_bwd_input(g, dy, w, dx);                                                                            \
  }                                                                                                          \
  void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* db) {                \
    conv_bwd_weight(g, x, dy, dw, db);                                                                       \
  }                                                                                                          \
  void matmul(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {                   \
    mm(m, k, n, a, b, c);                                                                                    \
  }                                                                                                          \
  void matmul_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {                \
    mm_tn(m, k, n, a, b, c);                                                                                 \
  }                                                                                                          \
  void matmul_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {                \
    mm_nt(m, k, n, a, b, c);                                                                                 \
  }                                                                                                          \
  void max_pool2d_forward(std::size_t planes, std::size_t h, std::size_t w, std::size_t window, const T* x,  \
                          T* y, std::size_t* argmax) {                                                       \
    maxpool(planes, h, w, window, x, y, argmax);                                                             \
  }

RUINSCOPE_PARALLEL_DEFS(float)
RUINSCOPE_PARALLEL_DEFS(double)

int max_threads() {
#ifdef RUINSCOPE_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef RUINSCOPE_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace ruinscope::kernels::parallel
