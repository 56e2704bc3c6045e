#include <limits>

#include "ruinscope/kernels.hpp"

namespace ruinscope::kernels::reference {
namespace {

template <typename T>
void conv_fwd(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T acc = b[o];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) || ix >= static_cast<long>(g.width)) {
                  continue;
                }
                acc += w[((o * g.in_channels + c) * k + ky) * k + kx] *
                       x[((n * g.in_channels + c) * g.height + iy) * g.width + ix];
              }
            }
          }
          y[((n * g.out_channels + o) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv_bwd_input(const ConvGeometry& g, const T* dy, const T* w, T* dx) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t i = 0; i < g.batch * g.in_channels * g.height * g.width; ++i) dx[i] = T(0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T grad = dy[((n * g.out_channels + o) * oh + oy) * ow + ox];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) || ix >= static_cast<long>(g.width)) {
                  continue;
                }
                dx[((n * g.in_channels + c) * g.height + iy) * g.width + ix] +=
                    w[((o * g.in_channels + c) * k + ky) * k + kx] * grad;
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_bwd_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* db) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    T bacc = T(0);
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t p = 0; p < oh * ow; ++p) bacc += dy[(n * g.out_channels + o) * oh * ow + p];
    }
    db[o] = bacc;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          T acc = T(0);
          for (std::size_t n = 0; n < g.batch; ++n) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) || ix >= static_cast<long>(g.width)) {
                  continue;
                }
                acc += dy[((n * g.out_channels + o) * oh + oy) * ow + ox] *
                       x[((n * g.in_channels + c) * g.height + iy) * g.width + ix];
              }
            }
          }
          dw[((o * g.in_channels + c) * k + ky) * k + kx] = acc;
        }
      }
    }
  }
}

template <typename T>
void mm(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t q = 0; q < k; ++q) acc += a[i * k + q] * b[q * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void mm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t q = 0; q < k; ++q) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + q] * b[i * n + j];
      c[q * n + j] = acc;
    }
  }
}

template <typename T>
void mm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t q = 0; q < k; ++q) {
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += a[i * n + j] * b[q * n + j];
      c[i * k + q] = acc;
    }
  }
}

template <typename T>
void maxpool(std::size_t planes, std::size_t h, std::size_t w, std::size_t s, const T* x, T* y,
             std::size_t* argmax) {
  const std::size_t oh = h / s, ow = w / s;
  for (std::size_t p = 0; p < planes; ++p) {
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

#define RUINSCOPE_REFERENCE_DEFS(T)                                                                           \
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

RUINSCOPE_REFERENCE_DEFS(float)
RUINSCOPE_REFERENCE_DEFS(double)

}  // namespace ruinscope::kernels::reference
