#pragma once

#include <cstddef>

namespace ruinscope::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel * kernel; }
};

// Every routine below overwrites its output buffer. Each output element is
// reduced in a fixed index order, so results do not depend on thread count.

#define RUINSCOPE_KERNEL_DECLS(T)                                                                            \
  void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y);                     \
  void conv2d_backward_input(const ConvGeometry& g, const T* dy, const T* w, T* dx);                        \
  void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* db);                \
  /* c[m,n] = a[m,k] b[k,n] */                                                                               \
  void matmul(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c);                   \
  /* c[k,n] = a[m,k]^T b[m,n] */                                                                             \
  void matmul_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c);                \
  /* c[m,k] = a[m,n] b[k,n]^T */                                                                             \
  void matmul_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c);                \
  /* planes = batch * channels; window == stride; argmax holds flat input offsets */                        \
  void max_pool2d_forward(std::size_t planes, std::size_t h, std::size_t w, std::size_t window, const T* x,  \
                          T* y, std::size_t* argmax);

/// Straightforward loops kept as the correctness baseline.
namespace reference {
RUINSCOPE_KERNEL_DECLS(float)
RUINSCOPE_KERNEL_DECLS(double)
}  // namespace reference

/// im2col + blocked GEMM, OpenMP across samples / output rows.
namespace parallel {
RUINSCOPE_KERNEL_DECLS(float)
RUINSCOPE_KERNEL_DECLS(double)

int max_threads();
void set_threads(int n);
}  // namespace parallel

#undef RUINSCOPE_KERNEL_DECLS

}  // namespace ruinscope::kernels
