#include "ruinscope/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ruinscope/error.hpp"
#include "ruinscope/kernels.hpp"
#include "ruinscope/rng.hpp"

namespace ruinscope::nn {

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Var<T>::grad() const {
  if (node_->grad.empty()) return Tensor<T>(node_->value.shape());
  return node_->grad;
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> fn) {
  Var<T> out(std::move(value));
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const Var<T>& p) { return p.requires_grad(); });
  if (needs) {
    out.node_->requires_grad = true;
    for (auto& p : parents) out.node_->parents.push_back(p.node());
    out.node_->backward = std::move(fn);
  }
  return out;
}

namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw Error(Errc::ShapeMismatch, op + ": " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank(const std::string& op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw Error(Errc::ShapeMismatch, op + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
  }
}

template <typename T>
Node<T>& parent(Node<T>& n, std::size_t i) {
  return *n.parents[i];
}

template <typename T>
bool wants(Node<T>& n, std::size_t i) {
  return n.parents[i]->requires_grad;
}

}  // namespace

template <typename T>
void backward(const Var<T>& loss) {
  if (loss.value().size() != 1) {
    throw Error(Errc::NonScalarLoss, "backward needs a scalar, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants(n, k)) continue;
      auto& g = parent(n, k).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> subtract(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_error("subtract", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    if (wants(n, 0)) {
      auto& g = parent(n, 0).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (wants(n, 1)) {
      auto& g = parent(n, 1).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = parent(n, 0).value;
    const auto& bv = parent(n, 1).value;
    if (wants(n, 0)) {
      auto& g = parent(n, 0).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (wants(n, 1)) {
      auto& g = parent(n, 1).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * factor;
  return make_result<T>(std::move(out), {a}, [factor](Node<T>& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * factor;
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] < T(0) ? T(0) : x.value()[i];  // NaN passes through
  return make_result<T>(std::move(out), {x}, [](Node<T>& n) {
    const auto& xv = parent(n, 0).value;
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > T(0)) g[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = T(0);
  for (T v : x.value().data()) acc += v;
  return make_result<T>(Tensor<T>({1}, {acc}), {x}, [](Node<T>& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  if (a.shape()[1] != b.shape()[0]) shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> out({m, n});
  kernels::parallel::matmul(m, k, n, a.value().ptr(), b.value().ptr(), out.ptr());
  return make_result<T>(std::move(out), {a, b}, [m, k, n](Node<T>& node) {
    if (wants(node, 0)) {
      Tensor<T> da({m, k});
      kernels::parallel::matmul_nt(m, k, n, node.grad.ptr(), parent(node, 1).value.ptr(), da.ptr());
      auto& g = parent(node, 0).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += da[i];
    }
    if (wants(node, 1)) {
      Tensor<T> db({k, n});
      kernels::parallel::matmul_tn(m, k, n, parent(node, 0).value.ptr(), node.grad.ptr(), db.ptr());
      auto& g = parent(node, 1).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += db[i];
    }
  });
}

template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b) {
  require_rank("add_bias", x.shape(), 2);
  if (b.shape() != Shape{x.shape()[1]}) shape_error("add_bias", x.shape(), b.shape());
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.value()[r * cols + c] + b.value()[c];
  }
  return make_result<T>(std::move(out), {x, b}, [rows, cols](Node<T>& n) {
    if (wants(n, 0)) {
      auto& g = parent(n, 0).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (wants(n, 1)) {
      auto& g = parent(n, 1).grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[c] += n.grad[r * cols + c];
      }
    }
  });
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return add_bias(matmul(x, w), b);
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad) {
  require_rank("conv2d input", x.shape(), 4);
  require_rank("conv2d weight", w.shape(), 4);
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (ws[1] != xs[1] || ws[2] != ws[3] || b.shape() != Shape{ws[0]} || stride == 0 ||
      xs[2] + 2 * pad < ws[2] || xs[3] + 2 * pad < ws[3]) {
    shape_error("conv2d", xs, ws);
  }
  kernels::ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, pad};
  Tensor<T> out({g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::parallel::conv2d_forward(g, x.value().ptr(), w.value().ptr(), b.value().ptr(), out.ptr());
  return make_result<T>(std::move(out), {x, w, b}, [g](Node<T>& n) {
    if (wants(n, 0)) {
      Tensor<T> dx(parent(n, 0).value.shape());
      kernels::parallel::conv2d_backward_input(g, n.grad.ptr(), parent(n, 1).value.ptr(), dx.ptr());
      auto& gx = parent(n, 0).grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dx[i];
    }
    if (wants(n, 1) || wants(n, 2)) {
      Tensor<T> dw(parent(n, 1).value.shape());
      Tensor<T> db(parent(n, 2).value.shape());
      kernels::parallel::conv2d_backward_weight(g, parent(n, 0).value.ptr(), n.grad.ptr(), dw.ptr(), db.ptr());
      if (wants(n, 1)) {
        auto& gw = parent(n, 1).grad_buffer();
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw[i];
      }
      if (wants(n, 2)) {
        auto& gb = parent(n, 2).grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += db[i];
      }
    }
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, std::size_t window) {
  require_rank("max_pool2d", x.shape(), 4);
  const auto& s = x.shape();
  if (window == 0 || s[2] % window || s[3] % window) {
    throw Error(Errc::ShapeMismatch, "max_pool2d: " + shape_str(s) + " not divisible by window " +
                                         std::to_string(window));
  }
  Tensor<T> out({s[0], s[1], s[2] / window, s[3] / window});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  kernels::parallel::max_pool2d_forward(s[0] * s[1], s[2], s[3], window, x.value().ptr(), out.ptr(),
                                        argmax->data());
  return make_result<T>(std::move(out), {x}, [argmax](Node<T>& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[(*argmax)[i]] += n.grad[i];
  });
}

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, std::size_t window) {
  require_rank("avg_pool2d", x.shape(), 4);
  const auto& s = x.shape();
  if (window == 0 || s[2] % window || s[3] % window) {
    throw Error(Errc::ShapeMismatch, "avg_pool2d: " + shape_str(s) + " not divisible by window " +
                                         std::to_string(window));
  }
  if (window == 1) return x;
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3], oh = h / window, ow = w / window;
  const T inv = T(1) / static_cast<T>(window * window);
  Tensor<T> out({s[0], s[1], oh, ow});
  const T* xv = x.value().ptr();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = T(0);
        for (std::size_t ky = 0; ky < window; ++ky) {
          const T* row = xv + (p * h + oy * window + ky) * w + ox * window;
          for (std::size_t kx = 0; kx < window; ++kx) acc += row[kx];
        }
        out[(p * oh + oy) * ow + ox] = acc * inv;
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [=](Node<T>& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          g[(p * h + y) * w + xx] += n.grad[(p * oh + y / window) * ow + xx / window] * inv;
        }
      }
    }
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank("global_avg_pool", x.shape(), 4);
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], area = s[2] * s[3];
  Tensor<T> out({s[0], s[1]});
  for (std::size_t p = 0; p < planes; ++p) {
    T acc = T(0);
    for (std::size_t i = 0; i < area; ++i) acc += x.value()[p * area + i];
    out[p] = acc / static_cast<T>(area);
  }
  return make_result<T>(std::move(out), {x}, [planes, area](Node<T>& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t p = 0; p < planes; ++p) {
      const T v = n.grad[p] / static_cast<T>(area);
      for (std::size_t i = 0; i < area; ++i) g[p * area + i] += v;
    }
  });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double p, bool train, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(Errc::ConfigError, "dropout probability must lie in [0,1)");
  if (!train || p == 0.0) return x;
  Rng rng(seed);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(x.value().size());
  for (auto& m : *mask) m = rng.uniform() < p ? T(0) : keep_scale;
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * (*mask)[i];
  return make_result<T>(std::move(out), {x}, [mask](Node<T>& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (*mask)[i];
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  require_rank("softmax", x.shape(), 2);
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.value().ptr() + r * cols;
    T* o = out.ptr() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T z = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  return make_result<T>(std::move(out), {x}, [rows, cols](Node<T>& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.value.ptr() + r * cols;
      const T* dy = n.grad.ptr() + r * cols;
      T dotv = T(0);
      for (std::size_t c = 0; c < cols; ++c) dotv += dy[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (dy[c] - dotv);
    }
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat of nothing");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw Error(Errc::ShapeMismatch, "concat axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_error("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) shape_error("concat", first, s);
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  Tensor<T> out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.value().ptr() + o * len, len, out.ptr() + o * out_shape[axis] * inner + offset);
    }
    offset += len;
  }
  const std::size_t total = out_shape[axis] * inner;
  return make_result<T>(std::move(out), parts, [outer, total, offsets](Node<T>& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      if (!wants(n, k)) continue;
      auto& g = parent(n, k).grad_buffer();
      const std::size_t len = g.size() / outer;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < len; ++i) g[o * len + i] += n.grad[o * total + offsets[k] + i];
      }
    }
  });
}

template <typename T>
Var<T> narrow(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    throw Error(Errc::ShapeMismatch, "narrow [" + std::to_string(start) + "," + std::to_string(start + length) +
                                         ") on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor<T> out(out_shape);
  const std::size_t src_len = s[axis] * inner, len = length * inner, off = start * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.value().ptr() + o * src_len + off, len, out.ptr() + o * len);
  }
  return make_result<T>(std::move(out), {x}, [=](Node<T>& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < len; ++i) g[o * src_len + off + i] += n.grad[o * len + i];
    }
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> index) {
  require_rank("gather_rows", x.shape(), 2);
  const std::size_t rows = x.shape()[0], d = x.shape()[1];
  Tensor<T> out({index.size(), d});
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= rows) throw Error(Errc::ShapeMismatch, "gather_rows index out of range");
    std::copy_n(x.value().ptr() + index[e] * d, d, out.ptr() + e * d);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  return make_result<T>(std::move(out), {x}, [idx, d](Node<T>& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t e = 0; e < idx->size(); ++e) {
      for (std::size_t j = 0; j < d; ++j) g[(*idx)[e] * d + j] += n.grad[e * d + j];
    }
  });
}

template <typename T>
Var<T> scatter_mean(const Var<T>& values, std::span<const std::size_t> group, std::size_t groups,
                    std::optional<std::span<const T>> weights) {
  require_rank("scatter_mean", values.shape(), 2);
  const std::size_t e_count = values.shape()[0], d = values.shape()[1];
  if (group.size() != e_count || (weights && weights->size() != e_count)) {
    throw Error(Errc::ShapeMismatch, "scatter_mean: " + std::to_string(e_count) + " rows, " +
                                         std::to_string(group.size()) + " group ids");
  }
  auto w = std::make_shared<std::vector<T>>(e_count, T(1));
  if (weights) std::copy(weights->begin(), weights->end(), w->begin());
  auto denom = std::make_shared<std::vector<T>>(groups, T(0));
  for (std::size_t e = 0; e < e_count; ++e) {
    if (group[e] >= groups) throw Error(Errc::ShapeMismatch, "scatter_mean group id out of range");
    (*denom)[group[e]] += (*w)[e];
  }
  Tensor<T> out({groups, d});
  for (std::size_t e = 0; e < e_count; ++e) {
    const T we = (*w)[e];
    T* row = out.ptr() + group[e] * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += we * values.value()[e * d + j];
  }
  for (std::size_t gi = 0; gi < groups; ++gi) {
    if ((*denom)[gi] == T(0)) continue;
    for (std::size_t j = 0; j < d; ++j) out[gi * d + j] /= (*denom)[gi];
  }
  auto grp = std::make_shared<std::vector<std::size_t>>(group.begin(), group.end());
  return make_result<T>(std::move(out), {values}, [w, denom, grp, d](Node<T>& n) {
    auto& g = parent(n, 0).grad_buffer();
    for (std::size_t e = 0; e < grp->size(); ++e) {
      const T dn = (*denom)[(*grp)[e]];
      if (dn == T(0)) continue;
      const T f = (*w)[e] / dn;
      for (std::size_t j = 0; j < d; ++j) g[e * d + j] += f * n.grad[(*grp)[e] * d + j];
    }
  });
}

template <typename T>
Var<T> weighted_cross_entropy(const Var<T>& logits, std::span<const int> labels, std::span<const T> class_weights,
                              std::span<const std::uint8_t> mask) {
  require_rank("weighted_cross_entropy", logits.shape(), 2);
  const std::size_t rows = logits.shape()[0], k = logits.shape()[1];
  if (labels.size() != rows || mask.size() != rows || class_weights.size() != k) {
    throw Error(Errc::ShapeMismatch, "weighted_cross_entropy: logits " + shape_str(logits.shape()) + ", " +
                                         std::to_string(labels.size()) + " labels, " +
                                         std::to_string(class_weights.size()) + " class weights");
  }
  auto probs = std::make_shared<std::vector<T>>(rows * k);
  T numer = T(0), total_w = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.value().ptr() + r * k;
    const T mx = *std::max_element(z, z + k);
    T s = T(0);
    for (std::size_t c = 0; c < k; ++c) s += std::exp(z[c] - mx);
    for (std::size_t c = 0; c < k; ++c) (*probs)[r * k + c] = std::exp(z[c] - mx) / s;
    if (!mask[r]) continue;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw Error(Errc::OutOfRange, "label " + std::to_string(labels[r]) + " outside [0," + std::to_string(k) + ")");
    }
    const T w = class_weights[labels[r]];
    numer += w * (std::log(s) + mx - z[labels[r]]);
    total_w += w;
  }
  if (total_w == T(0)) throw Error(Errc::AllMasked, "no unmasked samples in loss");
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  auto msk = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
  auto cw = std::make_shared<std::vector<T>>(class_weights.begin(), class_weights.end());
  return make_result<T>(Tensor<T>({1}, {numer / total_w}), {logits},
                        [probs, lab, msk, cw, total_w, rows, k](Node<T>& n) {
                          auto& g = parent(n, 0).grad_buffer();
                          const T up = n.grad[0];
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (!(*msk)[r]) continue;
                            const T f = up * (*cw)[(*lab)[r]] / total_w;
                            for (std::size_t c = 0; c < k; ++c) {
                              const T onehot = static_cast<int>(c) == (*lab)[r] ? T(1) : T(0);
                              g[r * k + c] += f * ((*probs)[r * k + c] - onehot);
                            }
                          }
                        });
}

#define RUINSCOPE_INSTANTIATE(T)                                                                              \
  template class Var<T>;                                                                                     \
  template Var<T> make_result<T>(Tensor<T>, std::vector<Var<T>>, std::function<void(Node<T>&)>);             \
  template void backward<T>(const Var<T>&);                                                                  \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                      \
  template Var<T> subtract<T>(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                      \
  template Var<T> scale<T>(const Var<T>&, T);                                                                \
  template Var<T> relu<T>(const Var<T>&);                                                                    \
  template Var<T> sum<T>(const Var<T>&);                                                                     \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> add_bias<T>(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> dense<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                     \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);          \
  template Var<T> max_pool2d<T>(const Var<T>&, std::size_t);                                                 \
  template Var<T> avg_pool2d<T>(const Var<T>&, std::size_t);                                                 \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                                         \
  template Var<T> dropout<T>(const Var<T>&, double, bool, std::uint64_t);                                    \
  template Var<T> softmax<T>(const Var<T>&);                                                                 \
  template Var<T> concat<T>(const std::vector<Var<T>>&, std::size_t);                                        \
  template Var<T> narrow<T>(const Var<T>&, std::size_t, std::size_t, std::size_t);                           \
  template Var<T> gather_rows<T>(const Var<T>&, std::span<const std::size_t>);                               \
  template Var<T> scatter_mean<T>(const Var<T>&, std::span<const std::size_t>, std::size_t,                  \
                                  std::optional<std::span<const T>>);                                        \
  template Var<T> weighted_cross_entropy<T>(const Var<T>&, std::span<const int>, std::span<const T>,         \
                                            std::span<const std::uint8_t>);

RUINSCOPE_INSTANTIATE(float)
RUINSCOPE_INSTANTIATE(double)

}  // namespace ruinscope::nn
