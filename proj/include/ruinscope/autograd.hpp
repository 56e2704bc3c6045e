#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ruinscope/tensor.hpp"

namespace ruinscope::nn {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a value in the dynamic computation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);

  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient after backward(); zeros when the node was not reached.
  Tensor<T> grad() const;
  Tensor<T>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  bool defined() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
  template <typename U>
  friend Var<U> make_result(Tensor<U>, std::vector<Var<U>>, std::function<void(Node<U>&)>);
};

/// Reverse-mode sweep from a scalar. Gradients accumulate into every
/// reachable node that requires them.
template <typename T>
void backward(const Var<T>& loss);

// Elementwise (identical shapes).
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> subtract(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> relu(const Var<T>& x);

/// Sum of all elements, shape [1].
template <typename T> Var<T> sum(const Var<T>& x);

/// [m,k] x [k,n].
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// Adds b[C] along dimension 1 of a rank-2 input.
template <typename T> Var<T> add_bias(const Var<T>& x, const Var<T>& b);
/// x[N,I] w[I,O] + b[O].
template <typename T> Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// x[N,C,H,W], w[O,C,k,k], b[O].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad);
/// Non-overlapping window; H and W must be divisible by it.
template <typename T> Var<T> max_pool2d(const Var<T>& x, std::size_t window);
template <typename T> Var<T> avg_pool2d(const Var<T>& x, std::size_t window);
/// [N,C,H,W] -> [N,C].
template <typename T> Var<T> global_avg_pool(const Var<T>& x);

/// Inverted dropout: kept values scaled by 1/(1-p) in training, identity otherwise.
template <typename T> Var<T> dropout(const Var<T>& x, double p, bool train, std::uint64_t seed);

/// Row softmax of a rank-2 input.
template <typename T> Var<T> softmax(const Var<T>& x);

template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T> Var<T> narrow(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length);

/// Rows of x[N,D] selected by index -> [E,D].
template <typename T> Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> index);

/// Per-group (weighted) mean of values[E,D] rows -> [groups,D]. Groups
/// without members, or with zero total weight, produce zero rows. Rows are
/// accumulated in ascending index order.
template <typename T>
Var<T> scatter_mean(const Var<T>& values, std::span<const std::size_t> group, std::size_t groups,
                    std::optional<std::span<const T>> weights = std::nullopt);

/// -sum_b w[y_b] log softmax(z_b)[y_b] / sum_b w[y_b] over unmasked rows.
template <typename T>
Var<T> weighted_cross_entropy(const Var<T>& logits, std::span<const int> labels, std::span<const T> class_weights,
                              std::span<const std::uint8_t> mask);

}  // namespace ruinscope::nn
