#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ruinscope/autograd.hpp"
#include "ruinscope/rng.hpp"

namespace testing_support {

using ruinscope::Rng;
using DTensor = ruinscope::nn::Tensor<double>;
using DVar = ruinscope::nn::Var<double>;

/// One randomly drawn instance of an op: its differentiable inputs and the
/// forward function over them.
struct GradCase {
  std::vector<DTensor> inputs;
  std::function<DVar(const std::vector<DVar>&)> forward;
};

struct OpSpec {
  std::string name;
  std::function<GradCase(Rng&)> draw;
};

inline DTensor random_tensor(Rng& rng, ruinscope::nn::Shape shape, double lo = -1.0, double hi = 1.0) {
  DTensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Values kept at least `gap` away from zero (ReLU kink).
inline DTensor away_from_zero(Rng& rng, ruinscope::nn::Shape shape, double gap = 1e-2) {
  DTensor t = random_tensor(rng, std::move(shape));
  for (auto& v : t.data()) {
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  }
  return t;
}

/// Distinct values (pairwise gap >= 1e-2) so pooling argmaxes are stable.
inline DTensor distinct_values(Rng& rng, ruinscope::nn::Shape shape) {
  DTensor t(std::move(shape));
  std::vector<double> v(t.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01 * static_cast<double>(i) - 0.005 * static_cast<double>(v.size());
  rng.shuffle(std::span<double>(v));
  t.vec() = v;
  return t;
}

/// Norm-wise relative error between analytic and central-difference
/// gradients of sum(forward(x) * R) for a fixed random R.
inline double gradient_error(const GradCase& c, Rng& rng, double h = 1e-5) {
  using namespace ruinscope::nn;
  std::vector<DVar> vars;
  for (const auto& t : c.inputs) vars.emplace_back(t, true);
  const DVar out = c.forward(vars);
  const DVar weights(random_tensor(rng, out.shape()));
  auto loss_of = [&](const std::vector<DVar>& in) { return sum(mul(c.forward(in), weights)); };
  backward(loss_of(vars));

  double diff2 = 0.0, ana2 = 0.0, num2 = 0.0;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    const DTensor analytic = vars[k].grad();
    for (std::size_t i = 0; i < c.inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<DVar> shifted;
        for (std::size_t j = 0; j < c.inputs.size(); ++j) {
          DTensor t = c.inputs[j];
          if (j == k) t[i] += delta;
          shifted.emplace_back(std::move(t), false);
        }
        return loss_of(shifted).value()[0];
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      ana2 += analytic[i] * analytic[i];
      num2 += numeric * numeric;
    }
  }
  const double scale = std::max({std::sqrt(ana2), std::sqrt(num2), 1e-12});
  return std::sqrt(diff2) / scale;
}

/// Every differentiable op of the autograd library with a random-shape sampler.
inline std::vector<OpSpec> differentiable_ops() {
  using namespace ruinscope::nn;
  using ruinscope::Rng;
  auto dim = [](Rng& rng, std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng.index(hi - lo + 1)); };
  std::vector<OpSpec> ops;
  ops.push_back({"add", [=](Rng& r) {
                   const Shape s{dim(r, 1, 5), dim(r, 1, 6)};
                   return GradCase{{random_tensor(r, s), random_tensor(r, s)},
                                   [](const std::vector<DVar>& v) { return add(v[0], v[1]); }};
                 }});
  ops.push_back({"subtract", [=](Rng& r) {
                   const Shape s{dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 4)};
                   return GradCase{{random_tensor(r, s), random_tensor(r, s)},
                                   [](const std::vector<DVar>& v) { return subtract(v[0], v[1]); }};
                 }});
  ops.push_back({"mul", [=](Rng& r) {
                   const Shape s{dim(r, 1, 6), dim(r, 1, 6)};
                   return GradCase{{random_tensor(r, s), random_tensor(r, s)},
                                   [](const std::vector<DVar>& v) { return mul(v[0], v[1]); }};
                 }});
  ops.push_back({"scale", [=](Rng& r) {
                   const double f = r.uniform(-3.0, 3.0);
                   return GradCase{{random_tensor(r, {dim(r, 1, 7), dim(r, 1, 4)})},
                                   [f](const std::vector<DVar>& v) { return scale(v[0], f); }};
                 }});
  ops.push_back({"relu", [=](Rng& r) {
                   return GradCase{{away_from_zero(r, {dim(r, 1, 6), dim(r, 1, 6)})},
                                   [](const std::vector<DVar>& v) { return relu(v[0]); }};
                 }});
  ops.push_back({"sum", [=](Rng& r) {
                   return GradCase{{random_tensor(r, {dim(r, 1, 5), dim(r, 1, 5), dim(r, 1, 3)})},
                                   [](const std::vector<DVar>& v) { return sum(v[0]); }};
                 }});
  ops.push_back({"matmul", [=](Rng& r) {
                   const std::size_t m = dim(r, 1, 6), k = dim(r, 1, 6), n = dim(r, 1, 6);
                   return GradCase{{random_tensor(r, {m, k}), random_tensor(r, {k, n})},
                                   [](const std::vector<DVar>& v) { return matmul(v[0], v[1]); }};
                 }});
  ops.push_back({"add_bias", [=](Rng& r) {
                   const std::size_t n = dim(r, 1, 6), d = dim(r, 1, 6);
                   return GradCase{{random_tensor(r, {n, d}), random_tensor(r, {d})},
                                   [](const std::vector<DVar>& v) { return add_bias(v[0], v[1]); }};
                 }});
  ops.push_back({"dense", [=](Rng& r) {
                   const std::size_t n = dim(r, 1, 5), i = dim(r, 1, 6), o = dim(r, 1, 5);
                   return GradCase{{random_tensor(r, {n, i}), random_tensor(r, {i, o}), random_tensor(r, {o})},
                                   [](const std::vector<DVar>& v) { return dense(v[0], v[1], v[2]); }};
                 }});
  ops.push_back({"conv2d", [=](Rng& r) {
                   const std::size_t n = dim(r, 1, 2), c = dim(r, 1, 3), o = dim(r, 1, 3);
                   const std::size_t k = 1 + 2 * dim(r, 0, 1), stride = dim(r, 1, 2), pad = dim(r, 0, k / 2);
                   const std::size_t h = k + dim(r, 0, 4), w = k + dim(r, 0, 4);
                   return GradCase{{random_tensor(r, {n, c, h, w}), random_tensor(r, {o, c, k, k}), random_tensor(r, {o})},
                                   [=](const std::vector<DVar>& v) { return conv2d(v[0], v[1], v[2], stride, pad); }};
                 }});
  ops.push_back({"max_pool2d", [=](Rng& r) {
                   const std::size_t win = dim(r, 2, 3);
                   const Shape s{dim(r, 1, 2), dim(r, 1, 3), win * dim(r, 1, 3), win * dim(r, 1, 3)};
                   return GradCase{{distinct_values(r, s)},
                                   [=](const std::vector<DVar>& v) { return max_pool2d(v[0], win); }};
                 }});
  ops.push_back({"avg_pool2d", [=](Rng& r) {
                   const std::size_t win = dim(r, 1, 4);
                   const Shape s{dim(r, 1, 2), dim(r, 1, 3), win * dim(r, 1, 3), win * dim(r, 1, 3)};
                   return GradCase{{random_tensor(r, s)},
                                   [=](const std::vector<DVar>& v) { return avg_pool2d(v[0], win); }};
                 }});
  ops.push_back({"global_avg_pool", [=](Rng& r) {
                   return GradCase{{random_tensor(r, {dim(r, 1, 3), dim(r, 1, 4), dim(r, 1, 5), dim(r, 1, 5)})},
                                   [](const std::vector<DVar>& v) { return global_avg_pool(v[0]); }};
                 }});
  ops.push_back({"dropout", [=](Rng& r) {
                   const std::uint64_t seed = r.next_u64();
                   const double p = r.uniform(0.1, 0.7);
                   return GradCase{{random_tensor(r, {dim(r, 1, 8), dim(r, 1, 8)})},
                                   [=](const std::vector<DVar>& v) { return dropout(v[0], p, true, seed); }};
                 }});
  ops.push_back({"softmax", [=](Rng& r) {
                   return GradCase{{random_tensor(r, {dim(r, 1, 5), dim(r, 2, 6)}, -3.0, 3.0)},
                                   [](const std::vector<DVar>& v) { return softmax(v[0]); }};
                 }});
  ops.push_back({"concat", [=](Rng& r) {
                   const std::size_t axis = dim(r, 0, 1);
                   const std::size_t n = dim(r, 1, 4), d = dim(r, 1, 4);
                   Shape a{n, d}, b{n, d};
                   (axis == 0 ? b[0] : b[1]) = dim(r, 1, 4);
                   return GradCase{{random_tensor(r, a), random_tensor(r, b)},
                                   [=](const std::vector<DVar>& v) { return concat<double>({v[0], v[1]}, axis); }};
                 }});
  ops.push_back({"narrow", [=](Rng& r) {
                   const Shape s{dim(r, 1, 4), dim(r, 2, 6), dim(r, 1, 3)};
                   const std::size_t axis = dim(r, 0, 2);
                   const std::size_t len = dim(r, 1, s[axis]);
                   const std::size_t start = dim(r, 0, s[axis] - len);
                   return GradCase{{random_tensor(r, s)},
                                   [=](const std::vector<DVar>& v) { return narrow(v[0], axis, start, len); }};
                 }});
  ops.push_back({"gather_rows", [=](Rng& r) {
                   const std::size_t n = dim(r, 1, 6), d = dim(r, 1, 4), e = dim(r, 1, 10);
                   std::vector<std::size_t> idx(e);
                   for (auto& i : idx) i = r.index(n);
                   return GradCase{{random_tensor(r, {n, d})},
                                   [=](const std::vector<DVar>& v) { return gather_rows(v[0], std::span<const std::size_t>(idx)); }};
                 }});
  ops.push_back({"scatter_mean", [=](Rng& r) {
                   const std::size_t e = dim(r, 1, 10), d = dim(r, 1, 4), groups = dim(r, 1, 5);
                   std::vector<std::size_t> group(e);
                   for (auto& g : group) g = r.index(groups);
                   return GradCase{{random_tensor(r, {e, d})}, [=](const std::vector<DVar>& v) {
                                     return scatter_mean(v[0], std::span<const std::size_t>(group), groups);
                                   }};
                 }});
  ops.push_back({"scatter_mean_weighted", [=](Rng& r) {
                   const std::size_t e = dim(r, 1, 10), d = dim(r, 1, 4), groups = dim(r, 1, 5);
                   std::vector<std::size_t> group(e);
                   std::vector<double> w(e);
                   for (auto& g : group) g = r.index(groups);
                   for (auto& x : w) x = r.uniform(0.05, 1.0);
                   return GradCase{{random_tensor(r, {e, d})}, [=](const std::vector<DVar>& v) {
                                     return scatter_mean(v[0], std::span<const std::size_t>(group), groups,
                                                         std::optional<std::span<const double>>(std::span<const double>(w)));
                                   }};
                 }});
  ops.push_back({"weighted_cross_entropy", [=](Rng& r) {
                   const std::size_t n = dim(r, 1, 8), k = dim(r, 2, 4);
                   std::vector<int> labels(n);
                   std::vector<std::uint8_t> mask(n);
                   std::vector<double> cw(k);
                   for (auto& l : labels) l = static_cast<int>(r.index(k));
                   for (auto& m : mask) m = r.uniform() < 0.8;
                   mask[r.index(n)] = 1;
                   for (auto& w : cw) w = r.uniform(0.2, 2.0);
                   return GradCase{{random_tensor(r, {n, k}, -2.0, 2.0)}, [=](const std::vector<DVar>& v) {
                                     return weighted_cross_entropy(v[0], std::span<const int>(labels),
                                                                   std::span<const double>(cw),
                                                                   std::span<const std::uint8_t>(mask));
                                   }};
                 }});
  return ops;
}

}  // namespace testing_support
