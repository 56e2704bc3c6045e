#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ruinscope/autograd.hpp"

namespace ruinscope::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Moments are created on the first call.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state);

/// Convenience form reading each parameter's accumulated gradient.
template <typename T>
void adam_step(std::span<Var<T>> params, AdamState<T>& state);

}  // namespace ruinscope::nn
