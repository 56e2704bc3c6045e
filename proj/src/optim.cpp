#include "ruinscope/optim.hpp"

#include <cmath>

#include "ruinscope/error.hpp"

namespace ruinscope::nn {

template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state) {
  if (params.size() != grads.size()) throw Error(Errc::ShapeMismatch, "adam_step: parameter/gradient count differs");
  if (!(state.config.lr > 0.0)) throw Error(Errc::ConfigError, "adam_step: learning rate must be positive");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape());
      state.second_moment.emplace_back(p.shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(Errc::ShapeMismatch, "adam_step: state tracks a different parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.first_moment[i].shape()) {
      throw Error(Errc::ShapeMismatch, "adam_step: parameter " + std::to_string(i) + " " +
                                           shape_str(params[i].shape()) + " vs gradient " +
                                           shape_str(grads[i].shape()));
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double g = grads[i][j];
      const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = c.lr * (mj / bc1) / (std::sqrt(vj / bc2) + c.eps);
      params[i][j] = static_cast<T>(params[i][j] - update);
    }
  }
}

template <typename T>
void adam_step(std::span<Var<T>> params, AdamState<T>& state) {
  std::vector<Tensor<T>> values;
  std::vector<Tensor<T>> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (auto& p : params) {
    values.push_back(std::move(p.mutable_value()));
    grads.push_back(p.grad());
  }
  try {
    adam_step<T>(std::span<Tensor<T>>(values), std::span<const Tensor<T>>(grads), state);
  } catch (...) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = std::move(values[i]);
    throw;
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = std::move(values[i]);
}

template void adam_step<float>(std::span<Tensor<float>>, std::span<const Tensor<float>>, AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>>, std::span<const Tensor<double>>, AdamState<double>&);
template void adam_step<float>(std::span<Var<float>>, AdamState<float>&);
template void adam_step<double>(std::span<Var<double>>, AdamState<double>&);

}  // namespace ruinscope::nn
