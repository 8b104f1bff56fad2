#pragma once

#include "algan/autodiff.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace algan {

/// Bias-corrected Adam moments for one parameter group.
template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> first_moment;
  std::vector<Tensor<Scalar>> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(const std::vector<Tensor<Scalar>>& params, double b1 = 0.5, double b2 = 0.999, double eps = 1e-8)
      : beta1(b1), beta2(b2), epsilon(eps) {
    for (const auto& p : params) {
      first_moment.push_back(Tensor<Scalar>::zeros(p.shape()));
      second_moment.push_back(Tensor<Scalar>::zeros(p.shape()));
    }
  }
};

template <typename Scalar>
void adam_step(std::vector<Tensor<Scalar>*> params, const std::vector<Tensor<Scalar>>& grads,
               AdamState<Scalar>& state, double lr) {
  if (!(lr > 0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.first_moment[i].shape()) {
      throw std::invalid_argument("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
  }
  state.step_count += 1;
  const auto t = static_cast<double>(state.step_count);
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto correction1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, t));
  const auto correction2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, t));
  const auto eps = static_cast<Scalar>(state.epsilon);
  const auto step = static_cast<Scalar>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i].data();
    auto& v = state.second_moment[i].data();
    const auto& g = grads[i].data();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i]->data() -= step * (m / correction1) / ((v / correction2).sqrt() + eps);
  }
}

/// Steps graph leaves using their accumulated gradients (absent = zero).
template <typename Scalar>
void adam_step(std::vector<Var<Scalar>>& params, AdamState<Scalar>& state, double lr) {
  std::vector<Tensor<Scalar>*> values;
  std::vector<Tensor<Scalar>> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (auto& p : params) {
    values.push_back(&p.mutable_value());
    grads.push_back(p.grad_or_zero());
  }
  adam_step(std::move(values), grads, state, lr);
}

}  // namespace algan
