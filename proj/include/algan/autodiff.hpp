#pragma once

#include "algan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace algan {

/// Global switch for graph recording. Ops executed while recording is off
/// produce constants even when their inputs require gradients.
class GradMode {
 public:
  static bool enabled() { return enabled_flag(); }
  static void set_enabled(bool on) { enabled_flag() = on; }

 private:
  static bool& enabled_flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
struct Node {
  using Array = typename Tensor<Scalar>::Array;

  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads the gradient of this node and accumulates into `inputs`.
  std::function<void(const Tensor<Scalar>&)> backprop;

  Array& grad_buffer() {
    if (!has_grad) {
      grad = Tensor<Scalar>::zeros(value.shape());
      has_grad = true;
    }
    return grad.data();
  }
};

/// Handle to a value in the recorded computation graph.
///
/// Copies share the underlying node. Leaves created with `parameter()` keep
/// their accumulated gradient until `zero_grad()`; intermediate nodes are
/// released by `backward()`, so each graph is consumed by one backward pass.
template <typename Scalar_>
class Var {
 public:
  using Scalar = Scalar_;
  using NodeT = Node<Scalar>;

  Var() : node_(std::make_shared<NodeT>()) {}

  explicit Var(Tensor<Scalar> value, bool requires_grad = false) : node_(std::make_shared<NodeT>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var parameter(Tensor<Scalar> value) { return Var(std::move(value), true); }
  static Var constant(Tensor<Scalar> value) { return Var(std::move(value), false); }

  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index size() const { return node_->value.size(); }
  Scalar item() const { return node_->value.item(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->has_grad; }

  const Tensor<Scalar>& grad() const {
    if (!node_->has_grad) throw std::logic_error("no gradient recorded for this variable");
    return node_->grad;
  }

  Tensor<Scalar> grad_or_zero() const {
    return node_->has_grad ? node_->grad : Tensor<Scalar>::zeros(shape());
  }

  void zero_grad() {
    node_->has_grad = false;
    node_->grad = Tensor<Scalar>();
  }

  Var detach() const { return Var(node_->value, false); }

  NodeT* node() const { return node_.get(); }
  const std::shared_ptr<NodeT>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<NodeT> node_;
};

namespace detail {

/// Wraps an op result, recording `backprop` only when some input needs it.
template <typename Scalar>
Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs,
                   std::function<void(const Tensor<Scalar>&)> backprop) {
  Var<Scalar> out(std::move(value));
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto* node = out.node();
  node->requires_grad = true;
  for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
  node->backprop = std::move(backprop);
  return out;
}

template <typename Scalar>
void accumulate(Node<Scalar>* node, const typename Tensor<Scalar>::Array& g) {
  if (node->requires_grad) node->grad_buffer() += g;
}

}  // namespace detail

/// Reverse-mode pass from a scalar output. Leaves accumulate into `grad`;
/// the intermediate graph is released afterwards. A detached output is a
/// no-op (every gradient stays absent, i.e. zero).
template <typename Scalar>
void backward(const Var<Scalar>& output) {
  if (output.size() != 1) {
    throw std::invalid_argument("backward requires a scalar output, got shape " + to_string(output.shape()));
  }
  Node<Scalar>* root = output.node();
  if (!root->requires_grad) return;

  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> visited;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<Scalar>* child = node->inputs[next++].get();
      if (child->requires_grad && !child->inputs.empty() && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer() += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (node->backprop && node->has_grad) node->backprop(node->grad);
  }
  for (Node<Scalar>* node : order) {
    if (node->inputs.empty()) continue;
    node->backprop = nullptr;
    node->inputs.clear();
    node->requires_grad = false;
    node->has_grad = false;
    node->grad = Tensor<Scalar>();
  }
}

// Elementwise and reduction ops. Binary ops require identical shapes.
template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> mul(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> neg(const Var<S>& a);
template <typename S> Var<S> add_scalar(const Var<S>& a, S c);
template <typename S> Var<S> mul_scalar(const Var<S>& a, S c);
template <typename S> Var<S> sum(const Var<S>& a);
template <typename S> Var<S> mean(const Var<S>& a);
template <typename S> Var<S> abs(const Var<S>& a);
template <typename S> Var<S> square(const Var<S>& a);
template <typename S> Var<S> sigmoid(const Var<S>& a);
template <typename S> Var<S> relu(const Var<S>& a);
template <typename S> Var<S> elu(const Var<S>& a, S alpha);
template <typename S> Var<S> selu(const Var<S>& a, S scale, S alpha);
template <typename S> Var<S> leaky_relu(const Var<S>& a, S slope);
template <typename S> Var<S> reshape(const Var<S>& a, Shape shape);
/// Sum of same-shaped terms, left to right.
template <typename S> Var<S> add_n(std::span<const Var<S>> terms);

template <typename S> Var<S> operator+(const Var<S>& a, const Var<S>& b) { return add(a, b); }
template <typename S> Var<S> operator-(const Var<S>& a, const Var<S>& b) { return sub(a, b); }
template <typename S> Var<S> operator*(const Var<S>& a, const Var<S>& b) { return mul(a, b); }
template <typename S> Var<S> operator-(const Var<S>& a) { return neg(a); }
template <typename S> Var<S> operator*(const Var<S>& a, S c) { return mul_scalar(a, c); }
template <typename S> Var<S> operator*(S c, const Var<S>& a) { return mul_scalar(a, c); }
template <typename S> Var<S> operator+(const Var<S>& a, S c) { return add_scalar(a, c); }
template <typename S> Var<S> operator-(const Var<S>& a, S c) { return add_scalar(a, -c); }

/// Max over coordinates of |analytic - central difference| / max(1, |central difference|).
/// Only coordinates listed in `params` are perturbed; `fn` must rebuild its graph on each call.
struct GradCheckOptions {
  double h = 1e-5;
  Index max_coords_per_param = -1;  // < 0: every coordinate
  std::uint64_t seed = 0;
};

template <typename S>
S grad_check_params(const std::function<Var<S>()>& fn, std::vector<Var<S>> params,
                    const GradCheckOptions& opts = {}) {
  for (auto& p : params) p.zero_grad();
  Var<S> out = fn();
  backward(out);
  std::vector<Tensor<S>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad_or_zero());

  NoGradGuard no_grad;
  std::mt19937_64 rng(opts.seed);
  const S h = static_cast<S>(opts.h);
  S worst = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& values = params[k].mutable_value().data();
    std::vector<Index> coords(static_cast<std::size_t>(values.size()));
    for (Index i = 0; i < values.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
    if (opts.max_coords_per_param >= 0 && opts.max_coords_per_param < values.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(opts.max_coords_per_param));
    }
    for (Index i : coords) {
      const S saved = values[i];
      values[i] = saved + h;
      const S plus = fn().item();
      values[i] = saved - h;
      const S minus = fn().item();
      values[i] = saved;
      const S numeric = (plus - minus) / (2 * h);
      const S err = std::abs(analytic[k][i] - numeric) / std::max(S(1), std::abs(numeric));
      if (std::isnan(err)) throw std::runtime_error("grad_check produced NaN");
      worst = std::max(worst, err);
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

/// Single-input form: checks d fn(input) / d input.
template <typename S>
S grad_check(const std::function<Var<S>(const Var<S>&)>& fn, const Tensor<S>& input, S h) {
  Var<S> x = Var<S>::parameter(input);
  GradCheckOptions opts;
  opts.h = static_cast<double>(h);
  return grad_check_params<S>([&] { return fn(x); }, {x}, opts);
}

}  // namespace algan
