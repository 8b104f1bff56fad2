#include "algan/autodiff.hpp"

namespace algan {

namespace {

template <typename S>
void require_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                to_string(b.shape()));
  }
}

template <typename S, typename F, typename D>
Var<S> unary(const Var<S>& a, F forward, D derivative) {
  Tensor<S> out(a.shape(), a.value().data().unaryExpr(forward));
  auto* an = a.node();
  return detail::record<S>(std::move(out), {a}, [an, derivative](const Tensor<S>& g) {
    detail::accumulate(an, (g.data() * an->value.data().unaryExpr(derivative)).eval());
  });
}

}  // namespace

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a, b, "add");
  Tensor<S> out(a.shape(), a.value().data() + b.value().data());
  auto* an = a.node();
  auto* bn = b.node();
  return detail::record<S>(std::move(out), {a, b}, [an, bn](const Tensor<S>& g) {
    detail::accumulate(an, g.data());
    detail::accumulate(bn, g.data());
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a, b, "sub");
  Tensor<S> out(a.shape(), a.value().data() - b.value().data());
  auto* an = a.node();
  auto* bn = b.node();
  return detail::record<S>(std::move(out), {a, b}, [an, bn](const Tensor<S>& g) {
    detail::accumulate(an, g.data());
    detail::accumulate(bn, (-g.data()).eval());
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a, b, "mul");
  Tensor<S> out(a.shape(), a.value().data() * b.value().data());
  auto* an = a.node();
  auto* bn = b.node();
  return detail::record<S>(std::move(out), {a, b}, [an, bn](const Tensor<S>& g) {
    if (an->requires_grad) an->grad_buffer() += g.data() * bn->value.data();
    if (bn->requires_grad) bn->grad_buffer() += g.data() * an->value.data();
  });
}

template <typename S>
Var<S> neg(const Var<S>& a) {
  return mul_scalar(a, S(-1));
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S c) {
  Tensor<S> out(a.shape(), a.value().data() + c);
  auto* an = a.node();
  return detail::record<S>(std::move(out), {a}, [an](const Tensor<S>& g) { detail::accumulate(an, g.data()); });
}

template <typename S>
Var<S> mul_scalar(const Var<S>& a, S c) {
  Tensor<S> out(a.shape(), a.value().data() * c);
  auto* an = a.node();
  return detail::record<S>(std::move(out), {a}, [an, c](const Tensor<S>& g) {
    if (an->requires_grad) an->grad_buffer() += g.data() * c;
  });
}

template <typename S>
Var<S> sum(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::scalar(a.value().data().sum());
  auto* an = a.node();
  return detail::record<S>(std::move(out), {a}, [an](const Tensor<S>& g) {
    if (an->requires_grad) an->grad_buffer() += g.item();
  });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  const S n = static_cast<S>(a.size());
  Tensor<S> out = Tensor<S>::scalar(a.value().data().sum() / n);
  auto* an = a.node();
  return detail::record<S>(std::move(out), {a}, [an, n](const Tensor<S>& g) {
    if (an->requires_grad) an->grad_buffer() += g.item() / n;
  });
}

template <typename S>
Var<S> abs(const Var<S>& a) {
  return unary(
      a, [](S x) { return std::abs(x); },
      [](S x) { return x > 0 ? S(1) : (x < 0 ? S(-1) : S(0)); });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  return unary(
      a, [](S x) { return x * x; }, [](S x) { return 2 * x; });
}

namespace {
template <typename S>
S logistic(S x) {
  if (x >= 0) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}
}  // namespace

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  return unary(
      a, [](S x) { return logistic(x); },
      [](S x) {
        const S s = logistic(x);
        return s * (S(1) - s);
      });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  return unary(
      a, [](S x) { return x > 0 ? x : S(0); }, [](S x) { return x > 0 ? S(1) : S(0); });
}

template <typename S>
Var<S> elu(const Var<S>& a, S alpha) {
  return unary(
      a, [alpha](S x) { return x > 0 ? x : alpha * std::expm1(x); },
      [alpha](S x) { return x > 0 ? S(1) : alpha * std::exp(x); });
}

template <typename S>
Var<S> selu(const Var<S>& a, S scale, S alpha) {
  return unary(
      a, [scale, alpha](S x) { return scale * (x > 0 ? x : alpha * std::expm1(x)); },
      [scale, alpha](S x) { return scale * (x > 0 ? S(1) : alpha * std::exp(x)); });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope) {
  return unary(
      a, [slope](S x) { return x > 0 ? x : slope * x; }, [slope](S x) { return x > 0 ? S(1) : slope; });
}

template <typename S>
Var<S> reshape(const Var<S>& a, Shape shape) {
  Tensor<S> out = a.value().reshaped(std::move(shape));
  auto* an = a.node();
  return detail::record<S>(std::move(out), {a}, [an](const Tensor<S>& g) { detail::accumulate(an, g.data()); });
}

template <typename S>
Var<S> add_n(std::span<const Var<S>> terms) {
  if (terms.empty()) throw std::invalid_argument("add_n: no terms");
  Var<S> total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return total;
}

#define ALGAN_INSTANTIATE(S)                                              \
  template Var<S> add(const Var<S>&, const Var<S>&);                      \
  template Var<S> sub(const Var<S>&, const Var<S>&);                      \
  template Var<S> mul(const Var<S>&, const Var<S>&);                      \
  template Var<S> neg(const Var<S>&);                                     \
  template Var<S> add_scalar(const Var<S>&, S);                           \
  template Var<S> mul_scalar(const Var<S>&, S);                           \
  template Var<S> sum(const Var<S>&);                                     \
  template Var<S> mean(const Var<S>&);                                    \
  template Var<S> abs(const Var<S>&);                                     \
  template Var<S> square(const Var<S>&);                                  \
  template Var<S> sigmoid(const Var<S>&);                                 \
  template Var<S> relu(const Var<S>&);                                    \
  template Var<S> elu(const Var<S>&, S);                                  \
  template Var<S> selu(const Var<S>&, S, S);                              \
  template Var<S> leaky_relu(const Var<S>&, S);                           \
  template Var<S> reshape(const Var<S>&, Shape);                          \
  template Var<S> add_n(std::span<const Var<S>>);

ALGAN_INSTANTIATE(float)
ALGAN_INSTANTIATE(double)
#undef ALGAN_INSTANTIATE

}  // namespace algan
