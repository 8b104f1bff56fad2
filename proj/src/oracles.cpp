#include "algan/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace algan::oracle {

Matrix conv1d(const Matrix& x, const TensorD& weight, const TensorD& bias, Index stride) {
  const Index cout = weight.dim(0), cin = weight.dim(1), k = weight.dim(2);
  if (x.rows() != cin) throw std::invalid_argument("oracle conv1d: channel mismatch");
  const Index w = x.cols();
  const Index out_w = (w + stride - 1) / stride;
  const Index total = std::max<Index>((out_w - 1) * stride + k - w, 0);
  const Index pad = total / 2;
  Matrix out(cout, out_w);
  for (Index o = 0; o < cout; ++o) {
    for (Index t = 0; t < out_w; ++t) {
      double acc = bias[o];
      for (Index c = 0; c < cin; ++c) {
        for (Index j = 0; j < k; ++j) {
          const Index src = t * stride + j - pad;
          if (src < 0 || src >= w) continue;
          acc += weight[(o * cin + c) * k + j] * x(c, src);
        }
      }
      out(o, t) = acc;
    }
  }
  return out;
}

Matrix gated_unit(const Matrix& x, const GatedConv<double>& unit) {
  if (unit.weight.value().ndim() != 3) throw std::invalid_argument("oracle gated_unit: 1D units only");
  const Matrix conv = conv1d(x, unit.weight.value(), unit.bias.value(), unit.spec.stride[1]);
  const Index half = conv.rows() / 2;
  Matrix h(half, conv.cols());
  for (Index c = 0; c < half; ++c) {
    for (Index t = 0; t < conv.cols(); ++t) h(c, t) = conv(c, t) / (1.0 + std::exp(-conv(c + half, t)));
  }
  if (!unit.normalize) return h;
  const double n = static_cast<double>(h.cols());
  for (Index c = 0; c < half; ++c) {
    double mean = 0.0;
    for (Index t = 0; t < h.cols(); ++t) mean += h(c, t);
    mean /= n;
    double var = 0.0;
    for (Index t = 0; t < h.cols(); ++t) var += (h(c, t) - mean) * (h(c, t) - mean);
    var /= n;
    const double scale = unit.gamma.value()[c] / std::sqrt(var + 1e-5);
    for (Index t = 0; t < h.cols(); ++t) h(c, t) = (h(c, t) - mean) * scale + unit.beta.value()[c];
  }
  return h;
}

Matrix drn_unrolled(const Matrix& x, std::span<const ResidualBlock<double>> blocks) {
  auto h = [&](std::size_t j, const Matrix& in) { return gated_unit(in, blocks[j].first); };
  auto hp = [&](std::size_t j, const Matrix& in) { return gated_unit(in, blocks[j].second); };
  switch (blocks.size()) {
    case 0:
      return x;
    case 1: {
      const Matrix h1 = h(0, x);
      return hp(0, h1) + h1 + x;
    }
    case 2: {
      const Matrix h1 = h(0, x);
      const Matrix i1 = hp(0, h1) + h1 + x;
      const Matrix h2 = h(1, i1);
      return hp(1, h2) + h2 + i1 + x;
    }
    case 3: {
      const Matrix h1 = h(0, x);
      const Matrix i1 = hp(0, h1) + h1 + x;
      const Matrix h2 = h(1, i1);
      const Matrix i2 = hp(1, h2) + h2 + i1 + x;
      const Matrix h3 = h(2, i2);
      return hp(2, h3) + h3 + i1 + i2 + x;
    }
    default:
      throw std::invalid_argument("oracle drn_unrolled: at most three blocks");
  }
}

Matrix drn_zero_weight(const Matrix& x, Index n_blocks) {
  if (n_blocks == 0) return x;
  return std::ldexp(1.0, static_cast<int>(n_blocks - 1)) * x;
}

double adaptive_min_bruteforce(const std::vector<double>& f, double target, double alpha, double beta) {
  double best = 0.0;
  for (std::size_t k = 0; k < kActivationKinds.size(); ++k) {
    double l1 = 0.0, l2 = 0.0;
    for (double v : f) {
      const double d = activate(kActivationKinds[k], v) - target;
      l1 += std::abs(d);
      l2 += d * d;
    }
    const double n = static_cast<double>(f.size());
    const double loss = alpha * (l1 / n) + beta * (l2 / n);
    if (k == 0 || loss < best) best = loss;
  }
  return best;
}

PointwiseFit fit_pointwise_discriminator(const DiscreteDistPair& dist, const TargetLabels& labels,
                                         const LossWeights& w, double lr, int max_steps, double tol) {
  auto d = Var<double>::parameter(TensorD::zeros({static_cast<Index>(dist.p_y.size())}));
  PointwiseFit fit;
  for (fit.steps = 0; fit.steps < max_steps; ++fit.steps) {
    d.zero_grad();
    backward(expected_discriminator_loss(d, dist, labels, w));
    const TensorD g = d.grad_or_zero();
    if (g.data().abs().maxCoeff() < tol) break;
    d.mutable_value().data() -= lr * g.data();
  }
  fit.scores.assign(d.value().data().begin(), d.value().data().end());
  return fit;
}

}  // namespace algan::oracle
