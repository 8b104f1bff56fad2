#include "algan/nn.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace algan {

AxisGeometry conv_axis(Index n, Index kernel, Index stride, Padding padding) {
  if (kernel <= 0 || stride <= 0) throw std::invalid_argument("conv: kernel and stride must be positive");
  if (padding == Padding::valid) {
    if (n < kernel) throw std::invalid_argument("conv: input smaller than kernel with valid padding");
    return {(n - kernel) / stride + 1, 0, 0};
  }
  const Index out = (n + stride - 1) / stride;
  const Index total = std::max<Index>((out - 1) * stride + kernel - n, 0);
  return {out, total / 2, total - total / 2};
}

namespace {

template <typename S>
using RowMatrix = typename Tensor<S>::RowMatrix;

struct ConvGeometry {
  Index channels, height, width;
  Index kh, kw, sh, sw;
  Index out_h, out_w, pad_top, pad_left;
};

template <typename S>
void im2col(const S* x, const ConvGeometry& g, RowMatrix<S>& cols) {
  cols.setZero(g.channels * g.kh * g.kw, g.out_h * g.out_w);
  for (Index c = 0; c < g.channels; ++c) {
    const S* plane = x + c * g.height * g.width;
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j) {
        S* row = cols.row((c * g.kh + i) * g.kw + j).data();
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.sh - g.pad_top + i;
          if (ih < 0 || ih >= g.height) continue;
          const S* line = plane + ih * g.width;
          S* dst = row + oh * g.out_w;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.sw - g.pad_left + j;
            if (iw >= 0 && iw < g.width) dst[ow] = line[iw];
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const RowMatrix<S>& cols, const ConvGeometry& g, S* dx) {
  for (Index c = 0; c < g.channels; ++c) {
    S* plane = dx + c * g.height * g.width;
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j) {
        const S* row = cols.row((c * g.kh + i) * g.kw + j).data();
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.sh - g.pad_top + i;
          if (ih < 0 || ih >= g.height) continue;
          S* line = plane + ih * g.width;
          const S* src = row + oh * g.out_w;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.sw - g.pad_left + j;
            if (iw >= 0 && iw < g.width) line[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const std::optional<Var<S>>& bias, const ConvSpec& spec) {
  if (x.value().ndim() != 3) throw std::invalid_argument("conv2d: input must be C x H x W, got " + to_string(x.shape()));
  const Shape expected_w{spec.out_channels, spec.in_channels, spec.kernel[0], spec.kernel[1]};
  if (weight.shape() != expected_w) {
    throw std::invalid_argument("conv2d: weight shape " + to_string(weight.shape()) + " does not match conv geometry " +
                                to_string(expected_w));
  }
  if (x.value().dim(0) != spec.in_channels) {
    throw std::invalid_argument("conv: channel mismatch, input has " + std::to_string(x.value().dim(0)) +
                                " channels, spec expects " + std::to_string(spec.in_channels));
  }
  if (bias && bias->shape() != Shape{spec.out_channels}) throw std::invalid_argument("conv2d: bias shape mismatch");

  ConvGeometry g{};
  g.channels = spec.in_channels;
  g.height = x.value().dim(1);
  g.width = x.value().dim(2);
  g.kh = spec.kernel[0];
  g.kw = spec.kernel[1];
  g.sh = spec.stride[0];
  g.sw = spec.stride[1];
  const AxisGeometry ah = conv_axis(g.height, g.kh, g.sh, spec.padding);
  const AxisGeometry aw = conv_axis(g.width, g.kw, g.sw, spec.padding);
  g.out_h = ah.out;
  g.out_w = aw.out;
  g.pad_top = ah.pad_before;
  g.pad_left = aw.pad_before;

  auto cols = std::make_shared<RowMatrix<S>>();
  im2col(x.value().data().data(), g, *cols);
  const auto wmat = weight.value().matrix(spec.out_channels);

  Tensor<S> out(Shape{spec.out_channels, g.out_h, g.out_w});
  auto omat = out.matrix(spec.out_channels);
  omat.noalias() = wmat * (*cols);
  if (bias) omat.colwise() += bias->value().data().matrix();

  auto* xn = x.node();
  auto* wn = weight.node();
  auto* bn = bias ? bias->node() : nullptr;
  auto backprop = [xn, wn, bn, cols, g, spec](const Tensor<S>& grad) {
    const auto gmat = grad.matrix(spec.out_channels);
    if (wn->requires_grad) {
      typename Tensor<S>::MatrixMap(wn->grad_buffer().data(), spec.out_channels, cols->rows()).noalias() +=
          gmat * cols->transpose();
    }
    if (bn && bn->requires_grad) bn->grad_buffer() += gmat.rowwise().sum().array();
    if (xn->requires_grad) {
      RowMatrix<S> dcols = wn->value.matrix(spec.out_channels).transpose() * gmat;
      col2im(dcols, g, xn->grad_buffer().data());
    }
  };
  if (bias) return detail::record<S>(std::move(out), {x, weight, *bias}, backprop);
  return detail::record<S>(std::move(out), {x, weight}, backprop);
}

template <typename S>
Var<S> conv1d(const Var<S>& x, const Var<S>& weight, const std::optional<Var<S>>& bias, const ConvSpec& spec) {
  if (x.value().ndim() != 2) throw std::invalid_argument("conv1d: input must be C x W, got " + to_string(x.shape()));
  if (spec.kernel[0] != 1 || spec.stride[0] != 1) throw std::invalid_argument("conv1d: spec must be 1 x k");
  const Shape expected_w{spec.out_channels, spec.in_channels, spec.kernel[1]};
  if (weight.shape() != expected_w) {
    throw std::invalid_argument("conv1d: weight shape " + to_string(weight.shape()) + " does not match conv geometry " +
                                to_string(expected_w));
  }
  Var<S> x3 = reshape(x, {x.value().dim(0), 1, x.value().dim(1)});
  Var<S> w4 = reshape(weight, {spec.out_channels, spec.in_channels, 1, spec.kernel[1]});
  Var<S> y = conv2d(x3, w4, bias, spec);
  return reshape(y, {y.value().dim(0), y.value().dim(2)});
}

template <typename S>
Var<S> glu(const Var<S>& x) {
  const auto& v = x.value();
  if (v.ndim() < 1 || v.dim(0) % 2 != 0) {
    throw std::invalid_argument("glu: leading channel dimension must be even, got " + to_string(x.shape()));
  }
  Shape out_shape = v.shape();
  out_shape[0] /= 2;
  const Index half = v.size() / 2;
  const auto a = v.data().head(half);
  const auto gate = (S(1) / (S(1) + (-v.data().tail(half)).exp())).eval();
  Tensor<S> out(out_shape, a * gate);
  auto* xn = x.node();
  return detail::record<S>(std::move(out), {x}, [xn, half](const Tensor<S>& g) {
    if (!xn->requires_grad) return;
    const auto& in = xn->value.data();
    const auto gate = (S(1) / (S(1) + (-in.tail(half)).exp())).eval();
    auto& buf = xn->grad_buffer();
    buf.head(half) += g.data() * gate;
    buf.tail(half) += g.data() * in.head(half) * gate * (S(1) - gate);
  });
}

template <typename S>
Var<S> instance_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, double eps) {
  const auto& v = x.value();
  if (v.ndim() < 2) throw std::invalid_argument("instance_norm: expected C x ... input");
  const Index channels = v.dim(0);
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw std::invalid_argument("instance_norm: affine parameters must have one entry per channel");
  }
  const Index n = v.size() / channels;
  auto xhat = std::make_shared<RowMatrix<S>>(v.matrix(channels));
  auto inv_std = std::make_shared<Eigen::Array<S, Eigen::Dynamic, 1>>(channels);
  for (Index c = 0; c < channels; ++c) {
    auto row = xhat->row(c).array();
    const S mu = row.mean();
    row -= mu;
    const S var = row.square().mean();
    (*inv_std)[c] = S(1) / std::sqrt(var + static_cast<S>(eps));
    row *= (*inv_std)[c];
  }
  Tensor<S> out(v.shape());
  auto omat = out.matrix(channels);
  omat = (*xhat);
  omat.array().colwise() *= gamma.value().data();
  omat.array().colwise() += beta.value().data();

  auto* xn = x.node();
  auto* gn = gamma.node();
  auto* bn = beta.node();
  return detail::record<S>(std::move(out), {x, gamma, beta},
                           [xn, gn, bn, xhat, inv_std, channels, n](const Tensor<S>& grad) {
                             const auto gmat = grad.matrix(channels).array();
                             if (gn->requires_grad) gn->grad_buffer() += (gmat * xhat->array()).rowwise().sum();
                             if (bn->requires_grad) bn->grad_buffer() += gmat.rowwise().sum();
                             if (!xn->requires_grad) return;
                             auto dx = typename Tensor<S>::MatrixMap(xn->grad_buffer().data(), channels, n);
                             const S count = static_cast<S>(n);
                             for (Index c = 0; c < channels; ++c) {
                               const auto dxhat = (gmat.row(c) * gn->value[c]).eval();
                               const auto xh = xhat->row(c).array();
                               const S sum_d = dxhat.sum();
                               const S sum_dx = (dxhat * xh).sum();
                               dx.row(c).array() += (*inv_std)[c] / count * (count * dxhat - sum_d - xh * sum_dx);
                             }
                           });
}

template <typename S>
Var<S> pixel_shuffle_1d(const Var<S>& x, Index r) {
  const auto& v = x.value();
  if (r <= 0) throw std::invalid_argument("pixel_shuffle_1d: factor must be positive");
  if (v.ndim() != 2 || v.dim(0) % r != 0) {
    throw std::invalid_argument("pixel_shuffle_1d: channels " + to_string(x.shape()) + " not divisible by " +
                                std::to_string(r));
  }
  const Index c_out = v.dim(0) / r;
  const Index w = v.dim(1);
  Tensor<S> out(Shape{c_out, w * r});
  for (Index c = 0; c < c_out; ++c)
    for (Index j = 0; j < r; ++j)
      for (Index i = 0; i < w; ++i) out[c * w * r + i * r + j] = v[(c * r + j) * w + i];
  auto* xn = x.node();
  return detail::record<S>(std::move(out), {x}, [xn, r, c_out, w](const Tensor<S>& g) {
    if (!xn->requires_grad) return;
    auto& buf = xn->grad_buffer();
    for (Index c = 0; c < c_out; ++c)
      for (Index j = 0; j < r; ++j)
        for (Index i = 0; i < w; ++i) buf[(c * r + j) * w + i] += g[c * w * r + i * r + j];
  });
}

template <typename S>
Var<S> pixel_unshuffle_1d(const Var<S>& x, Index r) {
  const auto& v = x.value();
  if (r <= 0 || v.ndim() != 2 || v.dim(1) % r != 0) {
    throw std::invalid_argument("pixel_unshuffle_1d: width of " + to_string(x.shape()) + " not divisible by " +
                                std::to_string(r));
  }
  const Index c_in = v.dim(0);
  const Index w = v.dim(1) / r;
  Tensor<S> out(Shape{c_in * r, w});
  for (Index c = 0; c < c_in; ++c)
    for (Index j = 0; j < r; ++j)
      for (Index i = 0; i < w; ++i) out[(c * r + j) * w + i] = v[c * w * r + i * r + j];
  auto* xn = x.node();
  return detail::record<S>(std::move(out), {x}, [xn, r, c_in, w](const Tensor<S>& g) {
    if (!xn->requires_grad) return;
    auto& buf = xn->grad_buffer();
    for (Index c = 0; c < c_in; ++c)
      for (Index j = 0; j < r; ++j)
        for (Index i = 0; i < w; ++i) buf[c * w * r + i * r + j] += g[(c * r + j) * w + i];
  });
}

std::string_view activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu: return "ReLU";
    case ActivationKind::elu: return "ELU";
    case ActivationKind::selu: return "SELU";
    case ActivationKind::lrelu: return "LReLU";
    case ActivationKind::sigmoid: return "Sigmoid";
  }
  return "?";
}

double activate(ActivationKind kind, double x) {
  switch (kind) {
    case ActivationKind::relu: return x > 0 ? x : 0.0;
    case ActivationKind::elu: return x > 0 ? x : kEluAlpha * std::expm1(x);
    case ActivationKind::selu: return kSeluScale * (x > 0 ? x : kSeluAlpha * std::expm1(x));
    case ActivationKind::lrelu: return x > 0 ? x : kLeakySlope * x;
    case ActivationKind::sigmoid: return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  throw std::invalid_argument("unknown activation");
}

template <typename S>
Var<S> apply_activation(ActivationKind kind, const Var<S>& x) {
  switch (kind) {
    case ActivationKind::relu: return relu(x);
    case ActivationKind::elu: return elu(x, static_cast<S>(kEluAlpha));
    case ActivationKind::selu: return selu(x, static_cast<S>(kSeluScale), static_cast<S>(kSeluAlpha));
    case ActivationKind::lrelu: return leaky_relu(x, static_cast<S>(kLeakySlope));
    case ActivationKind::sigmoid: return sigmoid(x);
  }
  throw std::invalid_argument("unknown activation");
}

template <typename S>
void fill_normal(Tensor<S>& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(dist(rng));
}

template <typename S>
std::vector<Var<S>> GatedConv<S>::parameters() const {
  if (normalize) return {weight, bias, gamma, beta};
  return {weight, bias};
}

template <typename S>
GatedConv<S> make_gated_conv(Index in_channels, Index gated_channels, std::array<Index, 2> kernel,
                             std::array<Index, 2> stride, Index shuffle, bool normalize, int spatial_dims,
                             std::mt19937_64& rng, double init_std) {
  if (spatial_dims != 1 && spatial_dims != 2) throw std::invalid_argument("gated conv: spatial_dims must be 1 or 2");
  if (spatial_dims == 1 && (kernel[0] != 1 || stride[0] != 1)) {
    throw std::invalid_argument("gated conv: 1D units need a 1 x k kernel");
  }
  if (in_channels <= 0 || gated_channels <= 0 || shuffle <= 0) {
    throw std::invalid_argument("gated conv: channel counts and shuffle factor must be positive");
  }
  GatedConv<S> unit;
  unit.spec = ConvSpec::conv2d(in_channels, 2 * gated_channels * shuffle, kernel, stride);
  unit.shuffle = shuffle;
  unit.normalize = normalize;
  Shape wshape = spatial_dims == 1
                     ? Shape{unit.spec.out_channels, in_channels, kernel[1]}
                     : Shape{unit.spec.out_channels, in_channels, kernel[0], kernel[1]};
  Tensor<S> w(wshape);
  fill_normal(w, rng, init_std);
  unit.weight = Var<S>::parameter(std::move(w));
  unit.bias = Var<S>::parameter(Tensor<S>::zeros({unit.spec.out_channels}));
  if (normalize) {
    unit.gamma = Var<S>::parameter(Tensor<S>::constant({gated_channels}, S(1)));
    unit.beta = Var<S>::parameter(Tensor<S>::zeros({gated_channels}));
  }
  return unit;
}

namespace {
template <typename S, typename Unit>
Var<S> conv_any(const Var<S>& x, const Unit& unit) {
  if (unit.weight.value().ndim() == 3) return conv1d(x, unit.weight, std::optional<Var<S>>(unit.bias), unit.spec);
  return conv2d(x, unit.weight, std::optional<Var<S>>(unit.bias), unit.spec);
}
}  // namespace

template <typename S>
Var<S> downsample_block(const Var<S>& x, const GatedConv<S>& unit) {
  Var<S> h = glu(conv_any(x, unit));
  if (unit.normalize) h = instance_norm(h, unit.gamma, unit.beta);
  return h;
}

template <typename S>
Var<S> upsample_block(const Var<S>& x, const GatedConv<S>& unit) {
  Var<S> h = pixel_shuffle_1d(glu(conv_any(x, unit)), unit.shuffle);
  if (unit.normalize) h = instance_norm(h, unit.gamma, unit.beta);
  return h;
}

template <typename S>
PlainConv<S> make_plain_conv(Index in_channels, Index out_channels, std::array<Index, 2> kernel,
                             int spatial_dims, std::mt19937_64& rng, double init_std) {
  if (spatial_dims == 1 && kernel[0] != 1) throw std::invalid_argument("plain conv: 1D units need a 1 x k kernel");
  PlainConv<S> unit;
  unit.spec = ConvSpec::conv2d(in_channels, out_channels, kernel, {1, 1});
  Shape wshape = spatial_dims == 1 ? Shape{out_channels, in_channels, kernel[1]}
                                : Shape{out_channels, in_channels, kernel[0], kernel[1]};
  Tensor<S> w(wshape);
  fill_normal(w, rng, init_std);
  unit.weight = Var<S>::parameter(std::move(w));
  unit.bias = Var<S>::parameter(Tensor<S>::zeros({out_channels}));
  return unit;
}

template <typename S>
Var<S> plain_conv_forward(const Var<S>& x, const PlainConv<S>& unit) {
  return conv_any(x, unit);
}

#define ALGAN_INSTANTIATE(S)                                                                                   \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const std::optional<Var<S>>&, const ConvSpec&);       \
  template Var<S> conv1d(const Var<S>&, const Var<S>&, const std::optional<Var<S>>&, const ConvSpec&);       \
  template Var<S> glu(const Var<S>&);                                                                         \
  template Var<S> instance_norm(const Var<S>&, const Var<S>&, const Var<S>&, double);                        \
  template Var<S> pixel_shuffle_1d(const Var<S>&, Index);                                                     \
  template Var<S> pixel_unshuffle_1d(const Var<S>&, Index);                                                   \
  template Var<S> apply_activation(ActivationKind, const Var<S>&);                                            \
  template void fill_normal(Tensor<S>&, std::mt19937_64&, double);                                            \
  template struct GatedConv<S>;                                                                               \
  template GatedConv<S> make_gated_conv(Index, Index, std::array<Index, 2>, std::array<Index, 2>, Index, bool, int, \
                                        std::mt19937_64&, double);                                            \
  template Var<S> downsample_block(const Var<S>&, const GatedConv<S>&);                                       \
  template Var<S> upsample_block(const Var<S>&, const GatedConv<S>&);                                         \
  template PlainConv<S> make_plain_conv(Index, Index, std::array<Index, 2>, int, std::mt19937_64&, double);       \
  template Var<S> plain_conv_forward(const Var<S>&, const PlainConv<S>&);

ALGAN_INSTANTIATE(float)
ALGAN_INSTANTIATE(double)
#undef ALGAN_INSTANTIATE

}  // namespace algan
