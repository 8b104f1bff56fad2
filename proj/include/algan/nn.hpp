#pragma once

#include "algan/autodiff.hpp"

#include <array>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace algan {

enum class Padding { same, valid };

/// Convolution geometry. `out_channels` is the raw convolution width; a
/// convolution that feeds a GLU declares twice its gated channel count.
struct ConvSpec {
  Index in_channels = 1;
  Index out_channels = 1;
  std::array<Index, 2> kernel{1, 1};  // (height, width)
  std::array<Index, 2> stride{1, 1};
  Padding padding = Padding::same;

  static ConvSpec conv1d(Index in, Index out, Index k, Index stride = 1) {
    return {in, out, {1, k}, {1, stride}, Padding::same};
  }
  static ConvSpec conv2d(Index in, Index out, std::array<Index, 2> k, std::array<Index, 2> stride) {
    return {in, out, k, stride, Padding::same};
  }
};

/// Output extent along one axis and the (before, after) zero padding.
/// Same-padding yields ceil(n / stride) and splits odd totals with the extra
/// element after.
struct AxisGeometry {
  Index out;
  Index pad_before;
  Index pad_after;
};
AxisGeometry conv_axis(Index n, Index kernel, Index stride, Padding padding);

/// Cross-correlation. `x` is C_in x H x W, `weight` is C_out x C_in x kh x kw,
/// `bias` (optional) has C_out entries.
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const std::optional<Var<S>>& bias, const ConvSpec& spec);

/// 1D form: `x` is C_in x W, `weight` is C_out x C_in x k.
template <typename S>
Var<S> conv1d(const Var<S>& x, const Var<S>& weight, const std::optional<Var<S>>& bias, const ConvSpec& spec);

/// Splits the leading axis into halves (A, B) and returns A * sigmoid(B).
template <typename S>
Var<S> glu(const Var<S>& x);

/// Per-channel standardization over all trailing axes, then gamma * x + beta.
template <typename S>
Var<S> instance_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, double eps = 1e-5);

/// (C*r) x W -> C x (W*r) with out[c][w*r + j] = in[c*r + j][w].
template <typename S>
Var<S> pixel_shuffle_1d(const Var<S>& x, Index r);

/// Inverse of pixel_shuffle_1d.
template <typename S>
Var<S> pixel_unshuffle_1d(const Var<S>& x, Index r);

// Fixed enumeration order; also the tie-breaking order of the adaptive loss.
enum class ActivationKind { relu, elu, selu, lrelu, sigmoid };

inline constexpr std::array<ActivationKind, 5> kActivationKinds{
    ActivationKind::relu, ActivationKind::elu, ActivationKind::selu, ActivationKind::lrelu,
    ActivationKind::sigmoid};

inline constexpr double kEluAlpha = 1.0;
inline constexpr double kSeluScale = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kLeakySlope = 0.2;

std::string_view activation_name(ActivationKind kind);

template <typename S>
Var<S> apply_activation(ActivationKind kind, const Var<S>& x);

/// Scalar reference of apply_activation, used by oracles and branch selection.
double activate(ActivationKind kind, double x);

/// Convolution followed by a GLU and, optionally, pixel shuffling and
/// instance normalization. Covers the input, down, residual and up units.
template <typename S>
struct GatedConv {
  ConvSpec spec;
  Index shuffle = 1;  // pixel-shuffle factor applied after the GLU
  bool normalize = true;
  Var<S> weight;
  Var<S> bias;
  Var<S> gamma;
  Var<S> beta;

  /// Gated (post-GLU, post-shuffle) channel count.
  Index channels() const { return spec.out_channels / 2 / shuffle; }
  std::vector<Var<S>> parameters() const;
};

/// Gaussian(0, init_std) weights, zero bias, unit gamma, zero beta.
/// `gated_channels` is the channel count after GLU and shuffling.
template <typename S>
GatedConv<S> make_gated_conv(Index in_channels, Index gated_channels, std::array<Index, 2> kernel,
                             std::array<Index, 2> stride, Index shuffle, bool normalize, int spatial_dims,
                             std::mt19937_64& rng, double init_std = 0.02);

/// IN(GLU(Conv(x))), or GLU(Conv(x)) for units without normalization.
template <typename S>
Var<S> downsample_block(const Var<S>& x, const GatedConv<S>& unit);

/// IN(PS(GLU(Conv(x)))).
template <typename S>
Var<S> upsample_block(const Var<S>& x, const GatedConv<S>& unit);

/// Plain convolution with bias (used for output projections).
template <typename S>
struct PlainConv {
  ConvSpec spec;
  Var<S> weight;
  Var<S> bias;
  std::vector<Var<S>> parameters() const { return {weight, bias}; }
};

template <typename S>
PlainConv<S> make_plain_conv(Index in_channels, Index out_channels, std::array<Index, 2> kernel,
                             int spatial_dims, std::mt19937_64& rng, double init_std = 0.02);

template <typename S>
Var<S> plain_conv_forward(const Var<S>& x, const PlainConv<S>& unit);

/// Fills `t` with N(0, stddev) draws in storage order.
template <typename S>
void fill_normal(Tensor<S>& t, std::mt19937_64& rng, double stddev);

}  // namespace algan
