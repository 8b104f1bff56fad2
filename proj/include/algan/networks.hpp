#pragma once

#include "algan/nn.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace algan {

/// Generator topology. Defaults are the full-size network; `desk()` keeps the
/// block types but uses one down/up stage and two dense residual blocks so
/// 200 CPU epochs can learn the mapping.
struct GeneratorConfig {
  Index input_dim = 24;
  std::vector<Index> input_channels{24, 64};
  std::vector<Index> down_channels{64, 128, 256, 512, 1024};
  Index n_dense_residual = 8;
  Index residual_channels = 1024;
  std::vector<Index> up_channels{1024, 512, 256, 128, 64};
  Index kernel = 5;
  Index down_stride = 2;
  Index shuffle = 2;

  static GeneratorConfig full() { return {}; }
  static GeneratorConfig desk();

  /// Required divisor of the input width.
  Index width_multiple() const;
  void validate() const;
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct DiscriminatorConfig {
  std::vector<Index> input_channels{24, 64};
  std::vector<Index> down_channels{64, 128, 256, 512, 1024};
  std::array<Index, 2> kernel{4, 4};
  std::array<Index, 2> input_stride{1, 1};
  std::array<Index, 2> down_stride{1, 2};

  static DiscriminatorConfig full() { return {}; }
  static DiscriminatorConfig desk();

  /// Shortest accepted input width.
  Index min_width() const;
  void validate() const;
  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

/// One dense residual block: h (first unit) and h' (second unit).
template <typename S>
struct ResidualBlock {
  GatedConv<S> first;
  GatedConv<S> second;
};

/// Intermediate values of the dense residual stack.
template <typename S>
struct DrnTrace {
  std::vector<Var<S>> first_unit;    // h_j applied to the block input
  std::vector<Var<S>> block_output;  // O_j = h'_j(h_j(.))
  std::vector<Var<S>> summation;     // I_j
};

/// Dense residual stack. With I_0 = x:
///   O_j = h'_j(h_j(I_{j-1}))
///   I_j = O_j + h_j(I_{j-1}) + sum_{s<j} I_s + x
/// and the result is the last summation I_n.
template <typename S>
Var<S> dense_residual_forward(const Var<S>& x, std::span<const ResidualBlock<S>> blocks,
                              DrnTrace<S>* trace = nullptr);

template <typename S>
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  /// input_dim x T -> input_dim x T; T must be a multiple of width_multiple().
  Var<S> forward(const Var<S>& x) const;
  Var<S> operator()(const Var<S>& x) const { return forward(x); }

  std::vector<Var<S>> parameters() const;
  /// Overwrites parameter values in parameters() order.
  void load_parameters(std::span<const Tensor<S>> values);
  const GeneratorConfig& config() const { return cfg_; }

  std::vector<GatedConv<S>> input_units;
  std::vector<GatedConv<S>> down_units;
  std::vector<ResidualBlock<S>> residual_blocks;
  std::vector<GatedConv<S>> up_units;
  PlainConv<S> output_unit;

 private:
  GeneratorConfig cfg_;
};

template <typename S>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  /// H x T feature map -> 1 x H x T' raw score map.
  Var<S> forward(const Var<S>& y) const;
  Var<S> operator()(const Var<S>& y) const { return forward(y); }

  std::vector<Var<S>> parameters() const;
  void load_parameters(std::span<const Tensor<S>> values);
  const DiscriminatorConfig& config() const { return cfg_; }

  std::vector<GatedConv<S>> input_units;
  std::vector<GatedConv<S>> down_units;
  PlainConv<S> head;

 private:
  DiscriminatorConfig cfg_;
};

template <typename S>
Var<S> generator_forward(const Generator<S>& gen, const Var<S>& x) {
  return gen.forward(x);
}

template <typename S>
Var<S> discriminator_forward(const Discriminator<S>& disc, const Var<S>& y) {
  return disc.forward(y);
}

extern template class Generator<float>;
extern template class Generator<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace algan
