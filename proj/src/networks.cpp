#include "algan/networks.hpp"

#include "algan/rng.hpp"

#include <stdexcept>
#include <string>

namespace algan {

GeneratorConfig GeneratorConfig::desk() {
  GeneratorConfig cfg;
  cfg.input_channels = {24, 128};
  cfg.down_channels = {128};
  cfg.n_dense_residual = 2;
  cfg.residual_channels = 128;
  cfg.up_channels = {128};
  return cfg;
}

Index GeneratorConfig::width_multiple() const {
  Index m = 1;
  for (std::size_t i = 0; i < down_channels.size(); ++i) m *= down_stride;
  return m;
}

void GeneratorConfig::validate() const {
  auto positive = [](const std::vector<Index>& v) {
    for (Index c : v)
      if (c <= 0) return false;
    return true;
  };
  if (input_dim <= 0 || kernel <= 0 || down_stride <= 0 || shuffle <= 0) {
    throw std::invalid_argument("generator config: dimensions, kernel, stride and shuffle must be positive");
  }
  if (input_channels.empty() || down_channels.empty() || up_channels.empty() || !positive(input_channels) ||
      !positive(down_channels) || !positive(up_channels)) {
    throw std::invalid_argument("generator config: channel lists must be non-empty and positive");
  }
  if (n_dense_residual < 0) throw std::invalid_argument("generator config: negative residual block count");
  if (residual_channels != down_channels.back()) {
    throw std::invalid_argument("generator config: residual_channels must equal the last downsampling width");
  }
  Index up = 1;
  for (std::size_t i = 0; i < up_channels.size(); ++i) up *= shuffle;
  if (up != width_multiple()) {
    throw std::invalid_argument("generator config: upsampling factor " + std::to_string(up) +
                                " does not undo downsampling factor " + std::to_string(width_multiple()));
  }
}

DiscriminatorConfig DiscriminatorConfig::desk() {
  DiscriminatorConfig cfg;
  cfg.input_channels = {8, 16};
  cfg.down_channels = {16, 16, 32, 32, 32};
  return cfg;
}

Index DiscriminatorConfig::min_width() const {
  Index m = 1;
  for (std::size_t i = 0; i < input_channels.size(); ++i) m *= input_stride[1];
  for (std::size_t i = 0; i < down_channels.size(); ++i) m *= down_stride[1];
  return m;
}

void DiscriminatorConfig::validate() const {
  if (input_channels.empty()) throw std::invalid_argument("discriminator config: no input convolutions");
  for (Index c : input_channels)
    if (c <= 0) throw std::invalid_argument("discriminator config: channel counts must be positive");
  for (Index c : down_channels)
    if (c <= 0) throw std::invalid_argument("discriminator config: channel counts must be positive");
  for (Index v : {kernel[0], kernel[1], input_stride[0], input_stride[1], down_stride[0], down_stride[1]})
    if (v <= 0) throw std::invalid_argument("discriminator config: kernel and strides must be positive");
}

template <typename S>
Var<S> dense_residual_forward(const Var<S>& x, std::span<const ResidualBlock<S>> blocks, DrnTrace<S>* trace) {
  for (const auto& b : blocks) {
    if (b.first.spec.in_channels != x.value().dim(0)) {
      throw std::invalid_argument("dense residual: input has " + std::to_string(x.value().dim(0)) +
                                  " channels, block expects " + std::to_string(b.first.spec.in_channels));
    }
  }
  std::vector<Var<S>> sums;
  Var<S> input = x;
  for (const auto& block : blocks) {
    Var<S> h = downsample_block(input, block.first);
    Var<S> out = downsample_block(h, block.second);
    std::vector<Var<S>> terms{out, h};
    terms.insert(terms.end(), sums.begin(), sums.end());
    terms.push_back(x);
    Var<S> summation = add_n<S>(terms);
    if (trace) {
      trace->first_unit.push_back(h);
      trace->block_output.push_back(out);
      trace->summation.push_back(summation);
    }
    sums.push_back(summation);
    input = summation;
  }
  return input;
}

namespace {

template <typename S>
void load_into(std::vector<Var<S>> params, std::span<const Tensor<S>> values) {
  if (params.size() != values.size()) {
    throw std::invalid_argument("parameter count mismatch: expected " + std::to_string(params.size()) + ", got " +
                                std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != values[i].shape()) {
      throw std::invalid_argument("parameter " + std::to_string(i) + " shape mismatch: " +
                                  to_string(params[i].shape()) + " vs " + to_string(values[i].shape()));
    }
    params[i].mutable_value() = values[i];
  }
}

template <typename S>
void append(std::vector<Var<S>>& out, const std::vector<Var<S>>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

template <typename S>
Generator<S>::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(splitmix64(seed));
  const std::array<Index, 2> k{1, cfg_.kernel};
  Index channels = cfg_.input_dim;
  for (Index c : cfg_.input_channels) {
    input_units.push_back(make_gated_conv<S>(channels, c, k, {1, 1}, 1, false, 1, rng));
    channels = c;
  }
  for (Index c : cfg_.down_channels) {
    down_units.push_back(make_gated_conv<S>(channels, c, k, {1, cfg_.down_stride}, 1, true, 1, rng));
    channels = c;
  }
  for (Index j = 0; j < cfg_.n_dense_residual; ++j) {
    ResidualBlock<S> block{make_gated_conv<S>(channels, channels, k, {1, 1}, 1, true, 1, rng),
                           make_gated_conv<S>(channels, channels, k, {1, 1}, 1, true, 1, rng)};
    residual_blocks.push_back(std::move(block));
  }
  for (Index c : cfg_.up_channels) {
    up_units.push_back(make_gated_conv<S>(channels, c, k, {1, 1}, cfg_.shuffle, true, 1, rng));
    channels = c;
  }
  output_unit = make_plain_conv<S>(channels, cfg_.input_dim, k, 1, rng);
}

template <typename S>
Var<S> Generator<S>::forward(const Var<S>& x) const {
  const auto& v = x.value();
  if (v.ndim() != 2 || v.dim(0) != cfg_.input_dim) {
    throw std::invalid_argument("generator: expected " + std::to_string(cfg_.input_dim) + " x T input, got " +
                                to_string(x.shape()));
  }
  if (v.dim(1) % cfg_.width_multiple() != 0) {
    throw std::invalid_argument("generator: input width " + std::to_string(v.dim(1)) + " is not a multiple of " +
                                std::to_string(cfg_.width_multiple()));
  }
  Var<S> h = x;
  for (const auto& unit : input_units) h = downsample_block(h, unit);
  for (const auto& unit : down_units) h = downsample_block(h, unit);
  h = dense_residual_forward<S>(h, residual_blocks);
  for (const auto& unit : up_units) h = upsample_block(h, unit);
  return plain_conv_forward(h, output_unit);
}

template <typename S>
std::vector<Var<S>> Generator<S>::parameters() const {
  std::vector<Var<S>> out;
  for (const auto& u : input_units) append(out, u.parameters());
  for (const auto& u : down_units) append(out, u.parameters());
  for (const auto& b : residual_blocks) {
    append(out, b.first.parameters());
    append(out, b.second.parameters());
  }
  for (const auto& u : up_units) append(out, u.parameters());
  append(out, output_unit.parameters());
  return out;
}

template <typename S>
void Generator<S>::load_parameters(std::span<const Tensor<S>> values) {
  load_into(parameters(), values);
}

template <typename S>
Discriminator<S>::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(splitmix64(seed));
  Index channels = 1;
  for (Index c : cfg_.input_channels) {
    input_units.push_back(make_gated_conv<S>(channels, c, cfg_.kernel, cfg_.input_stride, 1, false, 2, rng));
    channels = c;
  }
  for (Index c : cfg_.down_channels) {
    down_units.push_back(make_gated_conv<S>(channels, c, cfg_.kernel, cfg_.down_stride, 1, true, 2, rng));
    channels = c;
  }
  head = make_plain_conv<S>(channels, 1, {1, 1}, 2, rng);
}

template <typename S>
Var<S> Discriminator<S>::forward(const Var<S>& y) const {
  const auto& v = y.value();
  if (v.ndim() != 2) throw std::invalid_argument("discriminator: expected H x T input, got " + to_string(y.shape()));
  if (v.dim(1) < cfg_.min_width()) {
    throw std::invalid_argument("discriminator: input width " + std::to_string(v.dim(1)) + " is shorter than " +
                                std::to_string(cfg_.min_width()));
  }
  Var<S> h = reshape(y, {1, v.dim(0), v.dim(1)});
  for (const auto& unit : input_units) h = downsample_block(h, unit);
  for (const auto& unit : down_units) h = downsample_block(h, unit);
  return plain_conv_forward(h, head);
}

template <typename S>
std::vector<Var<S>> Discriminator<S>::parameters() const {
  std::vector<Var<S>> out;
  for (const auto& u : input_units) append(out, u.parameters());
  for (const auto& u : down_units) append(out, u.parameters());
  append(out, head.parameters());
  return out;
}

template <typename S>
void Discriminator<S>::load_parameters(std::span<const Tensor<S>> values) {
  load_into(parameters(), values);
}

template Var<float> dense_residual_forward(const Var<float>&, std::span<const ResidualBlock<float>>,
                                           DrnTrace<float>*);
template Var<double> dense_residual_forward(const Var<double>&, std::span<const ResidualBlock<double>>,
                                            DrnTrace<double>*);
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace algan
