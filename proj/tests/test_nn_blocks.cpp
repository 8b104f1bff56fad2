#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "algan/nn.hpp"
#include "algan/oracles.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace algan;
using algan::testing::max_abs_diff;
using algan::testing::random_tensor;

namespace {

using OptVar = std::optional<Var<double>>;

TensorD run_conv1d(const TensorD& x, const TensorD& w, Index stride, Padding padding = Padding::same) {
  ConvSpec spec = ConvSpec::conv1d(x.dim(0), w.dim(0), w.dim(2), stride);
  spec.padding = padding;
  return conv1d(Var<double>(x), Var<double>(w), OptVar{}, spec).value();
}

GatedConv<double> unit_1d(Index in, Index gated, Index k, Index stride, Index shuffle, bool normalize,
                          std::uint64_t seed, double init_std = 0.3) {
  std::mt19937_64 rng(seed);
  auto u = make_gated_conv<double>(in, gated, {1, k}, {1, stride}, shuffle, normalize, 1, rng, init_std);
  fill_normal(u.bias.mutable_value(), rng, 0.1);
  if (normalize) {
    fill_normal(u.gamma.mutable_value(), rng, 1.0);
    fill_normal(u.beta.mutable_value(), rng, 1.0);
  }
  return u;
}

}  // namespace

TEST_CASE("same padding geometry") {
  CHECK(conv_axis(4, 3, 1, Padding::same).out == 4);
  CHECK(conv_axis(4, 3, 2, Padding::same).out == 2);
  CHECK(conv_axis(128, 5, 2, Padding::same).out == 64);
  const auto even = conv_axis(8, 4, 1, Padding::same);
  CHECK(even.pad_before == 1);
  CHECK(even.pad_after == 2);
  CHECK(conv_axis(4, 2, 2, Padding::valid).out == 2);
}

TEST_CASE("conv1d hand examples") {
  const auto x = TensorD::from({1, 4}, {1, 2, 3, 4});
  CHECK(run_conv1d(x, TensorD::from({1, 1, 3}, {0, 1, 0}), 1) == x);
  CHECK(run_conv1d(x, TensorD::from({1, 1, 3}, {1, 1, 1}), 1) == TensorD::from({1, 4}, {3, 6, 9, 7}));
  CHECK(run_conv1d(x, TensorD::from({1, 1, 3}, {1, 1, 1}), 2).shape() == Shape{1, 2});

  const auto w = TensorD::from({1, 2, 3}, {1, 1, 1, 1, 1, 1});
  CHECK_THROWS_WITH_AS(conv1d(Var<double>(x), Var<double>(w), OptVar{}, ConvSpec::conv1d(2, 1, 3)),
                       doctest::Contains("channel mismatch"), std::invalid_argument);

  const auto xr = random_tensor({3, 11}, 1);
  const auto wr = random_tensor({4, 3, 5}, 2);
  for (Index stride : {1, 2, 3}) {
    const auto got = run_conv1d(xr, wr, stride);
    const auto expected = oracle::conv1d(xr.matrix(3), wr, TensorD::zeros({4}), stride);
    REQUIRE(got.dim(1) == expected.cols());
    for (Index o = 0; o < 4; ++o)
      for (Index t = 0; t < expected.cols(); ++t) CHECK(got.matrix(4)(o, t) == doctest::Approx(expected(o, t)));
  }
}

TEST_CASE("conv2d hand examples") {
  const auto x = random_tensor({1, 3, 3}, 3);
  const auto ident = TensorD::from({1, 1, 1, 1}, {1});
  CHECK(conv2d(Var<double>(x), Var<double>(ident), OptVar{}, ConvSpec::conv2d(1, 1, {1, 1}, {1, 1})).value() == x);

  ConvSpec spec = ConvSpec::conv2d(1, 1, {2, 2}, {2, 2});
  spec.padding = Padding::valid;
  const auto ones = TensorD::constant({1, 4, 4}, 1.0);
  const auto out = conv2d(Var<double>(ones), Var<double>(TensorD::constant({1, 1, 2, 2}, 1.0)), OptVar{}, spec);
  CHECK(out.value() == TensorD::constant({1, 2, 2}, 4.0));

  const auto map = TensorD::zeros({1, 24, 128});
  const auto halved = conv2d(Var<double>(map), Var<double>(TensorD::zeros({1, 1, 4, 4})), OptVar{},
                             ConvSpec::conv2d(1, 1, {4, 4}, {1, 2}));
  CHECK(halved.shape() == Shape{1, 24, 64});
}

TEST_CASE("glu") {
  CHECK(glu(Var<double>(TensorD::from({2, 1}, {1, 0}))).value()[0] == 0.5);
  const auto out = glu(Var<double>(TensorD::from({4}, {1, -1, 0, 0}))).value();
  CHECK(out == TensorD::from({2}, {0.5, -0.5}));
  const auto saturated = glu(Var<double>(TensorD::from({2}, {3.0, 800.0}))).value();
  CHECK(saturated[0] == 3.0);
  const auto zero = glu(Var<double>(TensorD::from({2, 2}, {0, 0, 5, -7}))).value();
  CHECK((zero.data() == 0).all());
  CHECK_THROWS_AS(glu(Var<double>(TensorD::zeros({3, 2}))), std::invalid_argument);
}

TEST_CASE("instance norm") {
  auto one = Var<double>::constant(TensorD::constant({1}, 1.0));
  auto zero = Var<double>::constant(TensorD::zeros({1}));
  const auto constant = instance_norm(Var<double>(TensorD::constant({1, 5}, 3.0)), one, zero).value();
  CHECK((constant.data() == 0).all());

  const auto pair = instance_norm(Var<double>(TensorD::from({1, 2}, {1, 3})), one, zero, 1e-300).value();
  CHECK(pair[0] == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(pair[1] == doctest::Approx(1.0).epsilon(1e-14));

  auto beta = Var<double>::constant(TensorD::from({2}, {0.25, -4}));
  const auto collapsed = instance_norm(Var<double>(random_tensor({2, 6}, 4)),
                                       Var<double>::constant(TensorD::zeros({2})), beta)
                             .value();
  for (Index t = 0; t < 6; ++t) {
    CHECK(collapsed.matrix(2)(0, t) == 0.25);
    CHECK(collapsed.matrix(2)(1, t) == -4.0);
  }
}

TEST_CASE("pixel shuffle") {
  const auto x = TensorD::from({2, 2}, {1, 2, 3, 4});
  CHECK(pixel_shuffle_1d(Var<double>(x), 2).value() == TensorD::from({1, 4}, {1, 3, 2, 4}));
  CHECK(pixel_shuffle_1d(Var<double>(x), 1).value() == x);
  const auto r = random_tensor({6, 5}, 5);
  for (Index f : {1, 2, 3, 6}) {
    CHECK(pixel_unshuffle_1d(pixel_shuffle_1d(Var<double>(r), f), f).value() == r);
  }
  CHECK_THROWS_AS(pixel_shuffle_1d(Var<double>(r), 4), std::invalid_argument);
}

TEST_CASE("activations") {
  auto at = [](ActivationKind k, double v) { return apply_activation(k, Var<double>(TensorD::scalar(v))).item(); };
  CHECK(at(ActivationKind::relu, -3) == 0.0);
  CHECK(at(ActivationKind::lrelu, -3) == doctest::Approx(-0.6).epsilon(1e-15));
  CHECK(at(ActivationKind::sigmoid, 0) == 0.5);
  CHECK(at(ActivationKind::selu, 1) == 1.0507009873554805);
  CHECK(at(ActivationKind::elu, -1) == doctest::Approx(std::exp(-1.0) - 1.0));
  CHECK(kActivationKinds.size() == 5);
  CHECK(activation_name(kActivationKinds[0]) == "ReLU");
  CHECK(activation_name(kActivationKinds[4]) == "Sigmoid");
  for (auto k : kActivationKinds) {
    for (double v : {-2.5, -0.1, 0.0, 0.7, 3.0}) CHECK(at(k, v) == doctest::Approx(activate(k, v)).epsilon(1e-15));
  }
}

TEST_CASE("block composites") {
  SUBCASE("zero weights give zero output") {
    std::mt19937_64 rng(1);
    auto down = make_gated_conv<double>(4, 6, {1, 5}, {1, 2}, 1, true, 1, rng, 0.0);
    auto up = make_gated_conv<double>(4, 3, {1, 5}, {1, 1}, 2, true, 1, rng, 0.0);
    const auto x = random_tensor({4, 128}, 6);
    const auto d = downsample_block(Var<double>(x), down).value();
    CHECK(d.shape() == Shape{6, 64});
    CHECK((d.data() == 0).all());
    const auto u = upsample_block(Var<double>(random_tensor({4, 4}, 7)), up).value();
    CHECK(u.shape() == Shape{3, 8});
    CHECK((u.data() == 0).all());
  }
  SUBCASE("downsample matches the direct-loop reference") {
    const auto unit = unit_1d(3, 2, 5, 2, 1, true, 8);
    const auto x = random_tensor({3, 16}, 9);
    const auto got = downsample_block(Var<double>(x), unit).value();
    const auto expected = oracle::gated_unit(x.matrix(3), unit);
    double err = 0.0;
    for (Index c = 0; c < 2; ++c)
      for (Index t = 0; t < 8; ++t) err = std::max(err, std::abs(got.matrix(2)(c, t) - expected(c, t)));
    CHECK(err < 1e-12);
  }
  SUBCASE("normalization sits after the gate") {
    // Hand example: conv is the identity on two channels, so the block sees
    // A = [1, 3] and B = [0, 2]. GLU then IN gives a different map from IN then GLU.
    std::mt19937_64 rng(0);
    auto unit = make_gated_conv<double>(2, 1, {1, 1}, {1, 1}, 1, true, 1, rng, 0.0);
    unit.weight.mutable_value() = TensorD::from({2, 2, 1}, {1, 0, 0, 1});
    const auto x = TensorD::from({2, 2}, {1, 3, 0, 2});
    const auto got = downsample_block(Var<double>(x), unit).value();
    const double g0 = 0.5, g1 = 3.0 / (1.0 + std::exp(-2.0));
    const double mean = 0.5 * (g0 + g1), sd = std::sqrt(0.25 * (g1 - g0) * (g1 - g0) + 1e-5);
    CHECK(got[0] == doctest::Approx((g0 - mean) / sd).epsilon(1e-14));
    CHECK(got[1] == doctest::Approx((g1 - mean) / sd).epsilon(1e-14));

    auto one = Var<double>::constant(TensorD::constant({2}, 1.0));
    auto zero = Var<double>::constant(TensorD::zeros({2}));
    const auto swapped = glu(instance_norm(Var<double>(x), one, zero)).value();
    CHECK(max_abs_diff(got, swapped) > 0.1);
  }
}

TEST_CASE("block gradients") {
  GradCheckOptions opts;
  SUBCASE("conv2d with stride and even kernel") {
    auto w = Var<double>::parameter(random_tensor({4, 2, 4, 4}, 10, 0.3));
    auto b = Var<double>::parameter(random_tensor({4}, 11, 0.1));
    auto x = Var<double>::parameter(random_tensor({2, 5, 9}, 12));
    auto wts = Var<double>::constant(random_tensor({4, 5, 5}, 13));
    const auto spec = ConvSpec::conv2d(2, 4, {4, 4}, {1, 2});
    auto fn = [&] { return sum(mul(conv2d(x, w, OptVar(b), spec), wts)); };
    CHECK(grad_check_params<double>(fn, {x, w, b}, opts) < 1e-4);
  }
  SUBCASE("pixel shuffle") {
    auto x = Var<double>::parameter(random_tensor({4, 3}, 14));
    auto wts = Var<double>::constant(random_tensor({2, 6}, 15));
    auto fn = [&] { return sum(mul(pixel_shuffle_1d(x, 2), wts)); };
    CHECK(grad_check_params<double>(fn, {x}, opts) < 1e-4);
  }
  SUBCASE("downsample and upsample units") {
    const auto down = unit_1d(3, 4, 5, 2, 1, true, 16);
    const auto up = unit_1d(4, 3, 5, 1, 2, true, 17);
    auto x = Var<double>::parameter(random_tensor({3, 8}, 18));
    auto wts = Var<double>::constant(random_tensor({3, 8}, 19));
    auto fn = [&] { return sum(mul(upsample_block(downsample_block(x, down), up), wts)); };
    std::vector<Var<double>> params{x};
    for (auto& p : down.parameters()) params.push_back(p);
    for (auto& p : up.parameters()) params.push_back(p);
    CHECK(grad_check_params<double>(fn, params, opts) < 1e-4);
  }
  SUBCASE("activations") {
    for (auto k : kActivationKinds) {
      auto fn = [k](const Var<double>& v) { return sum(square(apply_activation(k, v))); };
      CHECK(grad_check<double>(fn, random_tensor({7}, 20), 1e-5) < 1e-4);
    }
  }
}
