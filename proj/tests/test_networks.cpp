#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "algan/networks.hpp"
#include "algan/oracles.hpp"
#include "test_util.hpp"

using namespace algan;
using namespace algan::testing;

namespace {

std::vector<ResidualBlock<double>> random_blocks(Index n, Index channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ResidualBlock<double>> blocks;
  for (Index j = 0; j < n; ++j) {
    ResidualBlock<double> b{make_gated_conv<double>(channels, channels, {1, 5}, {1, 1}, 1, true, 1, rng, 0.3),
                            make_gated_conv<double>(channels, channels, {1, 5}, {1, 1}, 1, true, 1, rng, 0.3)};
    for (auto* unit : {&b.first, &b.second}) {
      fill_normal(unit->bias.mutable_value(), rng, 0.2);
      fill_normal(unit->gamma.mutable_value(), rng, 1.0);
      fill_normal(unit->beta.mutable_value(), rng, 1.0);
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

double max_diff(const TensorD& a, const oracle::Matrix& b) {
  double err = 0.0;
  const auto m = a.matrix(b.rows());
  for (Index r = 0; r < b.rows(); ++r)
    for (Index c = 0; c < b.cols(); ++c) err = std::max(err, std::abs(m(r, c) - b(r, c)));
  return err;
}

}  // namespace

TEST_CASE("configs") {
  const auto g = GeneratorConfig::full();
  CHECK(g.input_dim == 24);
  CHECK(g.down_channels == std::vector<Index>{64, 128, 256, 512, 1024});
  CHECK(g.n_dense_residual == 8);
  CHECK(g.residual_channels == 1024);
  CHECK(g.width_multiple() == 32);
  CHECK_NOTHROW(g.validate());
  CHECK_NOTHROW(GeneratorConfig::desk().validate());

  auto bad = g;
  bad.residual_channels = 512;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = g;
  bad.up_channels.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = g;
  bad.down_channels[2] = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  const auto d = DiscriminatorConfig::full();
  CHECK(d.kernel == std::array<Index, 2>{4, 4});
  CHECK(d.min_width() == 32);
}

TEST_CASE("dense residual stack against the unrolled reference") {
  const auto x = random_tensor({3, 16}, 100);
  for (Index n = 1; n <= 3; ++n) {
    CAPTURE(n);
    const auto blocks = random_blocks(n, 3, 200 + static_cast<std::uint64_t>(n));
    const auto got = dense_residual_forward<double>(Var<double>(x), blocks).value();
    CHECK(max_diff(got, oracle::drn_unrolled(x.matrix(3), blocks)) < 1e-12);
  }
}

TEST_CASE("dense residual first summation") {
  const auto x = random_tensor({3, 16}, 101);
  const auto blocks = random_blocks(3, 3, 300);
  DrnTrace<double> trace;
  dense_residual_forward<double>(Var<double>(x), blocks, &trace);
  REQUIRE(trace.summation.size() == 3);
  const TensorD i1 = trace.summation[0].value();
  const auto expected = trace.block_output[0].value().data() + trace.first_unit[0].value().data() + x.data();
  CHECK((i1.data() - expected).abs().maxCoeff() < 1e-15);
  // Later summations carry every earlier one.
  const auto i3 = trace.block_output[2].value().data() + trace.first_unit[2].value().data() +
                  trace.summation[0].value().data() + trace.summation[1].value().data() + x.data();
  CHECK((trace.summation[2].value().data() - i3).abs().maxCoeff() < 1e-12);
}

TEST_CASE("dense residual with zero weights") {
  const auto x = random_tensor({4, 8}, 102);
  for (Index n : {1, 2, 3, 5, 8}) {
    std::mt19937_64 rng(1);
    std::vector<ResidualBlock<double>> blocks;
    for (Index j = 0; j < n; ++j) {
      blocks.push_back({make_gated_conv<double>(4, 4, {1, 5}, {1, 1}, 1, true, 1, rng, 0.0),
                        make_gated_conv<double>(4, 4, {1, 5}, {1, 1}, 1, true, 1, rng, 0.0)});
    }
    const auto got = dense_residual_forward<double>(Var<double>(x), blocks).value();
    CHECK(max_diff(got, oracle::drn_zero_weight(x.matrix(4), n)) < 1e-12);
  }
  std::vector<ResidualBlock<double>> one;
  std::mt19937_64 rng(2);
  one.push_back({make_gated_conv<double>(4, 4, {1, 5}, {1, 1}, 1, true, 1, rng, 0.0),
                 make_gated_conv<double>(4, 4, {1, 5}, {1, 1}, 1, true, 1, rng, 0.0)});
  CHECK(dense_residual_forward<double>(Var<double>(x), one).value() == x);
  CHECK_THROWS_AS(dense_residual_forward<double>(Var<double>(random_tensor({3, 8}, 1)), one), std::invalid_argument);
}

TEST_CASE("generator shapes and determinism") {
  const auto cfg = GeneratorConfig::desk();
  Generator<double> g(cfg, 7);
  const auto x = random_tensor({24, 128}, 103);
  const auto y = g(Var<double>(x)).value();
  CHECK(y.shape() == Shape{24, 128});
  CHECK(y.all_finite());
  CHECK(g(Var<double>(x)).value() == y);
  CHECK(g(Var<double>(random_tensor({24, 64}, 104))).value().shape() == Shape{24, 64});
  CHECK_THROWS_WITH_AS(g(Var<double>(TensorD::zeros({24, 101}))), doctest::Contains("not a multiple of"),
                       std::invalid_argument);
  CHECK_THROWS_AS(g(Var<double>(TensorD::zeros({23, 128}))), std::invalid_argument);

  Generator<double> same(cfg, 7), other(cfg, 8);
  const auto pa = g.parameters(), pb = same.parameters(), pc = other.parameters();
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_equal = all_equal && pa[i].value() == pb[i].value();
    any_diff = any_diff || !(pa[i].value() == pc[i].value());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("zero-weight generator maps zero to zero") {
  Generator<double> g(GeneratorConfig::desk(), 1);
  for (auto p : g.parameters()) p.mutable_value().data().setZero();
  const auto y = g(Var<double>(TensorD::zeros({24, 64}))).value();
  CHECK((y.data() == 0).all());
}

TEST_CASE("full-size generator preserves shape") {
  NoGradGuard no_grad;
  Generator<float> g(GeneratorConfig::full(), 3);
  TensorF x({24, 128});
  std::mt19937_64 rng(4);
  fill_normal(x, rng, 1.0);
  const auto y = g(Var<float>(x)).value();
  CHECK(y.shape() == Shape{24, 128});
  CHECK(y.all_finite());
}

TEST_CASE("discriminator") {
  Discriminator<double> d(DiscriminatorConfig::desk(), 5);
  const auto x = random_tensor({24, 128}, 105);
  const auto f = d(Var<double>(x)).value();
  CHECK(f.shape() == Shape{1, 24, 4});
  CHECK(d(Var<double>(x)).value() == f);
  CHECK(d(Var<double>(random_tensor({24, 32}, 106))).value().shape() == Shape{1, 24, 1});
  CHECK_THROWS_AS(d(Var<double>(TensorD::zeros({24, 16}))), std::invalid_argument);

  d.head.weight.mutable_value().data().setZero();
  const auto zero = d(Var<double>(x)).value();
  CHECK((zero.data() == 0).all());

  NoGradGuard no_grad;
  Discriminator<float> big(DiscriminatorConfig::full(), 6);
  CHECK(big(Var<float>(TensorF::zeros({24, 128}))).value().shape() == Shape{1, 24, 4});
}

TEST_CASE("parameter loading") {
  Generator<double> a(tiny_generator_config(), 1), b(tiny_generator_config(), 2);
  std::vector<TensorD> values;
  for (const auto& p : a.parameters()) values.push_back(p.value());
  b.load_parameters(values);
  const auto x = random_tensor({24, 32}, 107);
  CHECK(a(Var<double>(x)).value() == b(Var<double>(x)).value());
  values.pop_back();
  CHECK_THROWS_AS(b.load_parameters(values), std::invalid_argument);
}

TEST_CASE("end-to-end gradients") {
  GradCheckOptions opts;
  opts.max_coords_per_param = 4;
  opts.seed = 9;
  SUBCASE("generator") {
    Generator<double> g(tiny_generator_config(), 11);
    randomize(g.parameters(), 12, 0.4);
    auto x = Var<double>::parameter(random_tensor({24, 64}, 108));
    auto wts = Var<double>::constant(random_tensor({24, 64}, 109));
    auto params = g.parameters();
    params.push_back(x);
    CHECK(grad_check_params<double>([&] { return sum(mul(g(x), wts)); }, params, opts) < 1e-4);
  }
  SUBCASE("discriminator") {
    Discriminator<double> d(tiny_discriminator_config(), 13);
    randomize(d.parameters(), 14, 0.4);
    auto y = Var<double>::parameter(random_tensor({24, 64}, 110));
    auto params = d.parameters();
    params.push_back(y);
    CHECK(grad_check_params<double>([&] { return sum(d(y)); }, params, opts) < 1e-4);
  }
}
