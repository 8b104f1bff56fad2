// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "algan/evalkit.hpp"
#include "algan/oracles.hpp"
#include "algan/trainer.hpp"

#include <unistd.h>

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

using namespace algan;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

TensorD seeded(Shape shape, std::uint64_t seed, double scale = 1.0) {
  TensorD t(std::move(shape));
  std::mt19937_64 rng(seed);
  fill_normal(t, rng, scale);
  return t;
}

template <typename Params>
void randomize(const Params& params, std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  for (auto p : params) fill_normal(p.mutable_value(), rng, stddev);
}

GatedConv<double> unit_1d(Index in, Index gated, Index k, Index stride, Index shuffle, bool normalize,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u = make_gated_conv<double>(in, gated, {1, k}, {1, stride}, shuffle, normalize, 1, rng, 0.3);
  fill_normal(u.bias.mutable_value(), rng, 0.1);
  if (normalize) {
    fill_normal(u.gamma.mutable_value(), rng, 1.0);
    fill_normal(u.beta.mutable_value(), rng, 1.0);
  }
  return u;
}

template <typename Unit>
void append(std::vector<Var<double>>& out, const Unit& unit) {
  for (const auto& p : unit.parameters()) out.push_back(p);
}

// ---------------------------------------------------------------- criterion 1

oracle::CheckResult gradient_suite() {
  const auto t0 = Clock::now();
  struct Case {
    std::string name;
    std::function<double()> run;
  };
  GradCheckOptions full;
  GradCheckOptions sampled;
  sampled.max_coords_per_param = 3;
  sampled.seed = 17;
  LossWeights w = LossWeights::make(0.5, 0.5);
  const TargetLabels labels;

  std::vector<Case> cases;
  cases.push_back({"conv1d", [&] {
                     auto x = Var<double>::parameter(seeded({3, 10}, 1));
                     auto k = Var<double>::parameter(seeded({4, 3, 5}, 2, 0.3));
                     auto b = Var<double>::parameter(seeded({4}, 3, 0.1));
                     auto wts = Var<double>::constant(seeded({4, 5}, 4));
                     const auto spec = ConvSpec::conv1d(3, 4, 5, 2);
                     return grad_check_params<double>(
                         [&] { return sum(mul(conv1d(x, k, std::optional<Var<double>>(b), spec), wts)); }, {x, k, b},
                         full);
                   }});
  cases.push_back({"conv2d", [&] {
                     auto x = Var<double>::parameter(seeded({2, 5, 9}, 5));
                     auto k = Var<double>::parameter(seeded({4, 2, 4, 4}, 6, 0.3));
                     auto b = Var<double>::parameter(seeded({4}, 7, 0.1));
                     auto wts = Var<double>::constant(seeded({4, 5, 5}, 8));
                     const auto spec = ConvSpec::conv2d(2, 4, {4, 4}, {1, 2});
                     return grad_check_params<double>(
                         [&] { return sum(mul(conv2d(x, k, std::optional<Var<double>>(b), spec), wts)); }, {x, k, b},
                         full);
                   }});
  cases.push_back({"glu", [&] {
                     auto wts = Var<double>::constant(seeded({2, 6}, 9));
                     return grad_check<double>([&](const Var<double>& v) { return sum(mul(glu(v), wts)); },
                                               seeded({4, 6}, 10), 1e-5);
                   }});
  cases.push_back({"instance_norm", [&] {
                     auto x = Var<double>::parameter(seeded({4, 16}, 11));
                     auto g = Var<double>::parameter(seeded({4}, 12));
                     auto b = Var<double>::parameter(seeded({4}, 13));
                     auto wts = Var<double>::constant(seeded({4, 16}, 14));
                     return grad_check_params<double>([&] { return sum(mul(instance_norm(x, g, b), wts)); }, {x, g, b},
                                                      full);
                   }});
  cases.push_back({"pixel_shuffle", [&] {
                     auto wts = Var<double>::constant(seeded({2, 6}, 15));
                     return grad_check<double>(
                         [&](const Var<double>& v) { return sum(mul(pixel_shuffle_1d(v, 2), wts)); },
                         seeded({4, 3}, 16), 1e-5);
                   }});
  for (auto kind : kActivationKinds) {
    cases.push_back({"activation " + std::string(activation_name(kind)), [kind] {
                       return grad_check<double>(
                           [kind](const Var<double>& v) { return sum(square(apply_activation(kind, v))); },
                           seeded({9}, 17), 1e-5);
                     }});
  }
  cases.push_back({"down/up units", [&] {
                     const auto down = unit_1d(3, 4, 5, 2, 1, true, 18);
                     const auto up = unit_1d(4, 3, 5, 1, 2, true, 19);
                     const auto plain = [&] {
                       std::mt19937_64 rng(20);
                       return make_plain_conv<double>(3, 2, {1, 5}, 1, rng, 0.3);
                     }();
                     auto x = Var<double>::parameter(seeded({3, 8}, 21));
                     auto wts = Var<double>::constant(seeded({2, 8}, 22));
                     std::vector<Var<double>> params{x};
                     append(params, down);
                     append(params, up);
                     append(params, plain);
                     return grad_check_params<double>(
                         [&] { return sum(mul(plain_conv_forward(upsample_block(downsample_block(x, down), up), plain), wts)); },
                         params, full);
                   }});
  cases.push_back({"dense residual stack", [&] {
                     std::vector<ResidualBlock<double>> blocks;
                     for (Index j = 0; j < 3; ++j) {
                       blocks.push_back({unit_1d(3, 3, 5, 1, 1, true, 30 + 2 * j), unit_1d(3, 3, 5, 1, 1, true, 31 + 2 * j)});
                     }
                     auto x = Var<double>::parameter(seeded({3, 8}, 23));
                     auto wts = Var<double>::constant(seeded({3, 8}, 24));
                     std::vector<Var<double>> params{x};
                     for (const auto& b : blocks) {
                       append(params, b.first);
                       append(params, b.second);
                     }
                     return grad_check_params<double>(
                         [&] {
                           return sum(mul(dense_residual_forward<double>(x, std::span<const ResidualBlock<double>>(blocks)),
                                          wts));
                         },
                         params, full);
                   }});
  cases.push_back({"adaptive adversarial losses", [&] {
                     auto real = Var<double>::parameter(seeded({1, 3, 4}, 25));
                     auto fake = Var<double>::parameter(seeded({1, 3, 4}, 26));
                     double worst = grad_check_params<double>(
                         [&] { return adversarial_loss_D<double>(real, fake, labels, w); }, {real, fake}, full);
                     worst = std::max(worst, grad_check_params<double>(
                                                 [&] {
                                                   return adversarial_loss_G<double>(real, fake, labels, w,
                                                                                     MinMode::elementwise);
                                                 },
                                                 {real, fake}, full));
                     return worst;
                   }});
  const GeneratorConfig gcfg = GeneratorConfig::desk();
  const DiscriminatorConfig dcfg = DiscriminatorConfig::desk();
  cases.push_back({"generator composite", [&] {
                     Generator<double> g(gcfg, 40);
                     randomize(g.parameters(), 41, 0.1);
                     auto x = Var<double>::parameter(seeded({24, 32}, 42));
                     auto wts = Var<double>::constant(seeded({24, 32}, 43));
                     auto params = g.parameters();
                     params.push_back(x);
                     return grad_check_params<double>([&] { return sum(mul(g(x), wts)); }, params, sampled);
                   }});
  cases.push_back({"five-stage generator composite", [&] {
                     GeneratorConfig cfg;
                     cfg.input_channels = {4, 4};
                     cfg.down_channels = {4, 4, 6, 6, 6};
                     cfg.n_dense_residual = 3;
                     cfg.residual_channels = 6;
                     cfg.up_channels = {6, 6, 4, 4, 4};
                     Generator<double> g(cfg, 44);
                     randomize(g.parameters(), 45, 0.4);
                     auto x = Var<double>::parameter(seeded({24, 64}, 46));
                     auto wts = Var<double>::constant(seeded({24, 64}, 47));
                     auto params = g.parameters();
                     params.push_back(x);
                     return grad_check_params<double>([&] { return sum(mul(g(x), wts)); }, params, sampled);
                   }});
  cases.push_back({"discriminator composite", [&] {
                     Discriminator<double> d(dcfg, 48);
                     randomize(d.parameters(), 49, 0.2);
                     auto y = Var<double>::parameter(seeded({24, 32}, 50));
                     auto wts = Var<double>::constant(seeded({1, 24, 1}, 51));
                     auto params = d.parameters();
                     params.push_back(y);
                     return grad_check_params<double>([&] { return sum(mul(d(y), wts)); }, params, sampled);
                   }});
  cases.push_back({"cycle and identity losses", [&] {
                     GeneratorConfig cfg = gcfg;
                     cfg.input_channels = {6, 6};
                     cfg.down_channels = {6};
                     cfg.residual_channels = 6;
                     cfg.up_channels = {6};
                     Generator<double> gxy(cfg, 52), gyx(cfg, 53);
                     randomize(gxy.parameters(), 54, 0.3);
                     randomize(gyx.parameters(), 55, 0.3);
                     auto x = Var<double>::parameter(seeded({24, 8}, 56));
                     auto y = Var<double>::parameter(seeded({24, 8}, 57));
                     auto params = gxy.parameters();
                     for (const auto& p : gyx.parameters()) params.push_back(p);
                     params.push_back(x);
                     params.push_back(y);
                     return grad_check_params<double>(
                         [&] { return reconstruction_loss<double>(gxy, gyx, x, y) + identity_loss<double>(gxy, gyx, x, y); },
                         params, sampled);
                   }});

  double worst = 0.0;
  std::string worst_name;
  bool pass = true;
  for (const auto& c : cases) {
    const double err = c.run();
    if (!(err < 1e-4)) pass = false;
    if (err >= worst) {
      worst = err;
      worst_name = c.name;
    }
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 60.0;
  return {"gradient suite", pass,
          fmt("%zu checks, worst relative error %.2e (%s), %.1f s", cases.size(), worst, worst_name.c_str(), secs)};
}

// ---------------------------------------------------------------- criterion 5

oracle::CheckResult drn_recursion() {
  double worst = 0.0;
  for (Index n = 1; n <= 3; ++n) {
    std::vector<ResidualBlock<double>> blocks;
    for (Index j = 0; j < n; ++j) {
      blocks.push_back({unit_1d(3, 3, 5, 1, 1, true, 100 + 10 * n + 2 * j),
                        unit_1d(3, 3, 5, 1, 1, true, 101 + 10 * n + 2 * j)});
    }
    const auto x = seeded({3, 16}, 200 + static_cast<std::uint64_t>(n));
    const auto got = dense_residual_forward<double>(Var<double>(x), blocks).value();
    const auto ref = oracle::drn_unrolled(x.matrix(3), blocks);
    worst = std::max(worst, (got.matrix(3) - ref).cwiseAbs().maxCoeff());
  }
  double zero_err = 0.0;
  for (Index n : {1, 2, 3, 8}) {
    std::mt19937_64 rng(1);
    std::vector<ResidualBlock<double>> blocks;
    for (Index j = 0; j < n; ++j) {
      blocks.push_back({make_gated_conv<double>(4, 4, {1, 5}, {1, 1}, 1, true, 1, rng, 0.0),
                        make_gated_conv<double>(4, 4, {1, 5}, {1, 1}, 1, true, 1, rng, 0.0)});
    }
    const auto x = seeded({4, 8}, 300);
    const auto got = dense_residual_forward<double>(Var<double>(x), blocks).value();
    // closed form: every unit emits zero, so I_k = 2^(k-1) x
    const Eigen::MatrixXd expect = std::ldexp(1.0, static_cast<int>(n) - 1) * x.matrix(4);
    zero_err = std::max(zero_err, (got.matrix(4) - expect).cwiseAbs().maxCoeff());
  }
  return {"dense residual recursion", worst <= 1e-12 && zero_err <= 1e-12,
          fmt("unrolled max diff %.2e over 1-3 blocks, zero-weight max diff %.2e", worst, zero_err)};
}

// ---------------------------------------------------------------- criterion 7

struct DeskRun {
  std::vector<LossReport> reports;
  Checkpoint<float> ckpt;
  std::vector<std::uint8_t> bytes;
  double seconds = 0.0;
};

DeskRun desk_run(const FeatureArchive& x, const FeatureArchive& y) {
  const auto t0 = Clock::now();
  Trainer<float> trainer(TrainConfig::desk(), x, y);
  DeskRun r;
  r.reports = trainer.train();
  r.ckpt = trainer.checkpoint();
  r.bytes = encode_checkpoint(r.ckpt);
  r.seconds = seconds_since(t0);
  return r;
}

bool same_reports(const std::vector<LossReport>& a, const std::vector<LossReport>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& p = a[i];
    const auto& q = b[i];
    if (p.epoch != q.epoch || p.adv_G_xy != q.adv_G_xy || p.adv_G_yx != q.adv_G_yx || p.adv_D_x != q.adv_D_x ||
        p.adv_D_y != q.adv_D_y || p.rec != q.rec || p.id != q.id || p.full != q.full || p.eta_g != q.eta_g ||
        p.eta_d != q.eta_d) {
      return false;
    }
  }
  return true;
}

// Sample mean and population deviation of log F0 over voiced frames, in long double.
std::pair<double, double> voiced_log_stats(const std::vector<double>& f0) {
  long double mean = 0, m2 = 0;
  long n = 0;
  for (double v : f0) {
    if (v <= 0.0) continue;
    const long double l = std::log(static_cast<long double>(v));
    ++n;
    const long double d = l - mean;
    mean += d / n;
    m2 += d * (l - mean);
  }
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(m2 / n))};
}

std::vector<double> all_f0(const FeatureArchive& a) {
  std::vector<double> f0;
  for (const auto& u : a.utterances) f0.insert(f0.end(), u.f0.begin(), u.f0.end());
  return f0;
}

void print(int id, const oracle::CheckResult& r, bool& all) {
  std::printf("%s criterion %d: %s (%s)\n", r.pass ? "PASS" : "FAIL", id, r.name.c_str(), r.detail.c_str());
  std::fflush(stdout);
  all = all && r.pass;
}

}  // namespace

int main() {
  bool all = true;
  print(1, gradient_suite(), all);

  {
    const auto t0 = Clock::now();
    auto r = oracle::check_optimal_discriminator();
    const double secs = seconds_since(t0);
    r.pass = r.pass && secs < 10.0;
    r.detail += fmt(", %.3f s", secs);
    print(2, r, all);
  }
  print(3, oracle::check_closed_form_objective(), all);
  print(4, oracle::check_adaptive_min(10000), all);
  print(5, drn_recursion(), all);
  print(6, oracle::check_blrs(), all);

  // Two speakers with independent content for training; the reference renders
  // the source content with the target speaker.
  const auto x = synth_corpus(101, 20, 256, SpeakerProfile::preset("A"));
  const auto y = synth_corpus(202, 20, 256, SpeakerProfile::preset("B"));
  const auto reference = synth_corpus(101, 20, 256, SpeakerProfile::preset("B"));

  const DeskRun first = desk_run(x, y);
  const DeskRun second = desk_run(x, y);
  const auto converted = convert(first.ckpt, x, Direction::x2y);
  {
    const double full_1 = first.reports.front().full, full_200 = first.reports.back().full;
    const double baseline = mcd(reference, x), after = mcd(reference, converted);
    const double reduction = 1.0 - after / baseline;
    const bool decreased = first.reports.size() == 200 && full_200 < full_1;
    const bool reproducible = first.bytes == second.bytes && same_reports(first.reports, second.reports);
    const bool fast = first.seconds < 600.0 && second.seconds < 600.0;
    print(7,
          {"desk training", decreased && reduction >= 0.20 && reproducible && fast,
           fmt("full loss %.4f -> %.4f; MCD %.3f -> %.3f dB (%.1f%% reduction); runs %s; %.1f s + %.1f s", full_1,
               full_200, baseline, after, 100.0 * reduction, reproducible ? "bitwise identical" : "differ",
               first.seconds, second.seconds)},
          all);
  }

  {
    const auto sx = compute_speaker_stats(x), sy = compute_speaker_stats(y);
    const auto [mu_y, sigma_y] = voiced_log_stats(all_f0(y));
    const auto [mu, sigma] = voiced_log_stats(logf0_convert(all_f0(x), sx, sy));
    bool voicing = converted.utterances.size() == x.utterances.size();
    for (std::size_t u = 0; voicing && u < x.utterances.size(); ++u) {
      for (std::size_t t = 0; t < x.utterances[u].f0.size(); ++t) {
        voicing = voicing && ((converted.utterances[u].f0[t] > 0.0f) == (x.utterances[u].f0[t] > 0.0f));
      }
    }
    const auto [mu_stored, sigma_stored] = voiced_log_stats(all_f0(converted));
    const double err = std::max(std::abs(mu - mu_y), std::abs(sigma - sigma_y));
    print(8,
          {"F0 transport", err < 1e-9 && voicing,
           fmt("|d mu|, |d sigma| <= %.2e; voicing %s; float32 archive copy within %.1e", err,
               voicing ? "preserved" : "changed", std::max(std::abs(mu_stored - mu_y), std::abs(sigma_stored - sigma_y)))},
          all);
  }

  {
    const auto dir = std::filesystem::temp_directory_path() / fmt("algan-acceptance-%ld", static_cast<long>(getpid()));
    std::filesystem::create_directories(dir);
    auto read_bytes = [](const std::filesystem::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };

    write_archive(x, dir / "x.algf");
    const auto archive_bytes = read_bytes(dir / "x.algf");
    const auto reloaded = read_archive(dir / "x.algf");
    const bool archive_ok = archive_bytes == encode_archive(x) && reloaded == x && encode_archive(reloaded) == archive_bytes;

    save_checkpoint(first.ckpt, dir / "desk.algc");
    const auto ckpt_bytes = read_bytes(dir / "desk.algc");
    const bool ckpt_ok = ckpt_bytes == first.bytes && encode_checkpoint(load_checkpoint<float>(dir / "desk.algc")) == ckpt_bytes;

    // 64-bit resume: 3 + 3 epochs against 6 uninterrupted
    TrainConfig cfg = TrainConfig::desk();
    cfg.precision = 64;
    cfg.epochs = 6;
    const auto small_x = synth_corpus(101, 4, 256, SpeakerProfile::preset("A"));
    const auto small_y = synth_corpus(202, 4, 256, SpeakerProfile::preset("B"));
    Trainer<double> whole(cfg, small_x, small_y);
    const auto whole_reports = whole.train();

    TrainConfig head_cfg = cfg;
    head_cfg.epochs = 3;
    Trainer<double> head(head_cfg, small_x, small_y);
    head.train();
    save_checkpoint(head.checkpoint(), dir / "k3.algc");
    Trainer<double> tail(cfg, small_x, small_y);
    const bool restored = tail.restore(load_checkpoint<double>(dir / "k3.algc"));
    const auto tail_reports = tail.train();
    double diff = INFINITY;
    if (restored && !tail_reports.empty()) {
      const auto& a = whole_reports.back();
      const auto& b = tail_reports.back();
      diff = 0.0;
      for (auto [p, q] : {std::pair{a.adv_G_xy, b.adv_G_xy}, {a.adv_G_yx, b.adv_G_yx}, {a.adv_D_x, b.adv_D_x},
                          {a.adv_D_y, b.adv_D_y}, {a.rec, b.rec}, {a.id, b.id}, {a.full, b.full}}) {
        diff = std::max(diff, std::abs(p - q));
      }
    }
    std::filesystem::remove_all(dir);
    print(9,
          {"format round trips", archive_ok && ckpt_ok && diff <= 1e-10,
           fmt("archive %s (%zu bytes); checkpoint %s (%zu bytes); resume at epoch 3 of 6 final-loss diff %.2e",
               archive_ok ? "byte-exact" : "differs", archive_bytes.size(), ckpt_ok ? "byte-exact" : "differs",
               ckpt_bytes.size(), diff)},
          all);
  }

  std::printf("%s\n", all ? "all criteria pass" : "some criteria fail");
  return all ? 0 : 1;
}
