#include "algan/blrs.hpp"
#include "algan/oracles.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace algan::oracle {

namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

}  // namespace

CheckResult check_optimal_discriminator() {
  CheckResult r{"optimal discriminator", false, ""};
  const DiscreteDistPair dist{{0.8, 0.2}, {0.1, 0.9}};
  const auto fit = fit_pointwise_discriminator(dist, TargetLabels{}, LossWeights::make(0.0, 1.0), 0.5, 5000);
  double err = 0.0;
  for (std::size_t i = 0; i < dist.p_y.size(); ++i) {
    const double target = (dist.p_y[i] - dist.p_hat_y[i]) / (dist.p_y[i] + dist.p_hat_y[i]);
    err = std::max(err, std::abs(fit.scores[i] - target));
  }
  r.pass = err < 0.02 && fit.steps <= 5000;
  r.detail = fmt("max error %.3g after %.0f steps", err, fit.steps);
  return r;
}

CheckResult check_closed_form_objective() {
  CheckResult r{"closed-form objective", true, ""};
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  if (pearson_chi_square(p, p) != 0.0 || closed_form_generator_objective({p, p}) != 0.0) r.pass = false;
  const double chi = pearson_chi_square({0.5, 0.5}, {0.25, 0.75});
  const double disjoint = closed_form_generator_objective({{1.0, 0.0}, {0.0, 1.0}});
  if (std::abs(chi - 0.25) > 1e-12 || std::abs(disjoint - 2.0) > 1e-12) r.pass = false;

  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unit(1e-3, 1.0);
  double lowest = INFINITY;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(6), b(6);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = unit(rng);
      b[i] = unit(rng);
    }
    lowest = std::min(lowest, pearson_chi_square(a, b));
  }
  if (lowest < 0.0) r.pass = false;
  r.detail = fmt("chi2 example %.17g, disjoint objective %.17g", chi, disjoint) + fmt(", fuzz minimum %.3g", lowest);
  return r;
}

CheckResult check_adaptive_min(int trials) {
  CheckResult r{"adaptive loss", true, ""};
  std::mt19937_64 rng(0xada9);
  std::normal_distribution<double> score(0.0, 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0), target(-1.5, 1.5);
  std::uniform_int_distribution<int> length(1, 8);
  double worst = 0.0;
  int dominance_failures = 0;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> f(static_cast<std::size_t>(length(rng)));
    for (double& v : f) v = score(rng);
    const double t = trial % 4 == 0 ? (trial % 8 == 0 ? 1.0 : -1.0) : target(rng);
    const double alpha = unit(rng);
    const auto w = LossWeights::make(alpha, 1.0 - alpha);
    const Var<double> fv(TensorD::from({static_cast<Index>(f.size())}, f));
    const double got = adaptive_norm_min(fv, t, w).value().item();
    worst = std::max(worst, std::abs(got - adaptive_min_bruteforce(f, t, alpha, 1.0 - alpha)));
    for (ActivationKind k : kActivationKinds) {
      if (got > single_activation_loss(k, fv, t, w).value().item()) ++dominance_failures;
    }
  }
  r.pass = worst <= 1e-12 && dominance_failures == 0;
  r.detail = fmt("max deviation %.3g, dominance failures %.0f", worst, dominance_failures);
  return r;
}

CheckResult check_blrs() {
  CheckResult r{"boosted learning rates", true, ""};
  const BlrsConfig defaults;
  if (defaults.eta_g != 2e-4 || defaults.eta_d != 1e-4 || defaults.c1 != 1e-6 || defaults.c2 != 1e-5 ||
      defaults.lambda_scale != 5e-2) {
    r.pass = false;
  }
  const BlrsState s0 = BlrsState::initial();
  BlrsBranch branch{};
  const BlrsState s1 = blrs_step(s0, 7.0, 3.0, &branch);
  if (branch != BlrsBranch::record || s1.eta_g != s0.eta_g || s1.eta_d != s0.eta_d) r.pass = false;

  struct Row {
    double g, d;
    BlrsBranch branch;
    double eta_g, eta_d;
  };
  // second-epoch losses after (5, 2)
  const Row rows[] = {
      {6.0, 2.01, BlrsBranch::slow_generator, 2e-4 - 1e-6, 1e-4 + 1e-5},
      {4.9, 3.0, BlrsBranch::speed_generator, 2e-4 + 1e-5, 1e-4 - 1e-6},
      {5.0, 2.0, BlrsBranch::hold, 2e-4, 1e-4},
      {6.25, 2.0625, BlrsBranch::hold, 2e-4, 1e-4},  // lambda dG == dD exactly
  };
  const BlrsState base = blrs_step(s0, 5.0, 2.0);
  for (const auto& row : rows) {
    const BlrsState next = blrs_step(base, row.g, row.d, &branch);
    if (branch != row.branch || next.eta_g != row.eta_g || next.eta_d != row.eta_d) r.pass = false;
  }

  // ten-epoch generator ramp against a flat discriminator loss
  std::vector<std::pair<double, double>> ramp;
  for (int i = 1; i <= 10; ++i) ramp.emplace_back(static_cast<double>(i), 1.0);
  const auto ramped = blrs_trace(s0, ramp);
  double eta_g = s0.eta_g, eta_d = s0.eta_d;
  for (int i = 0; i < 9; ++i) {
    eta_g -= s0.c1;
    eta_d += s0.c2;
  }
  if (ramped.back().eta_g != eta_g || ramped.back().eta_d != eta_d) r.pass = false;

  std::mt19937_64 rng(0xb125);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<double, double>> losses;
  for (int i = 0; i < 10000; ++i) {
    const double swing = (i % 2 ? 1.0 : -1.0) * 10.0 * unit(rng);
    losses.emplace_back(5.0 + swing, 2.0 + (i % 3 == 0 ? swing : 0.01 * swing));
  }
  const auto trace = blrs_trace(s0, losses);
  for (const auto& p : trace) {
    if (p.eta_g < s0.floor || p.eta_g > s0.ceiling || p.eta_d < s0.floor || p.eta_d > s0.ceiling) r.pass = false;
  }
  std::stringstream log;
  write_blrs_trace_csv(log, trace);
  const auto replay = blrs_trace(s0, read_loss_log_csv(log));
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (replay[i].eta_g != trace[i].eta_g || replay[i].eta_d != trace[i].eta_d) r.pass = false;
  }
  r.detail = fmt("final rates %.6g / %.6g over 10000 epochs", trace.back().eta_g, trace.back().eta_d);
  return r;
}

std::vector<CheckResult> theory_checks() {
  return {check_optimal_discriminator(), check_closed_form_objective(), check_adaptive_min(), check_blrs()};
}

}  // namespace algan::oracle
