#pragma once

// Reference computations written independently of the autodiff graph. They
// use plain loops over Eigen matrices and are shared by the test suites and
// the `theory-check` command.

#include "algan/losses.hpp"
#include "algan/networks.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace algan::oracle {

using Matrix = Eigen::MatrixXd;

/// Direct-loop 1D cross-correlation with same padding.
Matrix conv1d(const Matrix& x, const TensorD& weight, const TensorD& bias, Index stride);

/// IN(GLU(Conv(x))) for a 1D gated unit, or GLU(Conv(x)) without normalization.
Matrix gated_unit(const Matrix& x, const GatedConv<double>& unit);

/// Dense residual stack written out block by block for up to three blocks.
Matrix drn_unrolled(const Matrix& x, std::span<const ResidualBlock<double>> blocks);

/// Output of the dense residual stack when every unit emits zero: 2^(n-1) x.
Matrix drn_zero_weight(const Matrix& x, Index n_blocks);

/// Enumerates all five activations with scalar arithmetic and returns the
/// smallest alpha * mean|a(f) - t| + beta * mean(a(f) - t)^2.
double adaptive_min_bruteforce(const std::vector<double>& f, double target, double alpha, double beta);

struct PointwiseFit {
  std::vector<double> scores;
  int steps = 0;
};

/// Gradient descent on one raw score per support point against the expected
/// least-squares objective, starting from zero. Stops once the largest
/// gradient entry is below `tol` or after `max_steps`.
PointwiseFit fit_pointwise_discriminator(const DiscreteDistPair& dist, const TargetLabels& labels,
                                         const LossWeights& w, double lr, int max_steps, double tol = 1e-12);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Pointwise gradient descent against frozen p_y = [0.8, 0.2], p_hat = [0.1, 0.9]
/// (alpha 0, beta 1) lands within 0.02 of (p_y - p_hat) / (p_y + p_hat) in at most 5000 steps.
CheckResult check_optimal_discriminator();
/// Chi-square and the closed-form generator objective: exact zero on identical
/// inputs, hand values to 1e-12, no negative divergence over 1000 seeded pairs.
CheckResult check_closed_form_objective();
/// adaptive_norm_min against enumeration on `trials` seeded (f, target, alpha) triples.
CheckResult check_adaptive_min(int trials = 10000);
/// Branch table, first-epoch record, default constants, guardrails over a
/// 10000-epoch fuzzed trace and bitwise replay through the CSV log.
CheckResult check_blrs();

/// Every check above, in order.
std::vector<CheckResult> theory_checks();

}  // namespace algan::oracle
