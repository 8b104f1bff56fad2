#pragma once

#include "algan/nn.hpp"

#include <optional>
#include <vector>

namespace algan {

/// Regression targets: `a` for fakes and `b` for reals seen by the
/// discriminator, `c` for the generator. Requires b - c = 1 and b - a = 2.
struct TargetLabels {
  double a = -1.0;
  double b = 1.0;
  double c = 0.0;

  static TargetLabels make(double a, double b, double c);
  void validate() const;
};

/// alpha and beta weight the L1 and L2 terms and must sum to one.
struct LossWeights {
  double alpha = 0.5;
  double beta = 0.5;
  double w_rec = 1.0;
  double w_id = 1.0;

  static LossWeights make(double alpha, double beta, double w_rec = 1.0, double w_id = 1.0);
  void validate() const;
};

/// `scalar` picks one activation for the whole map; `elementwise` picks per entry.
enum class MinMode { scalar, elementwise };

/// alpha * mean|a_k(f) - target| + beta * mean(a_k(f) - target)^2.
template <typename S>
Var<S> single_activation_loss(ActivationKind kind, const Var<S>& f, double target, const LossWeights& w);

/// Minimum of single_activation_loss over all activations. Ties go to the
/// earliest kind in kActivationKinds and only the chosen branch is recorded
/// for backpropagation. `chosen` reports the winner in scalar mode.
template <typename S>
Var<S> adaptive_norm_min(const Var<S>& f, double target, const LossWeights& w, MinMode mode = MinMode::scalar,
                         ActivationKind* chosen = nullptr);

/// 1/2 L(D(real), b) + 1/2 L(D(fake), a), from precomputed score maps.
template <typename S>
Var<S> adversarial_loss_D(const Var<S>& score_real, const Var<S>& score_fake, const TargetLabels& labels,
                          const LossWeights& w, MinMode mode = MinMode::scalar);

/// 1/2 L(D(real), c) + 1/2 L(D(converted), c), from precomputed score maps.
template <typename S>
Var<S> adversarial_loss_G(const Var<S>& score_real, const Var<S>& score_converted, const TargetLabels& labels,
                          const LossWeights& w, MinMode mode = MinMode::scalar);

/// Network forms. `disc` is any callable mapping a feature map to a score map.
template <typename S, typename Disc>
Var<S> adversarial_loss_D(const Disc& disc, const Var<S>& real, const Var<S>& fake, const TargetLabels& labels,
                          const LossWeights& w, MinMode mode = MinMode::scalar) {
  if (real.shape() != fake.shape()) {
    throw std::invalid_argument("adversarial loss: real " + to_string(real.shape()) + " and fake " +
                                to_string(fake.shape()) + " differ");
  }
  return adversarial_loss_D<S>(disc(real), disc(fake), labels, w, mode);
}

template <typename S, typename Disc>
Var<S> adversarial_loss_G(const Disc& disc, const Var<S>& real, const Var<S>& converted, const TargetLabels& labels,
                          const LossWeights& w, MinMode mode = MinMode::scalar) {
  if (real.shape() != converted.shape()) {
    throw std::invalid_argument("adversarial loss: real " + to_string(real.shape()) + " and converted " +
                                to_string(converted.shape()) + " differ");
  }
  return adversarial_loss_G<S>(disc(real), disc(converted), labels, w, mode);
}

struct AdversarialTerms {
  double adv_G_xy = 0.0;
  double adv_G_yx = 0.0;
  double adv_D_x = 0.0;
  double adv_D_y = 0.0;
};

/// (G_xy + D_y) + (G_yx + D_x).
double total_adversarial(const AdversarialTerms& t);

/// mean|G_yx(G_xy(x)) - x| + mean|G_xy(G_yx(y)) - y|.
template <typename S, typename Gxy, typename Gyx>
Var<S> reconstruction_loss(const Gxy& g_xy, const Gyx& g_yx, const Var<S>& x, const Var<S>& y) {
  return mean(abs(sub(g_yx(g_xy(x)), x))) + mean(abs(sub(g_xy(g_yx(y)), y)));
}

/// mean|G_yx(x) - x| + mean|G_xy(y) - y|.
template <typename S, typename Gxy, typename Gyx>
Var<S> identity_loss(const Gxy& g_xy, const Gyx& g_yx, const Var<S>& x, const Var<S>& y) {
  return mean(abs(sub(g_yx(x), x))) + mean(abs(sub(g_xy(y), y)));
}

/// adversarial_total + w_rec * rec + w_id * id.
double full_loss(double adversarial_total, double rec, double id, const LossWeights& w);

/// One epoch of training losses.
struct LossReport {
  long epoch = 0;
  double adv_G_xy = 0.0;
  double adv_G_yx = 0.0;
  double adv_D_x = 0.0;
  double adv_D_y = 0.0;
  double rec = 0.0;
  double id = 0.0;
  double full = 0.0;
  double eta_g = 0.0;
  double eta_d = 0.0;

  AdversarialTerms adversarial() const { return {adv_G_xy, adv_G_yx, adv_D_x, adv_D_y}; }
  /// Sets `full` from the components.
  void finalize(const LossWeights& w);
};

/// Two distributions over a shared discrete support.
struct DiscreteDistPair {
  std::vector<double> p_y;
  std::vector<double> p_hat_y;

  void validate(bool normalized = false) const;
};

/// Pointwise optimal discriminator
///   [(beta b - alpha/2) p_y + (beta a - alpha/2) p_hat] / [beta (p_y + p_hat)].
/// Points where both masses vanish are outside the support and yield nullopt.
std::vector<std::optional<double>> optimal_discriminator(const DiscreteDistPair& dist, const TargetLabels& labels,
                                                         const LossWeights& w);

/// Expected least-squares discriminator objective over a discrete support with
/// raw (un-activated) scores `d`, one per point:
///   1/2 sum p_y (alpha|d-b| + beta(d-b)^2) + 1/2 sum p_hat (alpha|d-a| + beta(d-a)^2).
template <typename S>
Var<S> expected_discriminator_loss(const Var<S>& d, const DiscreteDistPair& dist, const TargetLabels& labels,
                                   const LossWeights& w);

/// sum (Q - P)^2 / P. Points with P = Q = 0 contribute nothing.
double pearson_chi_square(const std::vector<double>& p, const std::vector<double>& q);

/// 1/2 (sum p_y - sum p_hat) + chi2(p_y + p_hat || 2 p_hat).
double closed_form_generator_objective(const DiscreteDistPair& dist);

}  // namespace algan
