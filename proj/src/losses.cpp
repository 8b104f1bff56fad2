#include "algan/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace algan {

TargetLabels TargetLabels::make(double a, double b, double c) {
  TargetLabels labels{a, b, c};
  labels.validate();
  return labels;
}

void TargetLabels::validate() const {
  if (std::abs((b - c) - 1.0) > 1e-12 || std::abs((b - a) - 2.0) > 1e-12) {
    throw std::invalid_argument("target labels must satisfy b - c = 1 and b - a = 2, got a=" + std::to_string(a) +
                                " b=" + std::to_string(b) + " c=" + std::to_string(c));
  }
}

LossWeights LossWeights::make(double alpha, double beta, double w_rec, double w_id) {
  LossWeights w{alpha, beta, w_rec, w_id};
  w.validate();
  return w;
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("loss weights: alpha and beta must lie in [0, 1]");
  }
  if (std::abs(alpha + beta - 1.0) > 1e-12) {
    throw std::invalid_argument("loss weights: alpha + beta must equal 1, got " + std::to_string(alpha + beta));
  }
  if (!(w_rec >= 0.0) || !(w_id >= 0.0)) throw std::invalid_argument("loss weights: w_rec and w_id must be >= 0");
}

namespace {

// Elementwise alpha|a - t| + beta (a - t)^2; zero-weight terms are left out.
template <typename S>
Var<S> blended_error(const Var<S>& activated, double target, const LossWeights& w, bool reduce) {
  const Var<S> diff = add_scalar(activated, static_cast<S>(-target));
  std::optional<Var<S>> out;
  if (w.alpha != 0.0) {
    Var<S> l1 = reduce ? mean(abs(diff)) : abs(diff);
    out = mul_scalar(l1, static_cast<S>(w.alpha));
  }
  if (w.beta != 0.0) {
    Var<S> l2 = mul_scalar(reduce ? mean(square(diff)) : square(diff), static_cast<S>(w.beta));
    out = out ? add(*out, l2) : l2;
  }
  if (!out) out = mul_scalar(reduce ? mean(diff) : diff, S(0));
  return *out;
}

}  // namespace

template <typename S>
Var<S> single_activation_loss(ActivationKind kind, const Var<S>& f, double target, const LossWeights& w) {
  return blended_error(apply_activation(kind, f), target, w, true);
}

template <typename S>
Var<S> adaptive_norm_min(const Var<S>& f, double target, const LossWeights& w, MinMode mode, ActivationKind* chosen) {
  if (mode == MinMode::scalar) {
    std::size_t best = 0;
    S best_value{};
    {
      NoGradGuard no_grad;
      for (std::size_t k = 0; k < kActivationKinds.size(); ++k) {
        const S v = single_activation_loss(kActivationKinds[k], f, target, w).item();
        if (k == 0 || v < best_value) {
          best = k;
          best_value = v;
        }
      }
    }
    if (chosen) *chosen = kActivationKinds[best];
    return single_activation_loss(kActivationKinds[best], f, target, w);
  }

  std::vector<Var<S>> errors;
  for (auto kind : kActivationKinds) errors.push_back(blended_error(apply_activation(kind, f), target, w, false));
  const Index n = f.size();
  std::vector<Index> pick(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    for (std::size_t k = 1; k < errors.size(); ++k) {
      if (errors[k].value()[i] < errors[static_cast<std::size_t>(pick[i])].value()[i]) pick[i] = static_cast<Index>(k);
    }
  }
  std::vector<Var<S>> selected;
  for (std::size_t k = 0; k < errors.size(); ++k) {
    Tensor<S> mask(f.shape());
    for (Index i = 0; i < n; ++i) mask[i] = pick[i] == static_cast<Index>(k) ? S(1) : S(0);
    selected.push_back(mul(errors[k], Var<S>::constant(std::move(mask))));
  }
  if (chosen) *chosen = kActivationKinds[static_cast<std::size_t>(pick[0])];
  return mean(add_n<S>(selected));
}

template <typename S>
Var<S> adversarial_loss_D(const Var<S>& score_real, const Var<S>& score_fake, const TargetLabels& labels,
                          const LossWeights& w, MinMode mode) {
  return mul_scalar(add(adaptive_norm_min(score_real, labels.b, w, mode), adaptive_norm_min(score_fake, labels.a, w, mode)),
                    S(0.5));
}

template <typename S>
Var<S> adversarial_loss_G(const Var<S>& score_real, const Var<S>& score_converted, const TargetLabels& labels,
                          const LossWeights& w, MinMode mode) {
  return mul_scalar(
      add(adaptive_norm_min(score_real, labels.c, w, mode), adaptive_norm_min(score_converted, labels.c, w, mode)),
      S(0.5));
}

double total_adversarial(const AdversarialTerms& t) { return (t.adv_G_xy + t.adv_D_y) + (t.adv_G_yx + t.adv_D_x); }

double full_loss(double adversarial_total, double rec, double id, const LossWeights& w) {
  return adversarial_total + w.w_rec * rec + w.w_id * id;
}

void LossReport::finalize(const LossWeights& w) { full = full_loss(total_adversarial(adversarial()), rec, id, w); }

void DiscreteDistPair::validate(bool normalized) const {
  if (p_y.size() != p_hat_y.size()) throw std::invalid_argument("distribution pair: supports differ in size");
  double sy = 0.0, sh = 0.0;
  for (std::size_t i = 0; i < p_y.size(); ++i) {
    if (!(p_y[i] >= 0.0) || !(p_hat_y[i] >= 0.0)) throw std::invalid_argument("distribution pair: negative mass");
    sy += p_y[i];
    sh += p_hat_y[i];
  }
  if (normalized && (std::abs(sy - 1.0) > 1e-9 || std::abs(sh - 1.0) > 1e-9)) {
    throw std::invalid_argument("distribution pair: masses do not sum to 1");
  }
}

std::vector<std::optional<double>> optimal_discriminator(const DiscreteDistPair& dist, const TargetLabels& labels,
                                                         const LossWeights& w) {
  dist.validate();
  if (!(w.beta > 0.0)) throw std::invalid_argument("L2 weight must be positive for the closed form");
  std::vector<std::optional<double>> out(dist.p_y.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double py = dist.p_y[i], ph = dist.p_hat_y[i];
    if (py + ph <= 0.0) continue;
    out[i] = ((w.beta * labels.b - 0.5 * w.alpha) * py + (w.beta * labels.a - 0.5 * w.alpha) * ph) /
             (w.beta * (py + ph));
  }
  return out;
}

template <typename S>
Var<S> expected_discriminator_loss(const Var<S>& d, const DiscreteDistPair& dist, const TargetLabels& labels,
                                   const LossWeights& w) {
  dist.validate();
  if (d.size() != static_cast<Index>(dist.p_y.size())) {
    throw std::invalid_argument("expected discriminator loss: one score per support point required");
  }
  auto weighted = [&](const std::vector<double>& p, double target) {
    Tensor<S> mass(d.shape());
    for (Index i = 0; i < mass.size(); ++i) mass[i] = static_cast<S>(p[static_cast<std::size_t>(i)]);
    const Var<S> diff = add_scalar(d, static_cast<S>(-target));
    const Var<S> err = add(mul_scalar(abs(diff), static_cast<S>(w.alpha)), mul_scalar(square(diff), static_cast<S>(w.beta)));
    return sum(mul(err, Var<S>::constant(std::move(mass))));
  };
  return mul_scalar(add(weighted(dist.p_y, labels.b), weighted(dist.p_hat_y, labels.a)), S(0.5));
}

double pearson_chi_square(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("chi-square: supports differ in size");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("chi-square: negative mass");
    if (p[i] == 0.0) {
      if (q[i] > 0.0) throw std::invalid_argument("chi-square: P is zero where Q has mass");
      continue;
    }
    const double d = q[i] - p[i];
    total += d * d / p[i];
  }
  return total;
}

double closed_form_generator_objective(const DiscreteDistPair& dist) {
  dist.validate();
  std::vector<double> p(dist.p_y.size()), q(dist.p_y.size());
  double sy = 0.0, sh = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = dist.p_y[i] + dist.p_hat_y[i];
    q[i] = 2.0 * dist.p_hat_y[i];
    sy += dist.p_y[i];
    sh += dist.p_hat_y[i];
  }
  return 0.5 * (sy - sh) + pearson_chi_square(p, q);
}

#define ALGAN_INSTANTIATE(S)                                                                                   \
  template Var<S> single_activation_loss(ActivationKind, const Var<S>&, double, const LossWeights&);          \
  template Var<S> adaptive_norm_min(const Var<S>&, double, const LossWeights&, MinMode, ActivationKind*);    \
  template Var<S> adversarial_loss_D(const Var<S>&, const Var<S>&, const TargetLabels&, const LossWeights&,  \
                                     MinMode);                                                                 \
  template Var<S> adversarial_loss_G(const Var<S>&, const Var<S>&, const TargetLabels&, const LossWeights&,  \
                                     MinMode);                                                                 \
  template Var<S> expected_discriminator_loss(const Var<S>&, const DiscreteDistPair&, const TargetLabels&,   \
                                              const LossWeights&);

ALGAN_INSTANTIATE(float)
ALGAN_INSTANTIATE(double)

}  // namespace algan
