// Probabilistic ordinal classifiers with a logistic link: the cumulative
// (proportional-odds) model and the stagewise model with shared or
// class-specific weights. All probability and gradient computations run in
// log space.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ordstab/errors.hpp"

namespace ordstab {

namespace logistic {

inline double cdf(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  double e = std::exp(u);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

inline double log_cdf(double u) { return -softplus(-u); }

// density F'(u) = F(u) F(-u)
inline double pdf(double u) { return cdf(u) * cdf(-u); }

inline double quantile(double p) { return std::log(p / (1.0 - p)); }

}  // namespace logistic

enum class Variant : std::uint8_t { cumulative, stagewise_shared, stagewise_multi };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::cumulative: return "cumulative";
    case Variant::stagewise_shared: return "stagewise-shared";
    case Variant::stagewise_multi: return "stagewise-multi";
  }
  return "unknown";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "cumulative") return Variant::cumulative;
  if (s == "stagewise-shared") return Variant::stagewise_shared;
  if (s == "stagewise-multi") return Variant::stagewise_multi;
  return std::nullopt;
}

inline constexpr double kProbabilityFloor = 1e-300;

struct OrdinalModel {
  Variant variant = Variant::cumulative;
  int n_classes = 2;
  std::vector<Eigen::VectorXd> weights;  // one block, or n_classes-1 blocks for stagewise-multi
  Eigen::VectorXd thresholds;            // natural scale, size n_classes-1

  int dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().size()); }
  int n_weight_blocks() const { return static_cast<int>(weights.size()); }
  bool multi() const { return variant == Variant::stagewise_multi; }

  const Eigen::VectorXd& block(int stage) const {
    return multi() ? weights[static_cast<std::size_t>(stage)] : weights.front();
  }

  static OrdinalModel zeros(Variant variant, int n_classes, int dim) {
    if (n_classes < 2) fail(ErrorCategory::config, "ordinal model needs at least 2 classes");
    OrdinalModel m;
    m.variant = variant;
    m.n_classes = n_classes;
    int blocks = variant == Variant::stagewise_multi ? n_classes - 1 : 1;
    m.weights.assign(static_cast<std::size_t>(blocks), Eigen::VectorXd::Zero(dim));
    m.thresholds = Eigen::VectorXd::Zero(n_classes - 1);
    return m;
  }
};

namespace detail {

// tau_l - w_l'x for each split level
inline Eigen::VectorXd split_scores(const OrdinalModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd z(m.n_classes - 1);
  if (m.multi()) {
    for (int l = 0; l < m.n_classes - 1; ++l)
      z(l) = m.thresholds(l) - m.weights[static_cast<std::size_t>(l)].dot(x);
  } else {
    double u = m.weights.front().dot(x);
    for (int l = 0; l < m.n_classes - 1; ++l) z(l) = m.thresholds(l) - u;
  }
  return z;
}

}  // namespace detail

inline Eigen::VectorXd class_probs(const OrdinalModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const int L = m.n_classes;
  Eigen::VectorXd z = detail::split_scores(m, x);
  Eigen::VectorXd p(L);
  if (m.variant == Variant::cumulative) {
    double prev = 0.0;
    for (int l = 0; l < L - 1; ++l) {
      double cum = logistic::cdf(z(l));
      p(l) = cum - prev;
      prev = cum;
    }
    p(L - 1) = 1.0 - prev;
  } else {
    double log_survive = 0.0;  // log prod_{m<l} (1 - F_m)
    for (int l = 0; l < L - 1; ++l) {
      p(l) = std::exp(logistic::log_cdf(z(l)) + log_survive);
      log_survive += logistic::log_cdf(-z(l));  // log(1 - F) = log F(-z)
    }
    p(L - 1) = std::exp(log_survive);
  }
  return p;
}

inline double nll(const OrdinalModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int y) {
  const int L = m.n_classes;
  if (y < 1 || y > L) fail(ErrorCategory::data, "label " + std::to_string(y) + " outside 1.." + std::to_string(L));
  Eigen::VectorXd z = detail::split_scores(m, x);
  if (m.variant == Variant::cumulative) {
    if (y == 1) return logistic::softplus(-z(0));
    if (y == L) return logistic::softplus(z(L - 2));
    double a = z(y - 1), b = z(y - 2);  // P = F(a) - F(b), a > b
    double log_p = -b + std::log1p(-std::exp(b - a)) - logistic::softplus(-a) - logistic::softplus(-b);
    return -log_p;
  }
  double acc = 0.0;
  for (int stage = 0; stage < y - 1 && stage < L - 1; ++stage) acc += logistic::softplus(z(stage));
  if (y < L) acc += logistic::softplus(-z(y - 1));
  return acc;
}

struct NllGrad {
  std::vector<Eigen::VectorXd> d_weights;  // matching the model's blocks
  Eigen::VectorXd d_thresholds;            // natural-scale thresholds
};

inline double nll_with_grad(const OrdinalModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int y,
                            NllGrad& grad) {
  const int L = m.n_classes;
  if (y < 1 || y > L) fail(ErrorCategory::data, "label " + std::to_string(y) + " outside 1.." + std::to_string(L));
  Eigen::VectorXd z = detail::split_scores(m, x);
  grad.d_weights.assign(m.weights.size(), Eigen::VectorXd::Zero(m.dim()));
  grad.d_thresholds = Eigen::VectorXd::Zero(L - 1);

  // d nll / d z_l; z_l = tau_l - w_l'x, so d/d tau_l = coefficient and
  // d/d w_l = -coefficient * x.
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(L - 1);
  double value;
  if (m.variant == Variant::cumulative) {
    if (y == 1) {
      value = logistic::softplus(-z(0));
      coef(0) = -logistic::cdf(-z(0));
    } else if (y == L) {
      value = logistic::softplus(z(L - 2));
      coef(L - 2) = logistic::cdf(z(L - 2));
    } else {
      double a = z(y - 1), b = z(y - 2);
      double log_p = -b + std::log1p(-std::exp(b - a)) - logistic::softplus(-a) - logistic::softplus(-b);
      value = -log_p;
      double p = std::exp(log_p);
      if (p < kProbabilityFloor) p = kProbabilityFloor;
      coef(y - 1) = -logistic::pdf(a) / p;
      coef(y - 2) = logistic::pdf(b) / p;
    }
  } else {
    value = 0.0;
    for (int stage = 0; stage < y - 1 && stage < L - 1; ++stage) {
      value += logistic::softplus(z(stage));
      coef(stage) = logistic::cdf(z(stage));
    }
    if (y < L) {
      value += logistic::softplus(-z(y - 1));
      coef(y - 1) = -logistic::cdf(-z(y - 1));
    }
  }

  grad.d_thresholds = coef;
  if (m.multi()) {
    for (int l = 0; l < L - 1; ++l)
      if (coef(l) != 0.0) grad.d_weights[static_cast<std::size_t>(l)] = -coef(l) * x;
  } else {
    grad.d_weights[0] = -coef.sum() * x;
  }
  return value;
}

// argmax over class probabilities; ties break toward the lower risk class.
inline int predict_class(const OrdinalModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd p = class_probs(m, x);
  int best = 0;
  for (int l = 1; l < m.n_classes; ++l)
    if (p(l) > p(best)) best = l;
  return best + 1;
}

}  // namespace ordstab
