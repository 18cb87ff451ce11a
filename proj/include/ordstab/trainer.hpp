// Regularized maximum-likelihood training of the ordinal classifiers:
// Huber-smoothed L1 plus an optional feature-network quadratic penalty,
// minimized by L-BFGS. Thresholds of shared-parameter variants are kept
// ordered by optimizing (tau_1, log gaps).
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ordstab/feature_network.hpp"
#include "ordstab/lbfgs.hpp"
#include "ordstab/ordinal_model.hpp"

namespace ordstab {

struct TrainingConfig {
  double alpha = 3e-4;               // L1 strength
  double beta = 0.0;                 // network-penalty strength
  double huber_epsilon = 1e-4;       // smoothing width of the L1 approximation
  double selection_threshold = 1e-3; // |w| at or below this is zeroed after training
  int max_iterations = 500;
  double grad_tolerance = 1e-6;
  double rel_objective_tolerance = 1e-9;
  int objective_patience = 5;
  int memory = 10;
  std::vector<double> class_weights;  // optional per-class loss weights, size L

  void validate() const {
    if (alpha < 0 || beta < 0) fail(ErrorCategory::config, "alpha and beta must be >= 0");
    if (huber_epsilon <= 0) fail(ErrorCategory::config, "huber_epsilon must be > 0");
    if (selection_threshold <= 0) fail(ErrorCategory::config, "selection_threshold must be > 0");
    if (max_iterations < 1) fail(ErrorCategory::config, "max_iterations must be >= 1");
  }

  LbfgsOptions optimizer_options() const {
    LbfgsOptions opt;
    opt.memory = memory;
    opt.max_iterations = max_iterations;
    opt.grad_tolerance = grad_tolerance;
    opt.rel_objective_tolerance = rel_objective_tolerance;
    opt.objective_patience = objective_patience;
    return opt;
  }
};

struct Dataset {
  RowMatrixXd X;  // normalized features, n x d
  Eigen::VectorXi y;
  int n_classes = 0;
  std::vector<std::string> patient_ids;
  std::vector<std::string> feature_ids;

  int n() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }

  void validate() const {
    if (X.rows() == 0) fail(ErrorCategory::data, "dataset is empty");
    if (y.size() != X.rows()) fail(ErrorCategory::data, "label count does not match row count");
    if (!X.allFinite()) fail(ErrorCategory::data, "dataset contains non-finite feature values");
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y(i) < 1 || y(i) > n_classes)
        fail(ErrorCategory::data, "label " + std::to_string(y(i)) + " outside 1.." +
                                      std::to_string(n_classes) + " at row " + std::to_string(i));
  }

  Dataset rows(const std::vector<int>& idx) const {
    Dataset out;
    out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    out.y.resize(static_cast<Eigen::Index>(idx.size()));
    out.n_classes = n_classes;
    out.feature_ids = feature_ids;
    out.patient_ids.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.X.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
      out.y(static_cast<Eigen::Index>(k)) = y(idx[k]);
      out.patient_ids.push_back(patient_ids.empty() ? std::string() : patient_ids[static_cast<std::size_t>(idx[k])]);
    }
    return out;
  }
};

// Huber-smoothed absolute value: quadratic inside [-eps, eps], linear outside.
inline double huber(double w, double eps) {
  double a = std::abs(w);
  return a <= eps ? 0.5 * w * w / eps : a - 0.5 * eps;
}

inline double huber_grad(double w, double eps) {
  if (std::abs(w) <= eps) return w / eps;
  return w > 0 ? 1.0 : -1.0;
}

// Mapping between the free optimizer vector and model parameters. Shared
// variants keep thresholds ordered via (tau_1, log gaps); the multi variant
// leaves every threshold free.
struct ParamLayout {
  Variant variant = Variant::cumulative;
  int n_classes = 2;
  int dim = 0;

  int n_weight_blocks() const { return variant == Variant::stagewise_multi ? n_classes - 1 : 1; }
  int size() const { return n_weight_blocks() * dim + (n_classes - 1); }
  int threshold_offset() const { return n_weight_blocks() * dim; }

  OrdinalModel unpack(const Eigen::VectorXd& theta) const {
    OrdinalModel m = OrdinalModel::zeros(variant, n_classes, dim);
    for (int b = 0; b < n_weight_blocks(); ++b)
      m.weights[static_cast<std::size_t>(b)] = theta.segment(b * dim, dim);
    const int off = threshold_offset();
    if (variant == Variant::stagewise_multi) {
      m.thresholds = theta.segment(off, n_classes - 1);
    } else {
      m.thresholds(0) = theta(off);
      for (int l = 1; l < n_classes - 1; ++l)
        m.thresholds(l) = m.thresholds(l - 1) + std::exp(theta(off + l));
    }
    return m;
  }

  Eigen::VectorXd pack(const OrdinalModel& m) const {
    Eigen::VectorXd theta(size());
    for (int b = 0; b < n_weight_blocks(); ++b)
      theta.segment(b * dim, dim) = m.weights[static_cast<std::size_t>(b)];
    const int off = threshold_offset();
    if (variant == Variant::stagewise_multi) {
      theta.segment(off, n_classes - 1) = m.thresholds;
    } else {
      theta(off) = m.thresholds(0);
      for (int l = 1; l < n_classes - 1; ++l) {
        double gap = m.thresholds(l) - m.thresholds(l - 1);
        if (gap <= 0) fail(ErrorCategory::data, "thresholds must be strictly increasing");
        theta(off + l) = std::log(gap);
      }
    }
    return theta;
  }

  // Chain rule from natural-scale threshold gradients to the free vector.
  void fold_threshold_grad(const Eigen::VectorXd& theta, const Eigen::VectorXd& d_tau,
                           Eigen::VectorXd& grad) const {
    const int off = threshold_offset();
    const int K = n_classes - 1;
    if (variant == Variant::stagewise_multi) {
      grad.segment(off, K) = d_tau;
      return;
    }
    grad(off) = d_tau.sum();
    double suffix = 0.0;
    for (int l = K - 1; l >= 1; --l) {
      suffix += d_tau(l);
      grad(off + l) = std::exp(theta(off + l)) * suffix;
    }
  }
};

// Full objective: (1/n) sum_i nll_i + alpha * sum H(w) + beta * w'Sw, the
// penalties applied per weight block and never to thresholds.
inline double objective_value_and_grad(const Eigen::VectorXd& theta, const ParamLayout& layout,
                                       const Dataset& data, const TrainingConfig& config,
                                       const RegularizerMatrix* S, Eigen::VectorXd& grad) {
  if (config.beta > 0 && S == nullptr)
    fail(ErrorCategory::config, "beta > 0 requires a regularizer matrix");
  if (S != nullptr && S->dim() != layout.dim)
    fail(ErrorCategory::data, "regularizer dimension does not match feature dimension");

  OrdinalModel m = layout.unpack(theta);
  const int n = data.n();
  const int L = layout.n_classes;
  const int B = layout.n_weight_blocks();
  const double inv_n = 1.0 / static_cast<double>(n);

  grad = Eigen::VectorXd::Zero(layout.size());
  Eigen::VectorXd d_tau = Eigen::VectorXd::Zero(L - 1);
  // per-block coefficient vectors; block gradient = X' * coef
  RowMatrixXd coefs = RowMatrixXd::Zero(n, B);

  double data_term = 0.0;
  Eigen::VectorXd z(L - 1);
  for (int i = 0; i < n; ++i) {
    const auto x = data.X.row(i);
    const int y = data.y(i);
    double cw = config.class_weights.empty() ? 1.0 : config.class_weights[static_cast<std::size_t>(y - 1)];

    if (m.multi()) {
      for (int l = 0; l < L - 1; ++l)
        z(l) = m.thresholds(l) - m.weights[static_cast<std::size_t>(l)].dot(x);
    } else {
      double u = m.weights.front().dot(x);
      for (int l = 0; l < L - 1; ++l) z(l) = m.thresholds(l) - u;
    }

    double value;
    double coef_scratch[2];  // cumulative touches at most two split levels
    int touched[2];
    int n_touched = 0;
    if (layout.variant == Variant::cumulative) {
      if (y == 1) {
        value = logistic::softplus(-z(0));
        coef_scratch[0] = -logistic::cdf(-z(0));
        touched[0] = 0;
        n_touched = 1;
      } else if (y == L) {
        value = logistic::softplus(z(L - 2));
        coef_scratch[0] = logistic::cdf(z(L - 2));
        touched[0] = L - 2;
        n_touched = 1;
      } else {
        double a = z(y - 1), b = z(y - 2);
        double log_p = -b + std::log1p(-std::exp(b - a)) - logistic::softplus(-a) -
                       logistic::softplus(-b);
        value = -log_p;
        double p = std::exp(log_p);
        if (p < kProbabilityFloor) p = kProbabilityFloor;
        coef_scratch[0] = -logistic::pdf(a) / p;
        touched[0] = y - 1;
        coef_scratch[1] = logistic::pdf(b) / p;
        touched[1] = y - 2;
        n_touched = 2;
      }
      if (!std::isfinite(value))
        fail(ErrorCategory::numeric, "non-finite loss at instance " + std::to_string(i));
      data_term += cw * value;
      double total = 0.0;
      for (int k = 0; k < n_touched; ++k) {
        d_tau(touched[k]) += cw * inv_n * coef_scratch[k];
        total += coef_scratch[k];
      }
      coefs(i, 0) = -cw * total;  // d/dw = -coef * x
    } else {
      value = 0.0;
      for (int stage = 0; stage < y - 1 && stage < L - 1; ++stage) {
        value += logistic::softplus(z(stage));
        double c = logistic::cdf(z(stage));
        d_tau(stage) += cw * inv_n * c;
        coefs(i, m.multi() ? stage : 0) += -cw * c;
      }
      if (y < L) {
        value += logistic::softplus(-z(y - 1));
        double c = -logistic::cdf(-z(y - 1));
        d_tau(y - 1) += cw * inv_n * c;
        coefs(i, m.multi() ? (y - 1) : 0) += -cw * c;
      }
      if (!std::isfinite(value))
        fail(ErrorCategory::numeric, "non-finite loss at instance " + std::to_string(i));
      data_term += cw * value;
    }
  }

  double objective = data_term * inv_n;
  for (int b = 0; b < B; ++b)
    grad.segment(b * layout.dim, layout.dim) = inv_n * (data.X.transpose() * coefs.col(b));

  // penalties per weight block
  for (int b = 0; b < B; ++b) {
    auto w = theta.segment(b * layout.dim, layout.dim);
    auto gw = grad.segment(b * layout.dim, layout.dim);
    if (config.alpha > 0) {
      for (int j = 0; j < layout.dim; ++j) {
        objective += config.alpha * huber(w(j), config.huber_epsilon);
        gw(j) += config.alpha * huber_grad(w(j), config.huber_epsilon);
      }
    }
    if (config.beta > 0) {
      Eigen::VectorXd wv = w;
      objective += config.beta * penalty(*S, wv);
      gw += config.beta * penalty_gradient(*S, wv);
    }
  }

  layout.fold_threshold_grad(theta, d_tau, grad);
  if (!std::isfinite(objective)) fail(ErrorCategory::numeric, "non-finite objective");
  return objective;
}

struct FitOutcome {
  OrdinalModel model;
  TerminationReason reason = TerminationReason::max_iterations;
  bool degraded = false;
  int iterations = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::vector<OptimizerTraceRow> trace;
};

// Frequency-matched threshold start: tau_l at the link quantile of the
// empirical probability of classes <= l.
inline Eigen::VectorXd initial_thresholds(const Eigen::VectorXi& y, int L) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(L);
  for (Eigen::Index i = 0; i < y.size(); ++i) counts(y(i) - 1) += 1.0;
  Eigen::VectorXd tau(L - 1);
  double cum = 0.0;
  for (int l = 0; l < L - 1; ++l) {
    cum += counts(l);
    tau(l) = logistic::quantile(cum / static_cast<double>(y.size()));
  }
  return tau;
}

inline FitOutcome fit(const Dataset& data, const TrainingConfig& config, Variant variant,
                      const RegularizerMatrix* S = nullptr, const OrdinalModel* init = nullptr) {
  config.validate();
  data.validate();
  const int L = data.n_classes;
  if (L < 2) fail(ErrorCategory::data, "training requires at least 2 classes");
  std::vector<std::int64_t> class_counts(static_cast<std::size_t>(L), 0);
  for (Eigen::Index i = 0; i < data.y.size(); ++i) ++class_counts[static_cast<std::size_t>(data.y(i) - 1)];
  for (int l = 0; l < L; ++l)
    if (class_counts[static_cast<std::size_t>(l)] == 0)
      fail(ErrorCategory::data, "class " + std::to_string(l + 1) + " missing from training labels");

  ParamLayout layout{variant, L, data.dim()};
  Eigen::VectorXd theta0;
  if (init != nullptr) {
    theta0 = layout.pack(*init);
  } else {
    OrdinalModel start = OrdinalModel::zeros(variant, L, data.dim());
    start.thresholds = initial_thresholds(data.y, L);
    theta0 = layout.pack(start);
  }

  ObjectiveFn objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    return objective_value_and_grad(theta, layout, data, config, S, grad);
  };

  MinimizeResult res = minimize(objective, theta0, config.optimizer_options());

  FitOutcome out;
  out.model = layout.unpack(res.x);
  out.reason = res.reason;
  out.degraded = res.degraded;
  out.iterations = res.iterations;
  out.initial_objective = res.trace.front().objective;
  out.final_objective = res.value;
  out.trace = std::move(res.trace);
  return out;
}

struct SelectionResult {
  OrdinalModel model;
  std::vector<std::vector<int>> selected;  // per weight block, feature indices with |w| > threshold
};

inline SelectionResult select_features(const OrdinalModel& model, double threshold) {
  if (threshold <= 0) fail(ErrorCategory::config, "selection threshold must be > 0");
  SelectionResult out;
  out.model = model;
  out.selected.resize(model.weights.size());
  for (std::size_t b = 0; b < model.weights.size(); ++b) {
    auto& w = out.model.weights[b];
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      if (std::abs(w(j)) <= threshold)
        w(j) = 0.0;
      else
        out.selected[b].push_back(static_cast<int>(j));
    }
  }
  return out;
}

}  // namespace ordstab
