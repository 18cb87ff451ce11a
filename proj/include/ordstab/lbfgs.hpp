// Limited-memory BFGS with a strong-Wolfe line search, driven through a
// (value, gradient) callback. Deterministic: no randomness, fixed evaluation
// order.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ordstab/errors.hpp"

namespace ordstab {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 500;
  double grad_tolerance = 1e-6;            // sup-norm of the gradient
  double rel_objective_tolerance = 1e-9;   // relative decrease per accepted step
  int objective_patience = 5;              // consecutive small decreases before stopping
  int max_line_search = 50;
  double sufficient_decrease = 1e-4;       // Wolfe c1
  double curvature = 0.9;                  // Wolfe c2
};

enum class TerminationReason : std::uint8_t {
  gradient_norm,
  objective_stall,
  max_iterations,
  line_search_failure,
};

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::gradient_norm: return "gradient_norm";
    case TerminationReason::objective_stall: return "objective_stall";
    case TerminationReason::max_iterations: return "max_iterations";
    case TerminationReason::line_search_failure: return "line_search_failure";
  }
  return "unknown";
}

struct OptimizerTraceRow {
  int iteration = 0;
  double objective = 0.0;
  double grad_norm = 0.0;  // sup-norm
  double step = 0.0;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  TerminationReason reason = TerminationReason::max_iterations;
  bool degraded = false;  // line search gave up; x is the best point seen
  int iterations = 0;
  std::vector<OptimizerTraceRow> trace;
};

namespace detail {

struct LineSearchResult {
  bool ok = false;
  double step = 0.0;
  double f = 0.0;
  Eigen::VectorXd x, g;
};

// Strong Wolfe search along direction d (Nocedal & Wright, alg. 3.5/3.6).
inline LineSearchResult wolfe_line_search(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                                          double f0, const Eigen::VectorXd& g0,
                                          const Eigen::VectorXd& d, double initial_step,
                                          const LbfgsOptions& opt) {
  LineSearchResult out;
  const double dphi0 = g0.dot(d);
  if (dphi0 >= 0.0) return out;  // not a descent direction

  const double c1 = opt.sufficient_decrease, c2 = opt.curvature;
  Eigen::VectorXd x = x0, g = g0;
  auto phi = [&](double a, double& dphi) {
    x = x0 + a * d;
    double f = fn(x, g);
    dphi = g.dot(d);
    return f;
  };

  // Track the best strict decrease seen, as a fallback.
  double best_step = 0.0, best_f = f0;
  Eigen::VectorXd best_x = x0, best_g = g0;
  auto remember = [&](double a, double f) {
    if (f < best_f) {
      best_step = a;
      best_f = f;
      best_x = x;
      best_g = g;
    }
  };

  auto zoom = [&](double lo, double f_lo, double dphi_lo, double hi, double f_hi) -> bool {
    for (int i = 0; i < opt.max_line_search; ++i) {
      // quadratic interpolation, safeguarded by bisection
      double a;
      double denom = 2.0 * (f_hi - f_lo - dphi_lo * (hi - lo));
      if (denom != 0.0) {
        a = lo - dphi_lo * (hi - lo) * (hi - lo) / denom;
        double lo_b = std::min(lo, hi), hi_b = std::max(lo, hi);
        double margin = 0.1 * (hi_b - lo_b);
        if (!(a > lo_b + margin && a < hi_b - margin)) a = 0.5 * (lo + hi);
      } else {
        a = 0.5 * (lo + hi);
      }
      double dphi_a;
      double f_a = phi(a, dphi_a);
      remember(a, f_a);
      if (f_a > f0 + c1 * a * dphi0 || f_a >= f_lo) {
        hi = a;
        f_hi = f_a;
      } else {
        if (std::abs(dphi_a) <= -c2 * dphi0) {
          out.ok = true;
          out.step = a;
          out.f = f_a;
          out.x = x;
          out.g = g;
          return true;
        }
        if (dphi_a * (hi - lo) >= 0.0) {
          hi = lo;
          f_hi = f_lo;
        }
        lo = a;
        f_lo = f_a;
        dphi_lo = dphi_a;
      }
      if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
    }
    return false;
  };

  double prev_a = 0.0, prev_f = f0, prev_dphi = dphi0;
  double a = initial_step;
  for (int i = 0; i < opt.max_line_search; ++i) {
    double dphi_a;
    double f_a = phi(a, dphi_a);
    remember(a, f_a);
    if (f_a > f0 + c1 * a * dphi0 || (i > 0 && f_a >= prev_f)) {
      if (zoom(prev_a, prev_f, prev_dphi, a, f_a)) return out;
      break;
    }
    if (std::abs(dphi_a) <= -c2 * dphi0) {
      out.ok = true;
      out.step = a;
      out.f = f_a;
      out.x = x;
      out.g = g;
      return out;
    }
    if (dphi_a >= 0.0) {
      if (zoom(a, f_a, dphi_a, prev_a, prev_f)) return out;
      break;
    }
    prev_a = a;
    prev_f = f_a;
    prev_dphi = dphi_a;
    a = std::min(2.0 * a, 1e20);
  }

  if (best_f < f0) {  // no Wolfe point, but a strict decrease exists
    out.ok = true;
    out.step = best_step;
    out.f = best_f;
    out.x = best_x;
    out.g = best_g;
  }
  return out;
}

}  // namespace detail

inline MinimizeResult minimize(const ObjectiveFn& fn, Eigen::VectorXd x0,
                               const LbfgsOptions& opt = {}) {
  if (opt.memory < 1) fail(ErrorCategory::config, "optimizer memory must be >= 1");
  MinimizeResult result;
  const Eigen::Index n = x0.size();

  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g(n);
  double f = fn(x, g);
  if (!std::isfinite(f)) fail(ErrorCategory::numeric, "objective is not finite at the initial point");

  double grad_inf = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
  result.trace.push_back({0, f, grad_inf, 0.0});

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd q(n), direction(n);
  std::vector<double> alpha_buf;

  int stall = 0;
  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    if (grad_inf <= opt.grad_tolerance) {
      result.reason = TerminationReason::gradient_norm;
      break;
    }

    // two-loop recursion
    q = g;
    const int m = static_cast<int>(s_hist.size());
    alpha_buf.assign(static_cast<std::size_t>(m), 0.0);
    for (int i = m - 1; i >= 0; --i) {
      alpha_buf[static_cast<std::size_t>(i)] =
          rho_hist[static_cast<std::size_t>(i)] * s_hist[static_cast<std::size_t>(i)].dot(q);
      q -= alpha_buf[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)];
    }
    if (m > 0) {
      const auto& s_last = s_hist.back();
      const auto& y_last = y_hist.back();
      double gamma = s_last.dot(y_last) / y_last.dot(y_last);
      q *= gamma;
    }
    for (int i = 0; i < m; ++i) {
      double beta = rho_hist[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)].dot(q);
      q += (alpha_buf[static_cast<std::size_t>(i)] - beta) * s_hist[static_cast<std::size_t>(i)];
    }
    direction = -q;
    if (g.dot(direction) >= 0.0) {  // lost positive definiteness; restart
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      direction = -g;
    }

    double g2 = g.norm();
    double initial_step = (s_hist.empty() && g2 > 0.0) ? std::min(1.0, 1.0 / g2) : 1.0;
    auto ls = detail::wolfe_line_search(fn, x, f, g, direction, initial_step, opt);
    if (!ls.ok) {
      result.reason = TerminationReason::line_search_failure;
      result.degraded = true;
      break;
    }

    Eigen::VectorXd s = ls.x - x;
    Eigen::VectorXd yv = ls.g - g;
    double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    double f_prev = f;
    x = ls.x;
    g = ls.g;
    f = ls.f;
    grad_inf = g.cwiseAbs().maxCoeff();
    result.iterations = iter;
    result.trace.push_back({iter, f, grad_inf, ls.step});

    double rel = (f_prev - f) / std::max(1.0, std::abs(f_prev));
    if (rel < opt.rel_objective_tolerance) {
      if (++stall >= opt.objective_patience) {
        result.reason = TerminationReason::objective_stall;
        break;
      }
    } else {
      stall = 0;
    }
    if (iter == opt.max_iterations) result.reason = TerminationReason::max_iterations;
  }
  if (grad_inf <= opt.grad_tolerance) result.reason = TerminationReason::gradient_norm;

  result.x = std::move(x);
  result.value = f;
  return result;
}

}  // namespace ordstab
