#pragma once

#include <cmath>
#include <vector>

#include "fraclap/assembly.hpp"

namespace fraclap::detail {

/// Quotient (k_coef * u^T K u + m_coef * u^T M u) / ||u||_q^2, optionally
/// restricted to mean-zero functions.
struct SphereProblem {
  double k_coef = 1.0;
  double m_coef = 1.0;
  bool mean_zero = false;
  double residual_scale = 1.0;  ///< reported residual = residual_scale * ||projected gradient||_{M^{-1}}
};

struct DescentOutcome {
  Vector u;  ///< ||u||_q = 1
  double value = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

inline void remove_mean(Vector& v, const EnergyForms& forms) {
  v.array() -= forms.mass_ones.dot(v) / forms.mass_ones.sum();
}

/// Projected gradient descent on the L^q unit sphere.
///
/// Direction: -Pi M^{-1} (A u - E(u) g(u)) with A = k K + m M and Pi the
/// M-orthogonal projection onto mean-zero functions (identity when
/// unconstrained), applied in its dual form before the solve. Step:
/// Barzilai-Borwein trial length, then backtracking until the Armijo
/// condition holds. The decrease is computed from exact
/// expansions of the numerator and of int |u + t d|^q, so the test stays
/// meaningful far below the quotient's rounding level. Each accepted point
/// is rescaled to ||u||_q = 1, which leaves the quotient unchanged.
inline DescentOutcome descend_on_sphere(const EnergyForms& forms, const SphereProblem& prob, double q, Vector u,
                                        double tol, int max_iter, bool record_history) {
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 80;
  constexpr int kRefreshEvery = 64;

  if (prob.mean_zero) remove_mean(u, forms);
  u /= lq_norm(forms.table, u, q);

  DescentOutcome out;
  Vector Ku = forms.apply_K(u), Mu = forms.M * u;
  Vector grad_prev, u_prev;
  double step = 1.0;
  bool have_prev = false;

  auto energy = [&](const Vector& v, const Vector& Kv, const Vector& Mv) {
    return prob.k_coef * v.dot(Kv) + prob.m_coef * v.dot(Mv);
  };
  const double total_mass = forms.mass_ones.sum();
  // Drops the multiplier component along M 1 before the solve.
  auto project_dual = [&](Vector& grad) {
    if (prob.mean_zero) grad -= (grad.sum() / total_mass) * forms.mass_ones;
  };
  auto direction = [&](const Vector& grad) {
    Vector d = -forms.M_chol.solve(grad);
    if (prob.mean_zero) remove_mean(d, forms);
    return d;
  };
  // Residual on freshly computed products.
  auto exact_residual = [&] {
    Ku = forms.apply_K(u);
    Mu = forms.M * u;
    const double P = lq_power(forms.table, u, q);
    const Vector g = lq_gradient(forms.table, u, q);
    Vector grad = prob.k_coef * Ku + prob.m_coef * Mu - (energy(u, Ku, Mu) / P) * g;
    project_dual(grad);
    const Vector d = direction(grad);
    return prob.residual_scale * std::sqrt(std::max(0.0, -grad.dot(d)));
  };

  int it = 0;
  for (;; ++it) {
    const double P = lq_power(forms.table, u, q);
    const Vector g = lq_gradient(forms.table, u, q);
    const double num = energy(u, Ku, Mu);
    Vector grad = prob.k_coef * Ku + prob.m_coef * Mu - (num / P) * g;
    project_dual(grad);
    const Vector d = direction(grad);
    const double gd = grad.dot(d);  // = -||Pi M^{-1} grad||_M^2

    const double resid = prob.residual_scale * std::sqrt(std::max(0.0, -gd));
    if (resid <= tol || it >= max_iter) {
      out.residual = exact_residual();
      if (out.residual <= tol) {
        out.converged = true;
        break;
      }
      if (it >= max_iter) break;
    }

    const double den = std::pow(P, 2.0 / q);
    const double slope = 2.0 / den * gd;
    if (!(slope < 0.0)) {
      out.residual = exact_residual();
      out.converged = out.residual <= tol;
      break;
    }

    if (have_prev) {
      const Vector du = u - u_prev;
      const double sy = du.dot(grad - grad_prev);
      const double ss = du.dot(forms.M * du);
      if (sy > 0.0 && std::isfinite(ss / sy)) step = ss / sy;
    }

    const Vector Kd = forms.apply_K(d), Md = forms.M * d;
    const double uAd = energy(u, Kd, Md);
    const double dAd = energy(d, Kd, Md);
    bool accepted = false;
    double t = step;
    for (int bt = 0; bt < kMaxBacktracks; ++bt, t *= 0.5) {
      const double dnum = t * (2.0 * uAd + t * dAd);
      const double dP = lq_power_change(forms.table, u, d, t, q);
      if (!(P + dP > 0.0)) continue;
      const double dden = den * std::expm1((2.0 / q) * std::log1p(dP / P));
      const double df = (dnum * den - num * dden) / (den * (den + dden));
      if (std::isfinite(df) && df <= kArmijo * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Rounding floor: no representable decrease along d.
      out.residual = exact_residual();
      out.converged = out.residual <= tol;
      break;
    }

    u_prev = u;
    grad_prev = grad;
    have_prev = true;
    step = t;

    Vector next = u + t * d;
    const double nrm = lq_norm(forms.table, next, q);
    u = next / nrm;
    if ((it + 1) % kRefreshEvery == 0) {
      if (prob.mean_zero) {
        remove_mean(u, forms);
        u /= lq_norm(forms.table, u, q);
      }
      Ku = forms.apply_K(u);
      Mu = forms.M * u;
    } else {
      Ku = (Ku + t * Kd) / nrm;
      Mu = (Mu + t * Md) / nrm;
    }
    if (record_history)
      out.history.push_back(energy(u, Ku, Mu) / std::pow(lq_power(forms.table, u, q), 2.0 / q));
  }

  out.iterations = it;
  out.value = energy(u, forms.apply_K(u), forms.M * u) / std::pow(lq_power(forms.table, u, q), 2.0 / q);
  out.u = std::move(u);
  return out;
}

}  // namespace fraclap::detail
