#pragma once

#include <cmath>

#include "fraclap/assembly.hpp"
#include "fraclap/descent.hpp"
#include "fraclap/extremal.hpp"
#include "fraclap/linearization.hpp"

namespace fraclap {

/// Best constant c in c ||w||_q^2 <= w^T K w over mean-zero w.
struct PoincareResult {
  double c = 0.0;
  DiscreteFunction minimizer;  ///< int w = 0, ||w||_q = 1
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

/// Lower bound on the uniqueness threshold.
struct EpsilonBound {
  double eps0_theoretical = 0.0;
  double c_used = 0.0;
  double s = 0.0;
  double q = 0.0;
  double measure = 0.0;
};

/// q = 2: smallest mean-zero eigenvalue of (K, M). Otherwise the sphere
/// descent restricted to mean-zero functions, started at the q = 2 eigenvector.
inline PoincareResult poincare_constant(const EnergyForms& forms, const SolverOptions& opts = {}) {
  const double q = forms.params.q;
  detail::require(q > 1.0, "Poincare minimizer needs q > 1 (the q = 1 quotient is not differentiable)");
  const TangentSpectrum eig = mean_zero_spectrum(forms, opts.tol_inv);

  PoincareResult out;
  Vector w = eig.eigvec.coeffs;
  if (q == 2.0) {
    w /= forms.lq_norm(w);
    out.c = eig.mu_min;
    out.converged = true;
    out.residual = eig.residual;
  } else {
    const detail::SphereProblem prob{1.0, 0.0, true, 1.0};
    detail::DescentOutcome run = detail::descend_on_sphere(forms, prob, q, w, opts.tol, opts.max_iter, false);
    w = std::move(run.u);
    out.c = forms.seminorm_energy(w) / std::pow(forms.lq_norm(w), 2.0);
    out.converged = run.converged;
    out.iterations = run.iterations;
    out.residual = run.residual;
  }
  // Sign convention: the first nonzero nodal value is positive.
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) {
      if (w[i] < 0.0) w = -w;
      break;
    }
  out.minimizer = forms.function(std::move(w));
  return out;
}

/// (c / ((q-1) |Omega|^{1-2/q}))^{1/(2s)}.
inline EpsilonBound epsilon0_lower_bound(double c, const FractionalParams& params, double measure) {
  detail::require(params.q > 1.0, "the threshold bound needs q > 1");
  detail::require(std::isfinite(c) && c > 0.0, "the threshold bound needs c > 0");
  detail::require(std::isfinite(measure) && measure > 0.0, "domain measure must be positive");
  EpsilonBound b;
  b.c_used = c;
  b.s = params.s;
  b.q = params.q;
  b.measure = measure;
  b.eps0_theoretical =
      std::pow(c / ((params.q - 1.0) * std::pow(measure, 1.0 - 2.0 / params.q)), 1.0 / (2.0 * params.s));
  return b;
}

}  // namespace fraclap
