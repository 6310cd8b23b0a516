#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "fraclap/assembly.hpp"
#include "fraclap/descent.hpp"
#include "fraclap/parallel.hpp"

namespace fraclap {

struct SolverOptions {
  double tol = 1e-9;           ///< weak-residual stopping threshold
  int max_iter = 20000;
  double cluster_tol = 1e-4;   ///< L^q distance below which two extremals coincide
  double energy_match = 1e-6;  ///< relative gap to the best value for a run to count as minimal
  double tol_inv = 1e-7;       ///< |mu_min| threshold for invertibility
  unsigned threads = 0;
  bool record_history = false;
};

struct ExtremalResult {
  DiscreteFunction u;         ///< rescaled extremal on the reference mesh, ||u||_q = 1, int u >= 0
  double eps = 1.0;
  double S = 0.0;             ///< S(Omega_eps)
  double S_scaled = 0.0;      ///< S(Omega_eps) / eps^{n(1-2/q)}
  double lambda = 0.0;        ///< multiplier of the rescaled equation; equals S_scaled
  int iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
  std::vector<double> history;  ///< scaled quotient after each accepted step (when requested)
};

namespace detail {

/// eps^{n(1-2/q)}: the volume factor relating S(Omega_eps) to the scaled quotient.
inline double volume_factor(const FractionalParams& p, double eps) {
  return std::pow(eps, p.n * (1.0 - 2.0 / p.q));
}

inline void require_nonzero_norm(double nrm) {
  detail::require(std::isfinite(nrm) && nrm > 0.0, "quotient is undefined for the zero function");
}

}  // namespace detail

/// (u^T K u + u^T M u) / ||u||_q^2 on the assembled domain.
inline double rayleigh_quotient(const Vector& u, const EnergyForms& forms) {
  const double nrm = forms.lq_norm(u);
  detail::require_nonzero_norm(nrm);
  return (forms.seminorm_energy(u) + u.dot(forms.M * u)) / (nrm * nrm);
}

inline double rayleigh_quotient(const DiscreteFunction& u, const EnergyForms& forms) {
  return rayleigh_quotient(u.coeffs, forms);
}

/// Quotient of the pushforward v(x) = u(x/eps) on eps*Omega, evaluated on the reference mesh:
/// eps^{n(1-2/q)} (eps^{-2s} u^T K u + u^T M u) / ||u||_q^2.
inline double scaled_quotient(const Vector& u, double eps, const EnergyForms& forms) {
  detail::require(std::isfinite(eps) && eps > 0.0, "contraction parameter must be positive");
  const double nrm = forms.lq_norm(u);
  detail::require_nonzero_norm(nrm);
  const auto& p = forms.params;
  const double energy = std::pow(eps, -2.0 * p.s) * forms.seminorm_energy(u) + u.dot(forms.M * u);
  return detail::volume_factor(p, eps) * energy / (nrm * nrm);
}

inline double scaled_quotient(const DiscreteFunction& u, double eps, const EnergyForms& forms) {
  return scaled_quotient(u.coeffs, eps, forms);
}

/// M^{-1}-norm of r = K u + eps^{2s} M u - eps^{2s} lambda g(u), the discrete
/// weak form of the rescaled equation.
inline double weak_residual(const Vector& u, double eps, double lambda, const EnergyForms& forms) {
  const double e2s = std::pow(eps, 2.0 * forms.params.s);
  const Vector r = forms.apply_K(u) + e2s * (forms.M * u - lambda * forms.lq_gradient(u));
  return forms.dual_norm(r);
}

inline double weak_residual(const DiscreteFunction& u, double eps, double lambda, const EnergyForms& forms) {
  return weak_residual(u.coeffs, eps, lambda, forms);
}

/// Flip u so that int u >= 0.
inline void canonicalize_sign(Vector& u, const EnergyForms& forms) {
  if (forms.mass_ones.dot(u) < 0.0) u = -u;
}

/// Minimizes the scaled quotient on the L^q unit sphere, starting from init.
inline ExtremalResult minimize_rayleigh(const EnergyForms& forms, double eps, const Vector& init,
                                        const SolverOptions& opts = {}) {
  const FractionalParams& p = forms.params;
  require_extremal_exponent(p);
  detail::require(std::isfinite(eps) && eps > 0.0, "contraction parameter must be positive");
  detail::require(init.size() == forms.K.rows(), "initial guess has the wrong size");
  detail::require_nonzero_norm(forms.lq_norm(init));
  const double e2s = std::pow(eps, 2.0 * p.s);

  // r = eps^{2s} * (half gradient), so the residual scale is eps^{2s}.
  const detail::SphereProblem prob{1.0 / e2s, 1.0, false, e2s};
  detail::DescentOutcome run = detail::descend_on_sphere(forms, prob, p.q, init, opts.tol, opts.max_iter, opts.record_history);

  ExtremalResult res;
  res.eps = eps;
  canonicalize_sign(run.u, forms);
  res.iterations = run.iterations;
  res.residual_norm = run.residual;
  res.converged = run.converged;
  res.S_scaled = run.value;
  res.S = detail::volume_factor(p, eps) * res.S_scaled;
  res.lambda = res.S_scaled;
  res.history = std::move(run.history);
  res.u = forms.function(std::move(run.u));
  return res;
}

inline ExtremalResult minimize_rayleigh(const EnergyForms& forms, double eps, const DiscreteFunction& init,
                                        const SolverOptions& opts = {}) {
  return minimize_rayleigh(forms, eps, init.coeffs, opts);
}

struct MultistartResult {
  std::vector<ExtremalResult> clusters;  ///< one representative per distinct minimal extremal, start-index order
  std::vector<ExtremalResult> runs;      ///< every run: constant, extra starts, then random starts
  std::size_t n_converged = 0;

  /// Representative with the lowest quotient.
  const ExtremalResult& best() const {
    return *std::min_element(clusters.begin(), clusters.end(),
                             [](const auto& a, const auto& b) { return a.S_scaled < b.S_scaled; });
  }
};

/// Seeded random initial guess: constant plus independent Gaussian nodal noise.
inline Vector random_start(const EnergyForms& forms, std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> noise(0.0, 0.5);
  Vector u(static_cast<Eigen::Index>(forms.size()));
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = 1.0 + noise(rng);
  return u;
}

/// Lp distance between two coefficient vectors on the forms' mesh.
inline double lq_distance(const EnergyForms& forms, const Vector& a, const Vector& b) {
  return forms.lq_norm(a - b);
}

/// Minimizes from the constant, from `extra` warm starts, and from n_starts
/// seeded random guesses; runs whose value is within energy_match of the
/// best are grouped by L^q distance.
inline MultistartResult multistart_extremals(const EnergyForms& forms, double eps, int n_starts, std::uint64_t seed,
                                             const SolverOptions& opts = {}, const std::vector<Vector>& extra = {}) {
  detail::require(n_starts >= 2, "multistart needs at least two random starts");
  std::vector<Vector> inits;
  inits.push_back(Vector::Ones(static_cast<Eigen::Index>(forms.size())));
  for (const auto& v : extra) inits.push_back(v);
  for (int k = 0; k < n_starts; ++k) inits.push_back(random_start(forms, seed, static_cast<std::uint64_t>(k)));

  MultistartResult out;
  out.runs.resize(inits.size());
  SolverOptions inner = opts;
  inner.record_history = false;
  parallel_for(inits.size(), opts.threads, [&](std::size_t i) { out.runs[i] = minimize_rayleigh(forms, eps, inits[i], inner); });

  for (const auto& r : out.runs) out.n_converged += r.converged ? 1 : 0;
  const bool use_converged_only = out.n_converged > 0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : out.runs)
    if (!use_converged_only || r.converged) best = std::min(best, r.S_scaled);

  for (const auto& r : out.runs) {
    if (use_converged_only && !r.converged) continue;
    if (r.S_scaled > best + opts.energy_match * std::abs(best)) continue;
    bool joined = false;
    for (const auto& c : out.clusters)
      if (lq_distance(forms, r.u.coeffs, c.u.coeffs) < opts.cluster_tol) {
        joined = true;
        break;
      }
    if (!joined) out.clusters.push_back(r);
  }
  return out;
}

}  // namespace fraclap
