#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fraclap/extremal.hpp"
#include "fraclap/linearization.hpp"
#include "fraclap/parallel.hpp"
#include "fraclap/poincare.hpp"

namespace fraclap {

struct ScanRecord {
  double eps = 0.0;
  double S_scaled = std::numeric_limits<double>::quiet_NaN();
  double lambda_eps = std::numeric_limits<double>::quiet_NaN();
  double dist_const_q = std::numeric_limits<double>::quiet_NaN();  ///< ||u - |Omega|^{-1/q}||_q
  double mu_min = std::numeric_limits<double>::quiet_NaN();
  int n_clusters = 0;
  bool converged = false;
  Vector u;           ///< best extremal (empty on failure); not serialized
  std::string error;  ///< failure message, empty on success
};

enum class DetectionMode { none, eigenvalue_crossing, multistart_split };

inline const char* to_string(DetectionMode m) {
  switch (m) {
    case DetectionMode::eigenvalue_crossing: return "eigenvalue-crossing";
    case DetectionMode::multistart_split: return "multistart-split";
    default: return "none";
  }
}

struct Eps0Estimate {
  bool found = false;
  double eps0_numerical = std::numeric_limits<double>::quiet_NaN();  ///< bracket midpoint when found
  DetectionMode detection_mode = DetectionMode::none;
  double eps_lo = std::numeric_limits<double>::quiet_NaN();
  double eps_hi = std::numeric_limits<double>::quiet_NaN();
  double eps0_theoretical = std::numeric_limits<double>::quiet_NaN();
  double c_used = std::numeric_limits<double>::quiet_NaN();
  bool poincare_converged = false;
  double eps_constant_crossing = std::numeric_limits<double>::infinity();  ///< (c2/(q-2))^{1/2s}, q > 2 only
  bool prediction_consistent = false;  ///< eigenvalue bracket within 2x of the constant-state prediction
  int bisection_steps = 0;
  bool below_range = false;  ///< the smallest grid value already fails the uniqueness test
};

struct SweepOptions {
  double eps_min = 1e-3;
  double eps_max = 1e-1;
  int points = 13;
  int n_starts = 8;
  std::uint64_t seed = 0;
  SolverOptions solver;
  int max_bisection = 20;
  double bracket_rtol = 1e-4;
};

/// Ascending geometric grid from lo to hi (both included).
inline std::vector<double> geometric_grid(double lo, double hi, int points) {
  detail::require(std::isfinite(lo) && lo > 0.0, "eps grid minimum must be positive");
  detail::require(std::isfinite(hi) && hi <= 1.0, "eps grid maximum must not exceed 1");
  detail::require(lo < hi, "eps grid needs min < max");
  detail::require(points >= 2, "eps grid needs at least two points");
  std::vector<double> g(static_cast<std::size_t>(points));
  const double ratio = std::log(hi / lo);
  for (int k = 0; k < points; ++k) g[static_cast<std::size_t>(k)] = lo * std::exp(ratio * k / (points - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

/// The per-eps pipeline: multistart, best extremal, distance to the constant
/// limit, tangent spectrum. Failures are recorded instead of thrown.
inline ScanRecord scan_point(const EnergyForms& forms, double eps, int n_starts, std::uint64_t seed,
                             const SolverOptions& opts, const std::vector<Vector>& warm = {}) {
  ScanRecord rec;
  rec.eps = eps;
  try {
    const MultistartResult ms = multistart_extremals(forms, eps, n_starts, seed, opts, warm);
    const ExtremalResult& best = ms.best();
    const double q = forms.params.q;
    const double cst = std::pow(forms.mesh->measure(), -1.0 / q);
    rec.S_scaled = best.S_scaled;
    rec.lambda_eps = best.lambda;
    rec.dist_const_q = forms.lq_norm((best.u.coeffs.array() - cst).matrix());
    rec.mu_min = linearized_spectrum(best.u.coeffs, eps, best.lambda, forms, opts.tol_inv).mu_min;
    rec.n_clusters = static_cast<int>(ms.clusters.size());
    rec.converged = best.converged;
    rec.u = best.u.coeffs;
  } catch (const std::exception& e) {
    rec.converged = false;
    rec.error = e.what();
  }
  return rec;
}

/// One record per grid value, ascending in eps. Grid points run concurrently;
/// each multistart is serial, so records do not depend on the thread count.
inline std::vector<ScanRecord> eps_sweep(const EnergyForms& forms, const SweepOptions& opts) {
  require_extremal_exponent(forms.params);
  const std::vector<double> grid = geometric_grid(opts.eps_min, opts.eps_max, opts.points);
  std::vector<ScanRecord> out(grid.size());
  SolverOptions inner = opts.solver;
  inner.threads = 1;
  parallel_for(grid.size(), opts.solver.threads,
               [&](std::size_t i) { out[i] = scan_point(forms, grid[i], opts.n_starts, opts.seed, inner); });
  return out;
}

namespace detail {

inline bool eigen_degenerate(const ScanRecord& r) { return r.mu_min <= 0.0; }
inline bool split(const ScanRecord& r) { return r.n_clusters >= 2; }
inline bool unique_evidence(const ScanRecord& r) { return r.mu_min > 0.0 && r.n_clusters == 1; }
inline bool loss_evidence(const ScanRecord& r) { return eigen_degenerate(r) || split(r); }

}  // namespace detail

/// Locates the first adjacent pair (lo, hi) with uniqueness evidence at lo
/// (mu_min > 0, one cluster) and its loss at hi (mu_min <= 0 or several
/// clusters); optionally bisects it, warm-starting from the bracket's extremals.
inline Eps0Estimate estimate_eps0(const std::vector<ScanRecord>& records, bool refine, const EnergyForms& forms,
                                  const SweepOptions& opts) {
  Eps0Estimate est;
  const FractionalParams& p = forms.params;

  const PoincareResult pc = poincare_constant(forms, opts.solver);
  est.c_used = pc.c;
  est.poincare_converged = pc.converged;
  est.eps0_theoretical = epsilon0_lower_bound(pc.c, p, forms.mesh->measure()).eps0_theoretical;
  if (p.q > 2.0) {
    const double c2 = mean_zero_spectrum(forms, opts.solver.tol_inv).mu_min;
    est.eps_constant_crossing = std::pow(c2 / (p.q - 2.0), 1.0 / (2.0 * p.s));
  }

  if (!records.empty() && detail::loss_evidence(records.front())) est.below_range = true;

  std::size_t hit = records.size();
  for (std::size_t i = 0; i + 1 < records.size(); ++i)
    if (detail::unique_evidence(records[i]) && detail::loss_evidence(records[i + 1])) {
      hit = i;
      break;
    }
  if (hit == records.size()) return est;

  ScanRecord lo = records[hit], hi = records[hit + 1];
  if (refine) {
    SolverOptions inner = opts.solver;
    while (est.bisection_steps < opts.max_bisection && (hi.eps - lo.eps) > opts.bracket_rtol * hi.eps) {
      std::vector<Vector> warm;
      if (lo.u.size() > 0) warm.push_back(lo.u);
      if (hi.u.size() > 0) warm.push_back(hi.u);
      const ScanRecord mid = scan_point(forms, 0.5 * (lo.eps + hi.eps), opts.n_starts, opts.seed, inner, warm);
      ++est.bisection_steps;
      if (detail::unique_evidence(mid))
        lo = mid;
      else if (detail::loss_evidence(mid))
        hi = mid;
      else
        break;  // failed point: keep the last valid bracket
    }
  }

  est.found = true;
  est.eps_lo = lo.eps;
  est.eps_hi = hi.eps;
  est.eps0_numerical = 0.5 * (lo.eps + hi.eps);
  est.detection_mode = detail::eigen_degenerate(hi) ? DetectionMode::eigenvalue_crossing : DetectionMode::multistart_split;
  if (est.detection_mode == DetectionMode::eigenvalue_crossing && std::isfinite(est.eps_constant_crossing) &&
      lo.dist_const_q < 0.1 && hi.dist_const_q < 0.1)
    est.prediction_consistent =
        est.eps_constant_crossing >= 0.5 * est.eps_lo && est.eps_constant_crossing <= 2.0 * est.eps_hi;
  return est;
}

}  // namespace fraclap
