#pragma once

// Reference computations that avoid the solver code paths they check.

#include <cmath>
#include <functional>
#include <numbers>

#include "fraclap/assembly.hpp"
#include "fraclap/mesh.hpp"

namespace fraclap::verify {

/// u(x) = x on (0,1): u^T K u = 1/2 [u]^2 = 1/(2 (1-s)(3-2s)).
inline double linear_seminorm_exact(double s) { return 0.5 / ((1.0 - s) * (3.0 - 2.0 * s)); }

inline Vector interpolate(const Mesh& m, const std::function<double(const Point&)>& f) {
  Vector u(static_cast<Eigen::Index>(m.num_nodes()));
  for (std::size_t i = 0; i < m.num_nodes(); ++i) u[static_cast<Eigen::Index>(i)] = f(m.node(i));
  return u;
}

/// int |v|^4 over a 1D P1 mesh, exact per element: h (a^4 + a^3 b + a^2 b^2 + a b^3 + b^4) / 5.
inline double l4_power_1d(const Mesh& m, const Vector& v) {
  double acc = 0.0;
  for (std::size_t e = 0; e < m.num_elements(); ++e) {
    const auto el = m.element(e);
    const double a = v[el[0]], b = v[el[1]];
    acc += m.element_measure(e) * (a * a * a * a + a * a * a * b + a * a * b * b + a * b * b * b + b * b * b * b) / 5.0;
  }
  return acc;
}

struct SphereSearch {
  double S = 0.0;
  double theta = 0.0, phi = 0.0;
  Vector u;
};

/// Exhaustive search for S(eps Omega) on a 3-node interval mesh with q = 4:
/// an angle grid over directions in R^3, then compass refinement of the best
/// angle pair. The quotient is degree-0 homogeneous, so directions suffice.
inline SphereSearch sphere_search_3node(const Mesh& m, const Matrix& K, const Matrix& M, double s, double eps,
                                        int grid = 720) {
  const double kscale = std::pow(eps, -2.0 * s);
  const double vf = std::pow(eps, 1.0 - 2.0 / 4.0);
  auto dir = [](double th, double ph) {
    Vector v(3);
    v << std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th);
    return v;
  };
  auto quotient = [&](double th, double ph) {
    const Vector v = dir(th, ph);
    const double num = kscale * v.dot(K * v) + v.dot(M * v);
    return vf * num / std::sqrt(l4_power_1d(m, v));
  };

  SphereSearch best;
  best.S = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i) {
    const double th = std::numbers::pi * (i + 0.5) / grid;
    for (int j = 0; j < grid; ++j) {
      const double ph = 2.0 * std::numbers::pi * j / grid;
      const double val = quotient(th, ph);
      if (val < best.S) best = {val, th, ph, {}};
    }
  }
  double step = std::numbers::pi / grid;
  while (step > 1e-12) {
    bool moved = false;
    for (const auto& [dt, dp] : {std::pair{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}) {
      const double th = best.theta + dt * step, ph = best.phi + dp * step;
      const double val = quotient(th, ph);
      if (val < best.S) {
        best = {val, th, ph, {}};
        moved = true;
      }
    }
    if (!moved) step *= 0.5;
  }
  best.u = dir(best.theta, best.phi);
  best.u /= std::pow(l4_power_1d(m, best.u), 0.25);
  return best;
}

/// F(u) = K u + eps^{2s} (M u - lambda g(u)), with K u as a plain product.
inline Vector residual_map(const EnergyForms& f, const Vector& u, double eps, double lambda) {
  const double e2s = std::pow(eps, 2.0 * f.params.s);
  return f.K * u + e2s * (f.M * u - lambda * lq_gradient(f.table, u, f.params.q));
}

/// Central difference (F(u + t v) - F(u - t v)) / (2t).
inline Vector residual_directional_fd(const EnergyForms& f, const Vector& u, const Vector& v, double eps, double lambda,
                                      double t = 1e-5) {
  return (residual_map(f, u + t * v, eps, lambda) - residual_map(f, u - t * v, eps, lambda)) / (2.0 * t);
}

/// Quotient of v on the physically contracted mesh, assembled there directly.
inline double direct_contracted_quotient(const EnergyForms& scaled, const Vector& v) {
  const double nrm = lq_norm(scaled.table, v, scaled.params.q);
  return (v.dot(scaled.K * v) + v.dot(scaled.M * v)) / (nrm * nrm);
}

}  // namespace fraclap::verify
