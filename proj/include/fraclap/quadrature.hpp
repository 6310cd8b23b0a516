#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "fraclap/error.hpp"

namespace fraclap::quad {

/// Points and weights of a rule on [0,1].
struct Rule1D {
  std::vector<double> x;
  std::vector<double> w;
  std::size_t size() const { return x.size(); }
};

/// Gauss-Legendre rule with `order` points mapped to [0,1]; exact for
/// polynomials of degree 2*order-1.
inline Rule1D gauss_legendre(int order) {
  detail::require(order >= 1 && order <= 64, "Gauss-Legendre order must be in [1,64]");
  Rule1D r;
  r.x.resize(order);
  r.w.resize(order);
  const int m = (order + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < order; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      dp = order * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // recompute the derivative at the converged root
    double p0 = 1.0, p1 = 0.0;
    for (int j = 0; j < order; ++j) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
    }
    dp = order * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    r.x[i] = 0.5 * (1.0 - z);
    r.x[order - 1 - i] = 0.5 * (1.0 + z);
    r.w[i] = r.w[order - 1 - i] = 0.5 * w;
  }
  return r;
}

/// Composite Gauss-Legendre: `pieces` equal subintervals of [0,1].
inline Rule1D composite_gauss(int order, int pieces) {
  detail::require(pieces >= 1, "composite rule needs at least one piece");
  const Rule1D base = gauss_legendre(order);
  Rule1D r;
  for (int p = 0; p < pieces; ++p)
    for (std::size_t k = 0; k < base.size(); ++k) {
      r.x.push_back((p + base.x[k]) / pieces);
      r.w.push_back(base.w[k] / pieces);
    }
  return r;
}

/// Rule on the reference triangle {(0,0),(1,0),(0,1)}; weights sum to its area 1/2.
struct RuleTri {
  std::vector<std::array<double, 2>> x;
  std::vector<double> w;
  std::size_t size() const { return x.size(); }
};

/// Radon's 7-point rule, exact for polynomials of degree 5.
inline RuleTri triangle_degree5() {
  const double r15 = std::sqrt(15.0);
  const double a1 = (6.0 - r15) / 21.0, b1 = (9.0 + 2.0 * r15) / 21.0;
  const double a2 = (6.0 + r15) / 21.0, b2 = (9.0 - 2.0 * r15) / 21.0;
  const double w0 = 9.0 / 80.0;
  const double w1 = (155.0 - r15) / 2400.0;
  const double w2 = (155.0 + r15) / 2400.0;
  RuleTri r;
  r.x = {{1.0 / 3.0, 1.0 / 3.0}, {a1, a1}, {b1, a1}, {a1, b1}, {a2, a2}, {b2, a2}, {a2, b2}};
  r.w = {w0, w1, w1, w1, w2, w2, w2};
  return r;
}

/// Collapsed (Duffy) tensor Gauss rule on the reference triangle, order^2 points.
inline RuleTri triangle_collapsed(int order) {
  const Rule1D g = gauss_legendre(order);
  RuleTri r;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double a = g.x[i];
      r.x.push_back({a * (1.0 - g.x[j]), a * g.x[j]});
      r.w.push_back(g.w[i] * g.w[j] * a);
    }
  return r;
}

}  // namespace fraclap::quad
