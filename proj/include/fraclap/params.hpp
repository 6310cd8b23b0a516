#pragma once

#include <cmath>
#include <limits>
#include <sstream>

#include "fraclap/error.hpp"

namespace fraclap {

/// Critical Sobolev exponent 2n/(n-2s), or +inf when 2s >= n.
inline double critical_exponent(double s, int n) {
  if (2.0 * s < n) return 2.0 * n / (n - 2.0 * s);
  return std::numeric_limits<double>::infinity();
}

/// Fractional order s, Lebesgue exponent q and space dimension n.
///
/// Construction through make() checks 0 < s < 1, n in {1,2} and
/// 1 <= q < 2*_s. The stricter exponent range used by the extremal
/// solver (q > 1, q != 2) is enforced separately by
/// require_extremal_exponent(), since the Poincare constant is also
/// meaningful for q = 1 and q = 2.
struct FractionalParams {
  double s = 0.5;
  double q = 4.0;
  int n = 1;

  static FractionalParams make(double s, double q, int n) {
    detail::require(n == 1 || n == 2, "dimension must be 1 or 2");
    detail::require(std::isfinite(s) && s > 0.0 && s < 1.0, "fractional order s must lie in (0,1)");
    detail::require(std::isfinite(q) && q >= 1.0, "exponent q must satisfy q >= 1");
    const double crit = critical_exponent(s, n);
    if (!(q < crit)) {
      std::ostringstream os;
      os << "exponent q = " << q << " is not subcritical: need q < 2*_s = " << crit;
      throw ValidationError(os.str());
    }
    return FractionalParams{s, q, n};
  }

  double critical() const { return critical_exponent(s, n); }
};

/// Exponent range for the semilinear problem: 1 < q < 2*_s and q != 2.
inline void require_extremal_exponent(const FractionalParams& p) {
  detail::require(p.q > 1.0, "exponent q must satisfy q > 1");
  detail::require(p.q != 2.0, "q = 2 is the linear (eigenvalue) case and is excluded: require q != 2");
}

}  // namespace fraclap
