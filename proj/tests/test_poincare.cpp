#include <gtest/gtest.h>

#include <cmath>

#include "fraclap/linearization.hpp"
#include "fraclap/poincare.hpp"
#include "helpers.hpp"

using namespace fraclap;
using testing_util::interval;

TEST(Poincare, MinimizerInvariants) {
  for (double q : {1.5, 3.0, 4.0}) {
    const auto f = testing_util::forms(interval(0, 1, 64), 0.5, q);
    const PoincareResult r = poincare_constant(f);
    ASSERT_TRUE(r.converged) << "q = " << q;
    EXPECT_GT(r.c, 0.0);
    EXPECT_LE(std::abs(f.mass_ones.dot(r.minimizer.coeffs)), 1e-10);
    EXPECT_NEAR(f.lq_norm(r.minimizer.coeffs), 1.0, 1e-10);
    EXPECT_NEAR(f.seminorm_energy(r.minimizer.coeffs) / r.c, 1.0, 1e-12);
  }
}

TEST(Poincare, InequalityOnRandomMeanZeroSamples) {
  std::mt19937_64 rng(99);
  for (double q : {1.5, 4.0}) {
    const auto f = testing_util::forms(interval(0, 1, 48), 0.5, q);
    const double c = poincare_constant(f).c;
    for (int k = 0; k < 100; ++k) {
      Vector w = testing_util::random_vector(49, rng);
      w.array() -= f.mass_ones.dot(w) / f.mass_ones.sum();
      const double n = f.lq_norm(w);
      EXPECT_LE(c * n * n, w.dot(f.K * w) + 1e-12);
    }
  }
}

TEST(Poincare, QuadraticCaseIsMeanZeroEigenvalue) {
  const auto f = testing_util::forms(interval(0, 1, 64), 0.5, 2.0);
  const PoincareResult r = poincare_constant(f);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.c, mean_zero_spectrum(f).mu_min, 1e-12);
}

TEST(Poincare, MeshRefinementAgreement) {
  const double c128 = poincare_constant(testing_util::forms(interval(0, 1, 128), 0.5, 4.0)).c;
  const double c256 = poincare_constant(testing_util::forms(interval(0, 1, 256), 0.5, 4.0)).c;
  EXPECT_NEAR(c128 / c256, 1.0, 1e-2);
}

TEST(Poincare, TwoDimensional) {
  const auto f = testing_util::forms(testing_util::rect(1, 1, 6, 6), 0.5, 3.0);
  const PoincareResult r = poincare_constant(f);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(std::abs(f.mass_ones.dot(r.minimizer.coeffs)), 1e-10);
}

TEST(Poincare, RejectsUnitExponent) {
  const auto f = testing_util::forms(interval(0, 1, 16), 0.5, 1.0);
  EXPECT_THROW(poincare_constant(f), ValidationError);
}

TEST(EpsilonBound, PlugInValues) {
  const FractionalParams p1{0.5, 3.0, 1}, p2{0.5, 5.0, 1}, p3{0.25, 4.0, 1};
  EXPECT_NEAR(epsilon0_lower_bound(2.0, p1, 1.0).eps0_theoretical, 1.0, 1e-15);
  EXPECT_NEAR(epsilon0_lower_bound(0.5, p2, 1.0).eps0_theoretical, 0.125, 1e-15);
  EXPECT_NEAR(epsilon0_lower_bound(1.0, p3, 2.0).eps0_theoretical, 1.0 / 18.0, 1e-12);
  const EpsilonBound b = epsilon0_lower_bound(2.0, p1, 1.0);
  EXPECT_EQ(b.c_used, 2.0);
  EXPECT_EQ(b.q, 3.0);
}

TEST(EpsilonBound, RejectsInvalid) {
  const FractionalParams p{0.5, 3.0, 1}, unit{0.5, 1.0, 1};
  EXPECT_THROW(epsilon0_lower_bound(0.0, p, 1.0), ValidationError);
  EXPECT_THROW(epsilon0_lower_bound(-1.0, p, 1.0), ValidationError);
  EXPECT_THROW(epsilon0_lower_bound(1.0, unit, 1.0), ValidationError);
}

TEST(EpsilonBound, MonotoneInCAntitoneInQ) {
  for (double s : {0.25, 0.5, 0.75}) {
    double prev_c = 0.0;
    for (double c = 0.1; c < 10.0; c *= 1.7) {
      const double b = epsilon0_lower_bound(c, FractionalParams{s, 3.0, 1}, 1.5).eps0_theoretical;
      EXPECT_GT(b, prev_c);
      prev_c = b;
    }
    for (double c : {0.5, 2.0})
      for (double measure : {1.0, 1.5}) {
      double prev_q = std::numeric_limits<double>::infinity();
      for (double q = 1.2; q < 8.0; q += 0.4) {
        const double b = epsilon0_lower_bound(c, FractionalParams{s, q, 1}, measure).eps0_theoretical;
        EXPECT_LT(b, prev_q);
        prev_q = b;
      }
    }
  }
}
