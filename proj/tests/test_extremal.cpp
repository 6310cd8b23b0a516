#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fraclap/extremal.hpp"
#include "fraclap/verify/oracles.hpp"
#include "helpers.hpp"

using namespace fraclap;
using testing_util::interval;

TEST(Quotient, ConstantEqualsMeasureBound) {
  for (double L : {1.0, 2.5}) {
    const auto f = testing_util::forms(interval(0, L, 16), 0.5, 4.0);
    for (double c : {1.0, -3.0, 0.2}) {
      const Vector u = Vector::Constant(17, c);
      EXPECT_NEAR(rayleigh_quotient(u, f), std::pow(L, 1.0 - 2.0 / 4.0), 1e-14);
    }
  }
}

TEST(Quotient, DegreeZeroHomogeneous) {
  std::mt19937_64 rng(1);
  const auto f = testing_util::forms(interval(0, 1, 20), 0.5, 3.0);
  for (int k = 0; k < 5; ++k) {
    const Vector u = testing_util::random_vector(21, rng);
    const double base = rayleigh_quotient(u, f);
    for (double t : {-3.0, 0.5, 10.0}) EXPECT_NEAR(rayleigh_quotient(Vector(t * u), f) / base, 1.0, 1e-12);
  }
}

TEST(Quotient, ZeroFunctionRejected) {
  const auto f = testing_util::forms(interval(0, 1, 8), 0.5, 3.0);
  EXPECT_THROW(rayleigh_quotient(Vector::Zero(9), f), ValidationError);
  EXPECT_THROW(scaled_quotient(Vector::Zero(9), 0.5, f), ValidationError);
  EXPECT_THROW(scaled_quotient(Vector::Ones(9), 0.0, f), ValidationError);
  EXPECT_THROW(scaled_quotient(Vector::Ones(9), -1.0, f), ValidationError);
}

TEST(ScaledQuotient, ConstantAndIdentity) {
  std::mt19937_64 rng(2);
  const double L = 2.0, q = 4.0;
  const auto f = testing_util::forms(interval(0, L, 16), 0.75, q);
  for (double eps : {1e-3, 0.1, 0.7}) {
    const double expect = std::pow(eps * L, 1.0 - 2.0 / q);
    EXPECT_NEAR(scaled_quotient(Vector::Ones(17), eps, f) / expect, 1.0, 1e-14);
  }
  const Vector u = testing_util::random_vector(17, rng);
  EXPECT_NEAR(scaled_quotient(u, 1.0, f), rayleigh_quotient(u, f), 1e-12 * rayleigh_quotient(u, f));
}

TEST(ScaledQuotient, MatchesContractedAssembly) {
  std::mt19937_64 rng(4);
  const auto mesh = interval(0, 1, 32);
  const auto ref = testing_util::forms(mesh, 0.5, 4.0);
  const auto scaled = testing_util::forms(std::make_shared<const Mesh>(scale_mesh(*mesh, 0.25)), 0.5, 4.0);
  for (int k = 0; k < 10; ++k) {
    const Vector u = testing_util::random_vector(33, rng);
    EXPECT_NEAR(scaled_quotient(u, 0.25, ref) / verify::direct_contracted_quotient(scaled, u), 1.0, 1e-10);
    EXPECT_NEAR(scaled_quotient(u, 0.25, ref) / rayleigh_quotient(u, scaled), 1.0, 1e-10);
  }
}

TEST(Minimize, SmallEpsLimit) {
  const auto f = testing_util::forms(interval(0, 1, 256), 0.5, 4.0);
  SolverOptions o;
  o.record_history = true;
  const ExtremalResult r = minimize_rayleigh(f, 1e-3, random_start(f, 3, 0), o);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.S_scaled, 1.0, 2e-2);
  EXPECT_LE(r.S_scaled, 1.0 + 1e-9);
  EXPECT_LE(r.residual_norm, o.tol);
  EXPECT_NEAR(f.lq_norm(r.u.coeffs), 1.0, 1e-10);
  EXPECT_GE(f.mass_ones.dot(r.u.coeffs), 0.0);
  EXPECT_EQ(r.lambda, r.S_scaled);
  EXPECT_NEAR(r.S / (std::pow(1e-3, 0.5) * r.S_scaled), 1.0, 1e-14);
  EXPECT_NEAR(scaled_quotient(r.u, 1e-3, f) / r.S, 1.0, 1e-12);
  EXPECT_LE(weak_residual(r.u, 1e-3, r.lambda, f), o.tol);
  ASSERT_FALSE(r.history.empty());
  for (std::size_t i = 1; i < r.history.size(); ++i)
    EXPECT_LE(r.history[i], r.history[i - 1] * (1.0 + 16 * std::numeric_limits<double>::epsilon()));
}

TEST(Minimize, BelowConstantBoundOnLongInterval) {
  // On (0,8) the constant loses minimality near eps = 0.37.
  const auto f = testing_util::forms(interval(0, 8, 64), 0.5, 4.0);
  const double bound = std::pow(8.0, 0.5);
  for (double eps : {0.05, 0.5, 1.0}) {
    const ExtremalResult r = minimize_rayleigh(f, eps, random_start(f, 9, 1));
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.S_scaled, bound * (1.0 + 1e-9));
    EXPECT_NEAR(f.lq_norm(r.u.coeffs), 1.0, 1e-10);
    EXPECT_LE(weak_residual(r.u, eps, r.lambda, f), 1e-9);
  }
  const ExtremalResult far = minimize_rayleigh(f, 1.0, random_start(f, 9, 1));
  EXPECT_LT(far.S_scaled, bound * (1.0 - 1e-3));
}

TEST(Minimize, SubquadraticExponent) {
  const auto f = testing_util::forms(interval(0, 1, 64), 0.5, 1.5);
  const ExtremalResult r = minimize_rayleigh(f, 0.1, random_start(f, 5, 0));
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.S_scaled, 1.0 + 1e-9);
}

TEST(Minimize, NonConvergenceIsFlagged) {
  const auto f = testing_util::forms(interval(0, 1, 32), 0.5, 4.0);
  SolverOptions o;
  o.max_iter = 1;
  const ExtremalResult r = minimize_rayleigh(f, 1e-3, random_start(f, 0, 0), o);
  EXPECT_FALSE(r.converged);
  EXPECT_GT(r.residual_norm, o.tol);
}

TEST(Minimize, RejectsBadInput) {
  const auto f2 = testing_util::forms(interval(0, 1, 8), 0.5, 2.0);
  EXPECT_THROW(minimize_rayleigh(f2, 0.1, Vector::Ones(9)), ValidationError);
  const auto f = testing_util::forms(interval(0, 1, 8), 0.5, 4.0);
  EXPECT_THROW(minimize_rayleigh(f, 0.1, Vector::Zero(9)), ValidationError);
  EXPECT_THROW(minimize_rayleigh(f, 0.0, Vector::Ones(9)), ValidationError);
  EXPECT_THROW(minimize_rayleigh(f, 0.1, Vector::Ones(5)), ValidationError);
}

TEST(Minimize, ThreeNodeSphereSearch) {
  const auto mesh = interval(0, 1, 2);
  const auto f = testing_util::forms(mesh, 0.5, 4.0);
  const MultistartResult ms = multistart_extremals(f, 0.5, 8, 0);
  const verify::SphereSearch oracle = verify::sphere_search_3node(*mesh, f.K, f.M, 0.5, 0.5);
  EXPECT_TRUE(ms.best().converged);
  EXPECT_NEAR(ms.best().S, oracle.S, 1e-4);
}

TEST(WeakResidual, ConstantSolvesExactly) {
  for (double L : {1.0, 3.0})
    for (double q : {1.5, 3.0, 4.0}) {
      const auto f = testing_util::forms(interval(0, L, 32), 0.5, q);
      const Vector c = Vector::Constant(33, std::pow(L, -1.0 / q));
      for (double eps : {1e-3, 0.1, 1.0}) EXPECT_LE(weak_residual(c, eps, std::pow(L, 1.0 - 2.0 / q), f), 1e-10);
    }
}

TEST(WeakResidual, GenericPointIsNotCritical) {
  std::mt19937_64 rng(6);
  const auto f = testing_util::forms(interval(0, 1, 16), 0.5, 4.0);
  const Vector u = testing_util::random_vector(17, rng);
  EXPECT_GT(weak_residual(u, 0.5, scaled_quotient(u, 0.5, f), f), 1e-3);
}

TEST(Multistart, UniqueNearConstantAtSmallEps) {
  const auto f = testing_util::forms(interval(0, 1, 64), 0.5, 4.0);
  const MultistartResult a = multistart_extremals(f, 1e-3, 8, 1);
  const MultistartResult b = multistart_extremals(f, 1e-3, 8, 2);
  ASSERT_EQ(a.clusters.size(), 1u);
  EXPECT_EQ(b.clusters.size(), a.clusters.size());
  EXPECT_NEAR(a.best().S, b.best().S, 1e-9);
  EXPECT_LE(f.lq_norm((a.best().u.coeffs.array() - 1.0).matrix()), 0.05);
  EXPECT_EQ(a.runs.size(), 9u);
}

TEST(Multistart, SameSeedIsBitwiseReproducible) {
  const auto f = testing_util::forms(interval(0, 4, 48), 0.5, 4.0);
  SolverOptions one, many;
  one.threads = 1;
  many.threads = 3;
  const MultistartResult a = multistart_extremals(f, 0.6, 4, 42, one);
  const MultistartResult b = multistart_extremals(f, 0.6, 4, 42, many);
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_EQ(a.runs[i].S_scaled, b.runs[i].S_scaled);
    EXPECT_TRUE((a.runs[i].u.coeffs.array() == b.runs[i].u.coeffs.array()).all());
  }
}

TEST(Multistart, MirrorExtremalsSplitAboveThreshold) {
  // Well above the constant-state crossing on (0,8): reflected minimizers.
  const auto f = testing_util::forms(interval(0, 8, 64), 0.5, 4.0);
  const MultistartResult ms = multistart_extremals(f, 1.0, 8, 0);
  EXPECT_GE(ms.clusters.size(), 2u);
  for (const auto& c : ms.clusters) EXPECT_NEAR(c.S_scaled / ms.best().S_scaled, 1.0, 1e-6);
}

TEST(Multistart, RequiresTwoStarts) {
  const auto f = testing_util::forms(interval(0, 1, 8), 0.5, 4.0);
  EXPECT_THROW(multistart_extremals(f, 0.1, 1, 0), ValidationError);
}
