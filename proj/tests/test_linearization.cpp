#include <gtest/gtest.h>

#include <cmath>

#include "fraclap/linearization.hpp"
#include "fraclap/verify/oracles.hpp"
#include "helpers.hpp"

using namespace fraclap;
using testing_util::interval;

namespace {

double max_abs(const Matrix& A) { return A.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Jacobian, ConstantStateIdentity) {
  for (double L : {1.0, 2.0})
    for (double q : {1.5, 3.0, 4.0}) {
      const auto f = testing_util::forms(interval(0, L, 24), 0.5, q);
      const Vector u = Vector::Constant(25, std::pow(L, -1.0 / q));
      for (double eps : {0.01, 0.3}) {
        const double e2s = std::pow(eps, 1.0);
        const Matrix J = assemble_jacobian(u, eps, std::pow(L, 1.0 - 2.0 / q), f);
        const Matrix expect = f.K + e2s * (2.0 - q) * f.M;
        EXPECT_LE(max_abs(J - expect), 1e-12 * std::max(1.0, max_abs(expect)));
      }
    }
}

TEST(Jacobian, ZeroEpsIsGagliardoMatrix) {
  const auto f = testing_util::forms(interval(0, 1, 12), 0.5, 4.0);
  const Matrix J = assemble_jacobian(Vector::Ones(13), 0.0, 1.0, f);
  EXPECT_TRUE((J.array() == f.K.array()).all());
  EXPECT_THROW(assemble_jacobian(Vector::Ones(13), -0.1, 1.0, f), ValidationError);
}

TEST(Jacobian, SymmetricAndMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (double q : {1.5, 4.0}) {
    const auto f = testing_util::forms(interval(0, 1, 40), 0.5, q);
    for (int k = 0; k < 10; ++k) {
      const double eps = k % 2 == 0 ? 0.5 : 1.0;
      Vector u = testing_util::random_vector(41, rng, 1.0, 0.1);
      u /= f.lq_norm(u);
      const Vector v = testing_util::random_vector(41, rng);
      const double lambda = scaled_quotient(u, eps, f);
      const Matrix J = assemble_jacobian(u, eps, lambda, f);
      EXPECT_LE(max_abs(J - J.transpose()), 1e-12 * max_abs(J));
      const Vector Jv = J * v;
      const Vector fd = verify::residual_directional_fd(f, u, v, eps, lambda, 1e-5);
      EXPECT_LE((fd - Jv).norm() / Jv.norm(), 1e-6) << "q = " << q;
    }
  }
}

TEST(TangentBasis, ConstantGivesMeanZeroOrthonormal) {
  const auto f = testing_util::forms(interval(0, 1, 30), 0.5, 3.0);
  const Matrix B = tangent_basis(Vector::Ones(31), f);
  ASSERT_EQ(B.cols(), 30);
  ASSERT_EQ(B.rows(), 31);
  EXPECT_LE((f.mass_ones.transpose() * B).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(max_abs(B.transpose() * f.M * B - Matrix::Identity(30, 30)), 1e-12);
}

TEST(TangentBasis, WeightedConstraintAtGeneralState) {
  std::mt19937_64 rng(3);
  const auto f = testing_util::forms(interval(0, 1, 20), 0.5, 4.0);
  const Vector u = testing_util::random_vector(21, rng, 1.0, 0.3);
  const Matrix B = tangent_basis(u, f);
  const Vector g = f.lq_gradient(u);
  EXPECT_LE((g.transpose() * B).cwiseAbs().maxCoeff(), 1e-12 * g.norm());
  EXPECT_LE(max_abs(B.transpose() * f.M * B - Matrix::Identity(20, 20)), 1e-12);
  EXPECT_THROW(tangent_basis(Vector::Zero(21), f), ValidationError);
}

TEST(TangentSpectrum, ConstantStatePrediction) {
  const auto mesh = interval(0, 1, 128);
  const double c2 = mean_zero_spectrum(testing_util::forms(mesh, 0.5, 2.0)).mu_min;
  for (double q : {1.5, 3.0, 4.0}) {
    const auto f = testing_util::forms(mesh, 0.5, q);
    for (double eps : {0.01, 0.1, 0.5}) {
      const TangentSpectrum t = linearized_spectrum(Vector::Ones(129), eps, 1.0, f);
      EXPECT_NEAR(t.mu_min, c2 - std::pow(eps, 1.0) * (q - 2.0), 1e-8);
      EXPECT_TRUE(t.invertible);
      EXPECT_LE(t.residual, 1e-8);
      EXPECT_LE(std::abs(f.mass_ones.dot(t.eigvec.coeffs)), 1e-10);
      EXPECT_NEAR(t.eigvec.coeffs.dot(f.M * t.eigvec.coeffs), 1.0, 1e-10);
    }
  }
}

TEST(TangentSpectrum, ZeroEpsGivesPoincareEigenvalue) {
  const auto f = testing_util::forms(interval(0, 1, 64), 0.5, 4.0);
  const double c2 = mean_zero_spectrum(f).mu_min;
  const TangentSpectrum t = linearized_spectrum(Vector::Ones(65), 0.0, 1.0, f);
  EXPECT_NEAR(t.mu_min, c2, 1e-10);
  EXPECT_GT(c2, 0.0);
  EXPECT_TRUE(t.invertible);
}

TEST(TangentSpectrum, CrossingOfConstantBranch) {
  // c2 scales like L^{-2s} on (0,L); on (0,8) the crossing sits inside (0,1).
  const auto f = testing_util::forms(interval(0, 8, 64), 0.5, 4.0);
  const double c2 = mean_zero_spectrum(f).mu_min;
  const double eps_c = c2 / 2.0;
  ASSERT_LT(eps_c, 1.0);
  const Vector u = Vector::Constant(65, std::pow(8.0, -0.25));
  const double lambda = std::pow(8.0, 0.5);
  EXPECT_GT(linearized_spectrum(u, 0.9 * eps_c, lambda, f).mu_min, 0.0);
  EXPECT_LT(linearized_spectrum(u, 1.1 * eps_c, lambda, f).mu_min, 0.0);
  EXPECT_FALSE(linearized_spectrum(u, eps_c, lambda, f).invertible);
}

TEST(TangentSpectrum, SmallEpsInvertibleForSupercriticalQ) {
  const auto f = testing_util::forms(interval(0, 1, 64), 0.75, 4.0);
  const double c2 = mean_zero_spectrum(f).mu_min;
  const double eps = 0.5 * std::pow(c2 / 2.0, 1.0 / 1.5);
  EXPECT_TRUE(linearized_spectrum(Vector::Ones(65), std::min(eps, 1.0), 1.0, f).invertible);
}
