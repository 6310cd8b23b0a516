#pragma once

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "fraclap/assembly.hpp"
#include "fraclap/extremal.hpp"

namespace fraclap {

/// Smallest eigenpair of the Jacobian restricted to the tangent space of the L^q sphere.
struct TangentSpectrum {
  double mu_min = 0.0;
  DiscreteFunction eigvec;  ///< M-normalized, satisfies the tangent constraint
  bool invertible = false;
  double residual = 0.0;    ///< ||B^T (J v - mu M v)||, B the tangent basis
};

/// J = K + eps^{2s} M - eps^{2s} lambda (q-1) W(u), the derivative of
/// r(u) = K u + eps^{2s} M u - eps^{2s} lambda g(u) at fixed lambda.
inline Matrix assemble_jacobian(const Vector& u, double eps, double lambda, const EnergyForms& forms) {
  detail::require(std::isfinite(eps) && eps >= 0.0, "contraction parameter must be nonnegative");
  const auto& p = forms.params;
  if (eps == 0.0) return forms.K;
  const double e2s = std::pow(eps, 2.0 * p.s);
  Matrix J = forms.K + e2s * forms.M - (e2s * lambda * (p.q - 1.0)) * lq_weight_matrix(forms.table, u, p.q);
  detail::require_finite(J, "Jacobian");
  return J;
}

inline Matrix assemble_jacobian(const DiscreteFunction& u, double eps, double lambda, const EnergyForms& forms) {
  return assemble_jacobian(u.coeffs, eps, lambda, forms);
}

/// M-orthonormal basis (columns) of {v : g(u)^T v = 0}, g(u)_i = int |u|^{q-2} u phi_i.
/// At a constant u this is the mean-zero subspace.
inline Matrix tangent_basis(const Vector& u, const EnergyForms& forms, double q) {
  const Vector c = q == 2.0 ? Vector(forms.M * u) : lq_gradient(forms.table, u, q);
  const double cn = c.norm();
  detail::require(std::isfinite(cn) && cn > 0.0, "tangent constraint functional vanishes identically");
  const Eigen::Index n = c.size();
  Eigen::HouseholderQR<Matrix> qr(c / cn);
  const Matrix Q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix Z = Q.rightCols(n - 1);
  const Matrix gram = Z.transpose() * forms.M * Z;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalError("tangent Gram matrix is not positive definite");
  // B = Z L^{-T}  =>  B^T M B = I
  return llt.matrixL().solve(Z.transpose()).transpose();
}

inline Matrix tangent_basis(const Vector& u, const EnergyForms& forms) { return tangent_basis(u, forms, forms.params.q); }

/// Smallest mu of (B^T J B) y = mu (B^T M B) y = mu y.
inline TangentSpectrum tangent_smallest_eig(const Matrix& J, const EnergyForms& forms, const Matrix& basis,
                                            double tol_inv = 1e-7) {
  detail::require(basis.cols() > 0, "tangent basis is empty");
  Matrix P = basis.transpose() * J * basis;
  P = 0.5 * (P + P.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(P);
  if (es.info() != Eigen::Success) {
    std::ostringstream os;
    os << "tangent eigensolve failed (projected size " << P.rows() << ", max |entry| " << P.cwiseAbs().maxCoeff() << ")";
    throw NumericalError(os.str());
  }
  TangentSpectrum out;
  out.mu_min = es.eigenvalues()[0];
  const Vector y = es.eigenvectors().col(0);
  out.residual = (P * y - out.mu_min * y).norm();
  out.eigvec = forms.function(basis * y);
  out.invertible = std::abs(out.mu_min) > tol_inv;
  return out;
}

/// Smallest mean-zero generalized eigenvalue of (K, M): the discrete
/// Poincare constant for q = 2.
inline TangentSpectrum mean_zero_spectrum(const EnergyForms& forms, double tol_inv = 1e-7) {
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(forms.size()));
  return tangent_smallest_eig(forms.K, forms, tangent_basis(ones, forms, 2.0), tol_inv);
}

/// Tangent spectrum of the linearization at an extremal with multiplier lambda.
inline TangentSpectrum linearized_spectrum(const Vector& u, double eps, double lambda, const EnergyForms& forms,
                                           double tol_inv = 1e-7) {
  return tangent_smallest_eig(assemble_jacobian(u, eps, lambda, forms), forms, tangent_basis(u, forms), tol_inv);
}

}  // namespace fraclap
