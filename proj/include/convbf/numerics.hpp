// Complex Hermitian linear algebra: loaded Cholesky solves, principal
// eigenvectors and whitened generalized eigenvectors.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>
#include <string>

#include "convbf/error.hpp"

namespace convbf {

// Default relative diagonal loading applied wherever a covariance is inverted.
inline constexpr double kDefaultLoading = 1e-8;

// Conjugate-symmetric matrix with finite entries. Input is symmetrized as
// (A + A^H) / 2 after checking it is Hermitian within 1e-12 relative.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;
  explicit HermitianMatrix(const Eigen::MatrixXcd& a) {
    if (a.rows() != a.cols()) throw SizeError("Hermitian matrix must be square");
    if (!a.allFinite()) throw Error("Hermitian matrix has non-finite entries");
    const double scale = a.norm();
    const double asym = (a - a.adjoint()).norm();
    if (asym > 1e-12 * scale)
      throw Error("matrix is not Hermitian (relative asymmetry " +
                  std::to_string(scale > 0 ? asym / scale : asym) + ")");
    entries_ = 0.5 * (a + a.adjoint());
  }

  static HermitianMatrix identity(Eigen::Index d) {
    return HermitianMatrix(Eigen::MatrixXcd::Identity(d, d));
  }

  Eigen::Index dim() const { return entries_.rows(); }
  const Eigen::MatrixXcd& matrix() const { return entries_; }
  double trace() const { return entries_.diagonal().real().sum(); }

 private:
  Eigen::MatrixXcd entries_;
};

// Cholesky factorization of A + loading * (tr(A) / D) * I.
class LoadedCholesky {
 public:
  LoadedCholesky(const HermitianMatrix& a, double loading) {
    if (loading < 0.0) throw UsageError("diagonal loading must be non-negative");
    const Eigen::Index d = a.dim();
    Eigen::MatrixXcd loaded = a.matrix();
    if (d > 0) loaded.diagonal().array() += loading * a.trace() / static_cast<double>(d);
    llt_.compute(loaded);
    const double diag_min = d > 0 ? loaded.diagonal().real().minCoeff() : 0.0;
    if (llt_.info() != Eigen::Success || !(diag_min > 0.0)) {
      throw SingularMatrixError("Cholesky factorization failed after diagonal loading",
                                std::numeric_limits<double>::infinity());
    }
    const double rc = llt_.rcond();
    condition_ = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    // LLT accepts tiny positive pivots; treat numerically singular factors as failures.
    if (!(rc > 1e3 * std::numeric_limits<double>::epsilon()))
      throw SingularMatrixError("matrix is numerically singular after diagonal loading "
                                "(condition estimate " + std::to_string(condition_) + ")",
                                condition_);
  }

  template <typename Rhs>
  Eigen::MatrixXcd solve(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.solve(b);
  }

  Eigen::MatrixXcd lower() const { return llt_.matrixL(); }
  double condition() const { return condition_; }

 private:
  Eigen::LLT<Eigen::MatrixXcd> llt_;
  double condition_ = 1.0;
};

// Solves (A + loading * tr(A)/D * I) y = b column-wise.
template <typename Rhs>
Eigen::MatrixXcd solve_hermitian(const HermitianMatrix& a, const Eigen::MatrixBase<Rhs>& b,
                                 double loading = kDefaultLoading) {
  if (a.dim() != b.rows())
    throw SizeError("solve_hermitian: matrix dimension " + std::to_string(a.dim()) +
                    " does not match right-hand side length " + std::to_string(b.rows()));
  return LoadedCholesky(a, loading).solve(b);
}

struct Eigenpair {
  Eigen::VectorXcd vector;
  double value = 0.0;
  int iterations = 0;
};

// Rotates u so that its entry of largest magnitude is real and positive.
inline void fix_phase(Eigen::VectorXcd& u) {
  Eigen::Index k = 0;
  u.cwiseAbs().maxCoeff(&k);
  const double mag = std::abs(u(k));
  if (mag > 0.0) u *= std::conj(u(k)) / mag;
}

inline constexpr int kPowerIterationCap = 500;
inline constexpr double kPowerIterationTol = 1e-10;

// Top eigenpair of a Hermitian PSD matrix by power iteration. The iteration
// runs on a trace-normalized power A^(2^k) of the input (formed by repeated
// squaring) so that close leading eigenvalues still separate within the
// iteration cap; the Rayleigh quotient and stopping residual are evaluated on
// A itself.
inline Eigenpair principal_eigenvector(const HermitianMatrix& a) {
  const Eigen::Index d = a.dim();
  if (d == 0) throw SizeError("principal_eigenvector: empty matrix");
  const Eigen::MatrixXcd& m = a.matrix();
  const double scale = m.norm();
  Eigenpair out;
  if (d == 1 || scale == 0.0) {
    out.vector = Eigen::VectorXcd::Unit(d, 0);
    out.value = m(0, 0).real();
    return out;
  }

  constexpr int kSquarings = 8;
  Eigen::MatrixXcd amplified = m / scale;
  for (int k = 0; k < kSquarings; ++k) {
    amplified = amplified * amplified;
    amplified = 0.5 * (amplified + amplified.adjoint()).eval();
    const double tr = amplified.diagonal().real().sum();
    if (!(tr > 0.0)) break;
    amplified /= tr;
  }

  Eigen::Index start = 0;
  amplified.colwise().norm().maxCoeff(&start);
  Eigen::VectorXcd u = amplified.col(start);
  if (!(u.norm() > 0.0)) u = Eigen::VectorXcd::Unit(d, start);
  u.normalize();

  double lambda = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it <= kPowerIterationCap; ++it) {
    const Eigen::VectorXcd au = m * u;
    lambda = u.dot(au).real();
    residual = (au - lambda * u).norm();
    if (residual <= kPowerIterationTol * std::abs(lambda) || residual <= 1e-300) break;
    if (it == kPowerIterationCap) break;
    Eigen::VectorXcd next = amplified * u;
    const double nn = next.norm();
    if (!(nn > 0.0)) break;
    u = next / nn;
  }
  if (!(residual <= 1e-8 * std::abs(lambda)) && residual > 1e-300) {
    throw ConvergenceError("power iteration did not converge (relative residual " +
                               std::to_string(residual / std::abs(lambda)) + ")",
                           it);
  }
  fix_phase(u);
  out.vector = u;
  out.value = lambda;
  out.iterations = it;
  return out;
}

struct GeneralizedEigenvector {
  Eigen::VectorXcd vector;  // de-whitened: L * u, unnormalized
  double value = 0.0;       // largest generalized eigenvalue
};

// Covariance whitening: with Phi_n + loading = L L^H, takes the principal
// eigenvector u of L^-1 Phi_x L^-H and returns v = L u. v satisfies
// Phi_x Phi_n^-1 v = lambda v, i.e. Phi_n^-1 v is the principal generalized
// eigenvector of the pencil (Phi_x, Phi_n).
inline GeneralizedEigenvector whitened_gevd(const HermitianMatrix& phi_x,
                                            const HermitianMatrix& phi_n,
                                            double loading = kDefaultLoading) {
  if (phi_x.dim() != phi_n.dim())
    throw SizeError("whitened_gevd: covariance dimensions differ");
  LoadedCholesky chol(phi_n, loading);
  const Eigen::MatrixXcd l = chol.lower();
  const auto tri = l.triangularView<Eigen::Lower>();
  // C = L^-1 Phi_x L^-H
  Eigen::MatrixXcd tmp = tri.solve(phi_x.matrix());
  Eigen::MatrixXcd c = tri.solve(tmp.adjoint()).adjoint();
  c = 0.5 * (c + c.adjoint()).eval();
  const Eigenpair top = principal_eigenvector(HermitianMatrix(c));
  return {l * top.vector, top.value};
}

}  // namespace convbf
