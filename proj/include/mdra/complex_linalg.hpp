#pragma once

#include <Eigen/Dense>
#include <complex>

namespace mdra {

using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

/// True when A equals its conjugate transpose within `tol` elementwise.
bool is_hermitian(const CMat& a, double tol = 1e-12);

/// Solves A y = x for Hermitian positive definite A via Cholesky.
/// Throws NumericalError on a non-positive-definite pivot and ShapeError when
/// A is not Hermitian or dimensions disagree. The result satisfies
/// ||A y - x|| / ||x|| < 1e-10 for well-conditioned systems.
CVec hermitian_solve(const CMat& a, const CVec& x);

/// Matrix form of the above (solves each column independently).
CMat hermitian_solve(const CMat& a, const CMat& x);

}  // namespace mdra
