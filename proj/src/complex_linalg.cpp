#include "mdra/complex_linalg.hpp"

#include <Eigen/Cholesky>

#include "mdra/errors.hpp"

namespace mdra {

bool is_hermitian(const CMat& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i; j < a.cols(); ++j)
      if (std::abs(a(i, j) - std::conj(a(j, i))) > tol) return false;
  return true;
}

namespace {
Eigen::LLT<CMat> factor(const CMat& a) {
  if (a.rows() != a.cols()) throw ShapeError("hermitian_solve: A not square");
  if (!is_hermitian(a)) throw ShapeError("hermitian_solve: A not Hermitian");
  Eigen::LLT<CMat> llt(a);
  if (llt.info() != Eigen::Success)
    throw NumericalError("hermitian_solve: non-positive-definite pivot");
  return llt;
}
}  // namespace

CVec hermitian_solve(const CMat& a, const CVec& x) {
  if (a.rows() != x.rows())
    throw ShapeError("hermitian_solve: dimension mismatch");
  return factor(a).solve(x);
}

CMat hermitian_solve(const CMat& a, const CMat& x) {
  if (a.rows() != x.rows())
    throw ShapeError("hermitian_solve: dimension mismatch");
  return factor(a).solve(x);
}

}  // namespace mdra
