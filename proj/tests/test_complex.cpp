#include "doctest.h"

#include "mdra/complex_linalg.hpp"
#include "mdra/errors.hpp"
#include "mdra/rng.hpp"

using namespace mdra;

namespace {
CMat random_hpd(int n, RngStream& rng) {
  CMat b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = {rng.normal(), rng.normal()};
  return b * b.adjoint() + CMat::Identity(n, n) * 0.1;
}
}  // namespace

TEST_CASE("hermitian_solve: identity and scalar matrix") {
  CVec x(2);
  x << std::complex<double>(4.0, 1.0), std::complex<double>(6.0, -2.0);
  CVec y = hermitian_solve(CMat::Identity(2, 2), x);
  CHECK((y - x).norm() < 1e-14);

  CVec x2(2);
  x2 << 4.0, 6.0;
  CVec y2 = hermitian_solve(2.0 * CMat::Identity(2, 2), x2);
  CHECK(y2(0).real() == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(y2(1).real() == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("hermitian_solve: rank-one update vs dense inverse") {
  RngStream rng(17, "rank1");
  const double c = 0.75;
  CVec h(4);
  for (int i = 0; i < 4; ++i) h(i) = {rng.normal(), rng.normal()};
  CMat a = CMat::Identity(4, 4) + c * (h * h.adjoint());
  CVec y = hermitian_solve(a, h);
  // Sherman-Morrison closed form: (I + c h h^H)^{-1} h = h / (1 + c ||h||^2).
  CVec expect = h / (1.0 + c * h.squaredNorm());
  CHECK((y - expect).norm() < 1e-12);
  // Independent dense-inverse route.
  CVec dense = a.inverse() * h;
  CHECK((y - dense).norm() < 1e-12);
}

TEST_CASE("hermitian_solve: residual below 1e-10 on random HPD up to dim 32") {
  for (int dim : {2, 5, 8, 16, 32}) {
    RngStream rng(dim, "hpd");
    CMat a = random_hpd(dim, rng);
    CVec x(dim);
    for (int i = 0; i < dim; ++i) x(i) = {rng.normal(), rng.normal()};
    CVec y = hermitian_solve(a, x);
    CHECK((a * y - x).norm() / x.norm() < 1e-10);
  }
}

TEST_CASE("hermitian_solve: error paths") {
  RngStream rng(2, "errs");
  SUBCASE("non-positive-definite pivot") {
    CMat a = -CMat::Identity(3, 3);
    CVec x = CVec::Ones(3);
    CHECK_THROWS_AS(hermitian_solve(a, x), NumericalError);
  }
  SUBCASE("non-Hermitian input") {
    CMat a = CMat::Identity(2, 2);
    a(0, 1) = {1.0, 0.5};
    a(1, 0) = {1.0, 0.5};  // conj symmetry broken
    CVec x = CVec::Ones(2);
    CHECK_THROWS_AS(hermitian_solve(a, x), ShapeError);
  }
  SUBCASE("dimension mismatch") {
    CMat eye3 = CMat::Identity(3, 3);
    CVec ones2 = CVec::Ones(2);
    CHECK_THROWS_AS(hermitian_solve(eye3, ones2), ShapeError);
  }
}

TEST_CASE("is_hermitian tolerance") {
  CMat a = CMat::Identity(2, 2);
  a(0, 1) = {0.5, 1e-13};
  a(1, 0) = {0.5, -1e-13};
  CHECK(is_hermitian(a));
  a(1, 0) = {0.5, 1e-6};
  CHECK(!is_hermitian(a));
}
