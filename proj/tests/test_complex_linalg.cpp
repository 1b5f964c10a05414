#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "dcnn/complex_linalg.hpp"
#include "dcnn/rng.hpp"
#include "oracles.hpp"

using namespace dcnn;

TEST_CASE("dft of delta is constant, dft of constant is scaled delta") {
  CVec delta = {1.0, 0.0, 0.0, 0.0};
  CVec fd = dft(delta);
  for (const Complex& z : fd) CHECK(std::abs(z - Complex{1.0, 0.0}) < 1e-14);

  CVec ones(4, Complex{1.0, 0.0});
  CVec fo = dft(ones);
  CHECK(std::abs(fo[0] - Complex{4.0, 0.0}) < 1e-14);
  for (int k = 1; k < 4; ++k) CHECK(std::abs(fo[k]) < 1e-13);
}

TEST_CASE("dft matches the naive quadratic oracle on a non-power-of-two size") {
  CounterRng rng(42, 0);
  const CVec x = oracle::random_cvec(12, rng);
  CHECK(oracle::rel_err(dft(x), oracle::naive_dft(x)) < 1e-12);
}

TEST_CASE("dft/idft round-trip across power-of-two and general sizes") {
  CounterRng rng(7, 1);
  for (int n : {1, 2, 3, 5, 8, 12, 16, 31, 64, 100, 128, 255, 256, 1000}) {
    const CVec x = oracle::random_cvec(n, rng);
    CHECK(oracle::rel_err(idft(dft(x)), x) < 1e-12);
  }
}

TEST_CASE("circulant matvec: identity and cyclic shift coefficients") {
  CounterRng rng(3, 2);
  CirculantMatrix id = CirculantMatrix::identity(4);
  const CVec x = oracle::random_cvec(4, rng);
  CHECK(oracle::rel_err(circ_matvec(id, x), x) < 1e-13);

  CirculantMatrix s(CVec{0.0, 1.0, 0.0, 0.0});
  CVec y = circ_matvec(s, CVec{1.0, 2.0, 3.0, 4.0});
  const CVec want = {4.0, 1.0, 2.0, 3.0};
  CHECK(oracle::rel_err(y, want) < 1e-13);
}

TEST_CASE("circulant matvec equals dense materialization across sizes") {
  CounterRng rng(11, 3);
  for (int n : {1, 2, 3, 7, 12, 16, 33, 64, 128, 1000}) {
    CVec c = oracle::random_cvec(n, rng);
    CirculantMatrix circ(c);
    const CVec x = oracle::random_cvec(n, rng);
    const CVec got = circ_matvec(circ, x);
    const CVec want = oracle::dense_matvec(materialize(circ), x);
    CHECK(oracle::rel_err(got, want) < 1e-10);
  }
}

TEST_CASE("circulants commute") {
  CounterRng rng(5, 4);
  for (int n : {4, 9, 16}) {
    CirculantMatrix a(oracle::random_cvec(n, rng));
    CirculantMatrix b(oracle::random_cvec(n, rng));
    const CVec x = oracle::random_cvec(n, rng);
    const CVec ab = circ_matvec(a, circ_matvec(b, x));
    const CVec ba = circ_matvec(b, circ_matvec(a, x));
    CHECK(oracle::rel_err(ab, ba) < 1e-10);
  }
}

TEST_CASE("transpose of a circulant reverses coefficients cyclically") {
  CounterRng rng(9, 5);
  const int n = 6;
  CirculantMatrix c(oracle::random_cvec(n, rng));
  const ComplexMatrix mt = transpose(materialize(c));
  const ComplexMatrix tm = materialize(transpose(c));
  for (size_t i = 0; i < mt.data.size(); ++i) CHECK(mt.data[i] == tm.data[i]);
}

TEST_CASE("diag_matvec identity, zero, and dense oracle") {
  CounterRng rng(13, 6);
  const int n = 9;
  const CVec x = oracle::random_cvec(n, rng);
  CHECK(oracle::rel_err(diag_matvec(DiagonalMatrix::identity(n), x), x) == 0.0);

  DiagonalMatrix zero{CVec(n, Complex{})};
  for (const Complex& z : diag_matvec(zero, x)) CHECK(z == Complex{});

  DiagonalMatrix d(oracle::random_cvec(n, rng));
  const CVec want = oracle::dense_matvec(materialize(d), x);
  CHECK(oracle::rel_err(diag_matvec(d, x), want) < 1e-14);
}

TEST_CASE("shift_apply powers, wrap-around, and negatives") {
  const CVec x = {1.0, 2.0, 3.0};
  CHECK(oracle::rel_err(shift_apply(x, 0), x) == 0.0);
  const CVec s1 = {3.0, 1.0, 2.0};
  CHECK(oracle::rel_err(shift_apply(x, 1), s1) == 0.0);
  CHECK(oracle::rel_err(shift_apply(x, 3), x) == 0.0);
  CHECK(oracle::rel_err(shift_apply(x, -2), s1) == 0.0);
}

TEST_CASE("materialize obeys the circulant index rule") {
  CirculantMatrix i2(CVec{1.0, 0.0});
  const ComplexMatrix m = materialize(i2);
  CHECK(m.at(0, 0) == Complex{1.0, 0.0});
  CHECK(m.at(1, 1) == Complex{1.0, 0.0});
  CHECK(m.at(0, 1) == Complex{});

  CirculantMatrix s2(CVec{0.0, 1.0});
  const ComplexMatrix ms = materialize(s2);
  CHECK(ms.at(0, 0) == Complex{});
  CHECK(ms.at(1, 0) == Complex{1.0, 0.0});
  CHECK(ms.at(0, 1) == Complex{1.0, 0.0});

  CounterRng rng(17, 7);
  const int n = 5;
  const CVec c = oracle::random_cvec(n, rng);
  const ComplexMatrix mc = materialize(CirculantMatrix(c));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      CHECK(mc.at(i, j) == c[mod_index(i - j, n)]);
}

TEST_CASE("spectrum cache matches a fresh dft of the coefficients") {
  CounterRng rng(23, 8);
  CirculantMatrix c(oracle::random_cvec(10, rng));
  CHECK(!c.cached_spectrum().has_value());
  (void)circ_matvec(c, oracle::random_cvec(10, rng));
  REQUIRE(c.cached_spectrum().has_value());
  CHECK(oracle::rel_err(*c.cached_spectrum(), dft(c.coeffs())) < 1e-12);
  c.set_coeffs(oracle::random_cvec(10, rng));
  CHECK(!c.cached_spectrum().has_value());
}

TEST_CASE("svd of simple diagonal cases") {
  ComplexMatrix a(2, 2);
  a.at(0, 0) = 3.0;
  a.at(1, 1) = 1.0;
  const SvdResult s = svd(a);
  CHECK(s.singular_values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(s.singular_values[1] == doctest::Approx(1.0).epsilon(1e-12));

  const SvdResult si = svd(ComplexMatrix::identity(4));
  for (double x : si.singular_values) CHECK(x == doctest::Approx(1.0).epsilon(1e-12));
}

namespace {
double unitarity_residual(const ComplexMatrix& u) {
  const ComplexMatrix g = matmul(conj_transpose(u), u);
  double worst = 0.0;
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      const Complex want = (i == j) ? Complex{1.0, 0.0} : Complex{};
      worst = std::max(worst, std::abs(g.at(i, j) - want));
    }
  return worst;
}

dcnn::ComplexMatrix svd_reconstruct(const SvdResult& s) {
  const int n = s.u.rows;
  ComplexMatrix us = s.u;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) us.at(i, j) *= s.singular_values[j];
  return matmul(us, conj_transpose(s.v));
}
}  // namespace

TEST_CASE("svd of a random matrix reconstructs with unitary factors") {
  CounterRng rng(29, 9);
  const ComplexMatrix a = oracle::random_matrix(8, 8, rng);
  const SvdResult s = svd(a);

  for (int i = 0; i + 1 < 8; ++i)
    CHECK(s.singular_values[i] >= s.singular_values[i + 1]);
  for (double x : s.singular_values) CHECK(x >= 0.0);

  CHECK(unitarity_residual(s.u) < 1e-10);
  CHECK(unitarity_residual(s.v) < 1e-10);
  CHECK(oracle::rel_err(svd_reconstruct(s), a) < 1e-10);
}

TEST_CASE("svd handles rank-deficient and zero matrices") {
  CounterRng rng(31, 10);
  const int n = 6;
  const ComplexMatrix r1 = oracle::random_rank_matrix(n, 1, rng);
  const SvdResult s = svd(r1);
  CHECK(unitarity_residual(s.u) < 1e-10);
  CHECK(oracle::rel_err(svd_reconstruct(s), r1) < 1e-10);
  for (int i = 1; i < n; ++i)
    CHECK(s.singular_values[i] < 1e-12 * s.singular_values[0]);

  const SvdResult z = svd(ComplexMatrix(3, 3));
  for (double x : z.singular_values) CHECK(x == 0.0);
  CHECK(unitarity_residual(z.u) < 1e-12);
}

TEST_CASE("operator_norm agrees with the largest singular value") {
  ComplexMatrix a(2, 2);
  a.at(0, 0) = 3.0;
  a.at(1, 1) = 1.0;
  CHECK(operator_norm(a) == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(operator_norm(ComplexMatrix::identity(5)) == doctest::Approx(1.0).epsilon(1e-10));

  CounterRng rng(37, 11);
  const ComplexMatrix m = oracle::random_matrix(16, 16, rng);
  CHECK(operator_norm(m) ==
        doctest::Approx(svd(m).singular_values[0]).epsilon(1e-8));
}

TEST_CASE("numeric_rank on identity, zero, and an outer product") {
  CHECK(numeric_rank(ComplexMatrix::identity(4)) == 4);
  CHECK(numeric_rank(ComplexMatrix(5, 5)) == 0);
  CounterRng rng(41, 12);
  CHECK(numeric_rank(oracle::random_rank_matrix(7, 1, rng)) == 1);
}

TEST_CASE("non-finite values are rejected at construction") {
  CVec bad = {Complex{1.0, 0.0}, Complex{std::nan(""), 0.0}};
  CHECK_THROWS_AS(CirculantMatrix{bad}, std::invalid_argument);
  CHECK_THROWS_AS(DiagonalMatrix{bad}, std::invalid_argument);
}

TEST_CASE("dimension mismatches are rejected") {
  CirculantMatrix c = CirculantMatrix::identity(4);
  CHECK_THROWS_AS(circ_matvec(c, CVec(3)), std::invalid_argument);
  DiagonalMatrix d = DiagonalMatrix::identity(4);
  CHECK_THROWS_AS(diag_matvec(d, CVec(5)), std::invalid_argument);
}
