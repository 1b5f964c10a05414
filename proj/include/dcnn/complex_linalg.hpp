#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcnn {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;

/// Thrown when an iterative routine fails its numerical contract
/// (non-convergence, fit budget exhausted). best_error() carries the best
/// achieved error when one is meaningful, -1 otherwise.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double best_error = -1.0)
      : std::runtime_error(what), best_error_(best_error) {}
  double best_error() const { return best_error_; }

 private:
  double best_error_;
};

// NaN/Inf are rejected when values enter through constructors or file
// loading; internal kernels assume finite data.
void ensure_finite(const CVec& v, const char* what);

inline int mod_index(long long i, int n) {
  long long r = i % n;
  return static_cast<int>(r < 0 ? r + n : r);
}

/// Dense row-major complex matrix.
struct ComplexMatrix {
  int rows = 0;
  int cols = 0;
  CVec data;

  ComplexMatrix() = default;
  ComplexMatrix(int r, int c)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c) {}
  ComplexMatrix(int r, int c, CVec entries);

  Complex& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  const Complex& at(int i, int j) const {
    return data[static_cast<size_t>(i) * cols + j];
  }
  bool square() const { return rows == cols; }

  static ComplexMatrix identity(int n);
};

ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b);
CVec matvec(const ComplexMatrix& a, const CVec& x);
ComplexMatrix transpose(const ComplexMatrix& a);
ComplexMatrix conj_transpose(const ComplexMatrix& a);
ComplexMatrix conj(const ComplexMatrix& a);
ComplexMatrix subtract(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix scale(const ComplexMatrix& a, Complex s);
double frobenius_norm(const ComplexMatrix& a);
double norm2(const CVec& v);

/// Circulant matrix held as its first column plus an optionally cached
/// forward DFT of it (its eigenvalues). Entry (i, j) = coeffs[(i - j) mod n].
/// The cache is dropped on set_coeffs so it always matches the coefficients.
class CirculantMatrix {
 public:
  CirculantMatrix() = default;
  explicit CirculantMatrix(CVec coeffs);

  static CirculantMatrix identity(int n);

  int size() const { return static_cast<int>(coeffs_.size()); }
  const CVec& coeffs() const { return coeffs_; }
  void set_coeffs(CVec coeffs);

  /// Computes and caches the spectrum; subsequent calls are free. Call this
  /// before sharing the value across threads.
  const CVec& ensure_spectrum();
  const std::optional<CVec>& cached_spectrum() const { return spectrum_; }
  /// Cached spectrum if present, otherwise a fresh computation (no caching).
  CVec spectrum() const;

 private:
  CVec coeffs_;
  std::optional<CVec> spectrum_;
};

struct DiagonalMatrix {
  CVec entries;

  DiagonalMatrix() = default;
  explicit DiagonalMatrix(CVec e);
  static DiagonalMatrix identity(int n);
  int size() const { return static_cast<int>(entries.size()); }
};

/// Unnormalized forward DFT: X_k = sum_t x_t exp(-2 pi i k t / n).
/// Power-of-two lengths run radix-2 Cooley-Tukey, all others Bluestein.
CVec dft(const CVec& v);
/// Inverse with the 1/n factor, so idft(dft(v)) == v.
CVec idft(const CVec& v);

/// y = C x through the convolution theorem (idft(spectrum .* dft(x))).
/// The non-const overload populates the spectrum cache.
CVec circ_matvec(CirculantMatrix& c, const CVec& x);
CVec circ_matvec(const CirculantMatrix& c, const CVec& x);

CVec diag_matvec(const DiagonalMatrix& d, const CVec& x);

/// Applies the p-th power of the cyclic shift: result[t] = x[(t - p) mod n].
CVec shift_apply(const CVec& x, long long p);

/// corr(a, b)[m] = sum_t a[t] conj(b[(t - m) mod n]), via the FFT. This is
/// the adjoint of circular convolution in either argument.
CVec circular_correlation(const CVec& a, const CVec& b);

/// Product of two circulants is circulant: coefficient vectors convolve.
CirculantMatrix circ_mul(const CirculantMatrix& a, const CirculantMatrix& b);
/// Plain (non-conjugating) transpose: coefficients reverse cyclically.
CirculantMatrix transpose(const CirculantMatrix& c);

ComplexMatrix materialize(const CirculantMatrix& c);
ComplexMatrix materialize(const DiagonalMatrix& d);

/// Singular value decomposition a = U diag(s) V^H with U, V unitary and
/// s descending. Columns matching exactly-zero singular values are filled
/// with a deterministic orthonormal completion.
struct SvdResult {
  ComplexMatrix u;
  std::vector<double> singular_values;
  ComplexMatrix v;
};

/// One-sided Jacobi on the columns of a square complex matrix (n <= 1024).
/// Deterministic for a fixed input; throws NumericalError if the sweep cap
/// (100) is reached before the off-diagonal criterion is met.
SvdResult svd(const ComplexMatrix& a);

/// Largest singular value via power iteration on A^H A, relative
/// tolerance 1e-10.
double operator_norm(const ComplexMatrix& a);

/// Number of singular values above tol * sigma_max.
int numeric_rank(const ComplexMatrix& a, double tol = 1e-10);

}  // namespace dcnn
