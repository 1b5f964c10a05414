#include "dcnn/complex_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dcnn {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place radix-2 Cooley-Tukey, decimation in time. sign = -1 forward.
void fft_pow2(CVec& a, int sign) {
  const size_t n = a.size();
  if (n <= 1) return;
  // bit reversal
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * kPi / static_cast<double>(len);
    const size_t half = len >> 1;
    for (size_t i = 0; i < n; i += len) {
      for (size_t k = 0; k < half; ++k) {
        const Complex w = std::polar(1.0, ang * static_cast<double>(k));
        const Complex u = a[i + k];
        const Complex t = w * a[i + k + half];
        a[i + k] = u + t;
        a[i + k + half] = u - t;
      }
    }
  }
}

// Chirp-z for arbitrary n, forward transform only; the inverse goes through
// the conjugate identity in idft().
CVec bluestein(const CVec& x) {
  const size_t n = x.size();
  size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;

  // chirp[t] = exp(-i pi t^2 / n); reduce t^2 mod 2n to keep the angle small
  CVec chirp(n);
  for (size_t t = 0; t < n; ++t) {
    const long long tt = static_cast<long long>(t) * static_cast<long long>(t);
    const long long red = tt % (2 * static_cast<long long>(n));
    chirp[t] = std::polar(1.0, -kPi * static_cast<double>(red) /
                                   static_cast<double>(n));
  }

  CVec a(m, Complex{0.0, 0.0});
  CVec b(m, Complex{0.0, 0.0});
  for (size_t t = 0; t < n; ++t) {
    a[t] = x[t] * chirp[t];
    b[t] = std::conj(chirp[t]);
  }
  for (size_t t = 1; t < n; ++t) b[m - t] = b[t];

  fft_pow2(a, -1);
  fft_pow2(b, -1);
  for (size_t t = 0; t < m; ++t) a[t] *= b[t];
  fft_pow2(a, +1);
  const double inv_m = 1.0 / static_cast<double>(m);

  CVec out(n);
  for (size_t k = 0; k < n; ++k) out[k] = a[k] * inv_m * chirp[k];
  return out;
}

}  // namespace

void ensure_finite(const CVec& v, const char* what) {
  for (const Complex& z : v) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
      throw std::invalid_argument(std::string(what) +
                                  ": non-finite entry rejected");
    }
  }
}

ComplexMatrix::ComplexMatrix(int r, int c, CVec entries)
    : rows(r), cols(c), data(std::move(entries)) {
  if (data.size() != static_cast<size_t>(r) * c) {
    throw std::invalid_argument("ComplexMatrix: entry count != rows*cols");
  }
  ensure_finite(data, "ComplexMatrix");
}

ComplexMatrix ComplexMatrix::identity(int n) {
  ComplexMatrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
  ComplexMatrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const Complex aik = a.at(i, k);
      if (aik == Complex{}) continue;
      const Complex* brow = &b.data[static_cast<size_t>(k) * b.cols];
      Complex* orow = &out.data[static_cast<size_t>(i) * out.cols];
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

CVec matvec(const ComplexMatrix& a, const CVec& x) {
  if (a.cols != static_cast<int>(x.size())) {
    throw std::invalid_argument("matvec: shape mismatch");
  }
  CVec y(a.rows, Complex{});
  for (int i = 0; i < a.rows; ++i) {
    Complex acc{};
    const Complex* row = &a.data[static_cast<size_t>(i) * a.cols];
    for (int j = 0; j < a.cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

ComplexMatrix transpose(const ComplexMatrix& a) {
  ComplexMatrix out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

ComplexMatrix conj_transpose(const ComplexMatrix& a) {
  ComplexMatrix out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out.at(j, i) = std::conj(a.at(i, j));
  return out;
}

ComplexMatrix conj(const ComplexMatrix& a) {
  ComplexMatrix out(a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = std::conj(a.data[i]);
  return out;
}

ComplexMatrix subtract(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw std::invalid_argument("subtract: shape mismatch");
  }
  ComplexMatrix out(a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw std::invalid_argument("add: shape mismatch");
  }
  ComplexMatrix out(a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

ComplexMatrix scale(const ComplexMatrix& a, Complex s) {
  ComplexMatrix out(a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * s;
  return out;
}

double frobenius_norm(const ComplexMatrix& a) {
  double acc = 0.0;
  for (const Complex& z : a.data) acc += std::norm(z);
  return std::sqrt(acc);
}

double norm2(const CVec& v) {
  double acc = 0.0;
  for (const Complex& z : v) acc += std::norm(z);
  return std::sqrt(acc);
}

CirculantMatrix::CirculantMatrix(CVec coeffs) : coeffs_(std::move(coeffs)) {
  if (coeffs_.empty()) throw std::invalid_argument("CirculantMatrix: empty");
  ensure_finite(coeffs_, "CirculantMatrix");
}

CirculantMatrix CirculantMatrix::identity(int n) {
  CVec c(n, Complex{});
  c[0] = 1.0;
  return CirculantMatrix(std::move(c));
}

void CirculantMatrix::set_coeffs(CVec coeffs) {
  if (coeffs.empty()) throw std::invalid_argument("CirculantMatrix: empty");
  ensure_finite(coeffs, "CirculantMatrix");
  coeffs_ = std::move(coeffs);
  spectrum_.reset();
}

const CVec& CirculantMatrix::ensure_spectrum() {
  if (!spectrum_) spectrum_ = dft(coeffs_);
  return *spectrum_;
}

CVec CirculantMatrix::spectrum() const {
  if (spectrum_) return *spectrum_;
  return dft(coeffs_);
}

DiagonalMatrix::DiagonalMatrix(CVec e) : entries(std::move(e)) {
  if (entries.empty()) throw std::invalid_argument("DiagonalMatrix: empty");
  ensure_finite(entries, "DiagonalMatrix");
}

DiagonalMatrix DiagonalMatrix::identity(int n) {
  return DiagonalMatrix(CVec(n, Complex{1.0, 0.0}));
}

CVec dft(const CVec& v) {
  if (v.empty()) throw std::invalid_argument("dft: empty input");
  if (is_pow2(v.size())) {
    CVec a = v;
    fft_pow2(a, -1);
    return a;
  }
  return bluestein(v);
}

CVec idft(const CVec& v) {
  if (v.empty()) throw std::invalid_argument("idft: empty input");
  const size_t n = v.size();
  if (is_pow2(n)) {
    CVec a = v;
    fft_pow2(a, +1);
    const double inv = 1.0 / static_cast<double>(n);
    for (Complex& z : a) z *= inv;
    return a;
  }
  CVec c(n);
  for (size_t i = 0; i < n; ++i) c[i] = std::conj(v[i]);
  CVec t = bluestein(c);
  const double inv = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) t[i] = std::conj(t[i]) * inv;
  return t;
}

namespace {
CVec circ_matvec_spec(const CVec& spectrum, const CVec& x) {
  CVec xf = dft(x);
  for (size_t i = 0; i < xf.size(); ++i) xf[i] *= spectrum[i];
  return idft(xf);
}
}  // namespace

CVec circ_matvec(CirculantMatrix& c, const CVec& x) {
  if (c.size() != static_cast<int>(x.size())) {
    throw std::invalid_argument("circ_matvec: dimension mismatch");
  }
  return circ_matvec_spec(c.ensure_spectrum(), x);
}

CVec circ_matvec(const CirculantMatrix& c, const CVec& x) {
  if (c.size() != static_cast<int>(x.size())) {
    throw std::invalid_argument("circ_matvec: dimension mismatch");
  }
  return circ_matvec_spec(c.spectrum(), x);
}

CVec diag_matvec(const DiagonalMatrix& d, const CVec& x) {
  if (d.size() != static_cast<int>(x.size())) {
    throw std::invalid_argument("diag_matvec: dimension mismatch");
  }
  CVec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = d.entries[i] * x[i];
  return y;
}

CVec shift_apply(const CVec& x, long long p) {
  const int n = static_cast<int>(x.size());
  CVec y(x.size());
  for (int t = 0; t < n; ++t) y[t] = x[mod_index(t - p, n)];
  return y;
}

CVec circular_correlation(const CVec& a, const CVec& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("circular_correlation: length mismatch");
  }
  CVec fa = dft(a);
  const CVec fb = dft(b);
  for (size_t i = 0; i < fa.size(); ++i) fa[i] *= std::conj(fb[i]);
  return idft(fa);
}

CirculantMatrix circ_mul(const CirculantMatrix& a, const CirculantMatrix& b) {
  if (a.size() != b.size()) throw std::invalid_argument("circ_mul: size");
  CVec sa = a.spectrum();
  const CVec sb = b.spectrum();
  for (size_t i = 0; i < sa.size(); ++i) sa[i] *= sb[i];
  return CirculantMatrix(idft(sa));
}

CirculantMatrix transpose(const CirculantMatrix& c) {
  const int n = c.size();
  CVec out(n);
  for (int j = 0; j < n; ++j) out[j] = c.coeffs()[mod_index(n - j, n)];
  return CirculantMatrix(std::move(out));
}

ComplexMatrix materialize(const CirculantMatrix& c) {
  const int n = c.size();
  ComplexMatrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m.at(i, j) = c.coeffs()[mod_index(i - j, n)];
  return m;
}

ComplexMatrix materialize(const DiagonalMatrix& d) {
  const int n = d.size();
  ComplexMatrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = d.entries[i];
  return m;
}

namespace {

// Orthonormal completion for columns whose singular value is exactly zero:
// try canonical basis vectors in order, orthogonalize against all kept
// columns, accept once the residual is well-conditioned.
void complete_column(ComplexMatrix& u, int col) {
  const int n = u.rows;
  for (int cand = 0; cand < n; ++cand) {
    CVec w(n, Complex{});
    w[cand] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < n; ++j) {
        if (j == col) continue;
        Complex proj{};
        for (int i = 0; i < n; ++i) proj += std::conj(u.at(i, j)) * w[i];
        for (int i = 0; i < n; ++i) w[i] -= proj * u.at(i, j);
      }
    }
    const double nrm = norm2(w);
    if (nrm > 0.5) {
      for (int i = 0; i < n; ++i) u.at(i, col) = w[i] / nrm;
      return;
    }
  }
  throw NumericalError("svd: orthonormal completion failed");
}

}  // namespace

SvdResult svd(const ComplexMatrix& a) {
  if (!a.square()) throw std::invalid_argument("svd: square matrices only");
  const int n = a.rows;
  if (n < 1 || n > 1024) throw std::invalid_argument("svd: n must be in [1, 1024]");
  ensure_finite(a.data, "svd");

  ComplexMatrix g = a;                       // columns get rotated in place
  ComplexMatrix v = ComplexMatrix::identity(n);

  const double tol = 1e-13;
  const int max_sweeps = 100;
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0;
        Complex apq{};
        for (int i = 0; i < n; ++i) {
          app += std::norm(g.at(i, p));
          aqq += std::norm(g.at(i, q));
          apq += std::conj(g.at(i, p)) * g.at(i, q);
        }
        const double off = std::abs(apq);
        if (off <= tol * std::sqrt(app * aqq) || off == 0.0) continue;
        converged = false;

        // Unitary rotation zeroing the off-diagonal of the 2x2 Gram block
        // [[app, apq], [conj(apq), aqq]].
        const Complex phase = apq / off;
        const double tau = (aqq - app) / (2.0 * off);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;

        for (int i = 0; i < n; ++i) {
          const Complex gp = g.at(i, p);
          const Complex gq = g.at(i, q);
          g.at(i, p) = cs * gp - sn * std::conj(phase) * gq;
          g.at(i, q) = sn * phase * gp + cs * gq;
        }
        for (int i = 0; i < n; ++i) {
          const Complex vp = v.at(i, p);
          const Complex vq = v.at(i, q);
          v.at(i, p) = cs * vp - sn * std::conj(phase) * vq;
          v.at(i, q) = sn * phase * vp + cs * vq;
        }
      }
    }
  }
  if (!converged) {
    throw NumericalError("svd: Jacobi sweeps did not converge within cap");
  }

  std::vector<double> sigma(n);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::norm(g.at(i, j));
    sigma[j] = std::sqrt(s);
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return sigma[x] > sigma[y]; });

  SvdResult out;
  out.u = ComplexMatrix(n, n);
  out.v = ComplexMatrix(n, n);
  out.singular_values.resize(n);
  for (int jj = 0; jj < n; ++jj) {
    const int j = order[jj];
    out.singular_values[jj] = sigma[j];
    for (int i = 0; i < n; ++i) out.v.at(i, jj) = v.at(i, j);
    if (sigma[j] > 0.0) {
      for (int i = 0; i < n; ++i) out.u.at(i, jj) = g.at(i, j) / sigma[j];
    }
  }
  for (int jj = 0; jj < n; ++jj) {
    if (out.singular_values[jj] == 0.0) complete_column(out.u, jj);
  }
  return out;
}

double operator_norm(const ComplexMatrix& a) {
  if (a.rows == 0 || a.cols == 0) return 0.0;
  const int n = a.cols;
  // deterministic, non-symmetric start vector
  CVec x(n);
  for (int i = 0; i < n; ++i) {
    x[i] = Complex(1.0 + 0.37 * std::cos(1.0 + i), 0.21 * std::sin(2.0 + 3.0 * i));
  }
  double xn = norm2(x);
  for (Complex& z : x) z /= xn;

  const ComplexMatrix ah = conj_transpose(a);
  double sigma = 0.0;
  for (int it = 0; it < 5000; ++it) {
    CVec y = matvec(a, x);
    const double yn = norm2(y);
    if (yn == 0.0) return 0.0;
    CVec z = matvec(ah, y);
    const double zn = norm2(z);
    if (zn == 0.0) return yn;
    for (Complex& e : z) e /= zn;
    x = std::move(z);
    const double prev = sigma;
    sigma = yn;
    if (it > 0 && std::abs(sigma - prev) <= 1e-10 * std::max(sigma, 1e-300)) {
      break;
    }
  }
  // one last application for an accurate Rayleigh value
  return norm2(matvec(a, x));
}

int numeric_rank(const ComplexMatrix& a, double tol) {
  const SvdResult s = svd(a);
  if (s.singular_values.empty()) return 0;
  const double smax = s.singular_values.front();
  if (smax == 0.0) return 0;
  int r = 0;
  for (double x : s.singular_values) {
    if (x > tol * smax) ++r;
  }
  return r;
}

}  // namespace dcnn
