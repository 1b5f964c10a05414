#include "dcnn/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dcnn/optimizer.hpp"
#include "dcnn/rng.hpp"

namespace dcnn {

namespace {

CVec factor_matvec(const Factor& f, const CVec& x) {
  if (f.kind == FactorKind::kCirculant) {
    return circ_matvec(CirculantMatrix(f.values), x);
  }
  CVec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = f.values[i] * x[i];
  return y;
}

Factor transpose_factor(const Factor& f) {
  if (f.kind == FactorKind::kDiagonal) return f;
  const int n = static_cast<int>(f.values.size());
  Factor out{FactorKind::kCirculant, CVec(n)};
  for (int j = 0; j < n; ++j) out.values[j] = f.values[mod_index(n - j, n)];
  return out;
}

Factor identity_factor(FactorKind kind, int n) {
  if (kind == FactorKind::kDiagonal) {
    return {FactorKind::kDiagonal, CVec(n, Complex{1.0, 0.0})};
  }
  CVec c(n, Complex{});
  c[0] = 1.0;
  return {FactorKind::kCirculant, std::move(c)};
}

// Left-multiply every column of m by the factor.
void factor_apply_columns(const Factor& f, ComplexMatrix& m) {
  const int n = m.rows;
  if (f.kind == FactorKind::kDiagonal) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m.cols; ++j) m.at(i, j) *= f.values[i];
    }
    return;
  }
  const CVec spec = dft(f.values);
  CVec col(n);
  for (int j = 0; j < m.cols; ++j) {
    for (int i = 0; i < n; ++i) col[i] = m.at(i, j);
    CVec fc = dft(col);
    for (int i = 0; i < n; ++i) fc[i] *= spec[i];
    col = idft(fc);
    for (int i = 0; i < n; ++i) m.at(i, j) = col[i];
  }
}

// Right-multiply m by the factor (rows transform through the transpose).
void factor_apply_rows(ComplexMatrix& m, const Factor& f) {
  const int n = m.cols;
  if (f.kind == FactorKind::kDiagonal) {
    for (int i = 0; i < m.rows; ++i) {
      for (int j = 0; j < n; ++j) m.at(i, j) *= f.values[j];
    }
    return;
  }
  const Factor ft = transpose_factor(f);
  const CVec spec = dft(ft.values);
  CVec row(n);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < n; ++j) row[j] = m.at(i, j);
    CVec fr = dft(row);
    for (int j = 0; j < n; ++j) fr[j] *= spec[j];
    row = idft(fr);
    for (int j = 0; j < n; ++j) m.at(i, j) = row[j];
  }
}

ComplexMatrix materialize_chain(const std::vector<Factor>& factors, int n) {
  ComplexMatrix m = ComplexMatrix::identity(n);
  for (auto it = factors.rbegin(); it != factors.rend(); ++it) {
    factor_apply_columns(*it, m);
  }
  return m;
}

double rel_operator_error(const ComplexMatrix& got, const ComplexMatrix& want) {
  const double denom = operator_norm(want);
  const double err = operator_norm(subtract(got, want));
  return denom > 0.0 ? err / denom : err;
}

// Gaussian elimination with partial pivoting; h is destroyed.
CVec solve_linear(ComplexMatrix h, CVec rhs) {
  const int n = h.rows;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    double best = std::abs(h.at(col, col));
    for (int r = col + 1; r < n; ++r) {
      const double mag = std::abs(h.at(r, col));
      if (mag > best) {
        best = mag;
        pivot = r;
      }
    }
    if (best == 0.0) throw NumericalError("solve_linear: singular system");
    if (pivot != col) {
      for (int j = 0; j < n; ++j) std::swap(h.at(col, j), h.at(pivot, j));
      std::swap(rhs[col], rhs[pivot]);
    }
    const Complex inv = 1.0 / h.at(col, col);
    for (int r = col + 1; r < n; ++r) {
      const Complex factor = h.at(r, col) * inv;
      if (factor == Complex{}) continue;
      for (int j = col; j < n; ++j) h.at(r, j) -= factor * h.at(col, j);
      rhs[r] -= factor * rhs[col];
    }
  }
  CVec x(n);
  for (int r = n - 1; r >= 0; --r) {
    Complex acc = rhs[r];
    for (int j = r + 1; j < n; ++j) acc -= h.at(r, j) * x[j];
    x[r] = acc / h.at(r, r);
  }
  return x;
}

}  // namespace

CVec FactorSequence::apply(const CVec& x) const {
  CVec h = x;
  for (auto it = factors.rbegin(); it != factors.rend(); ++it) {
    h = factor_matvec(*it, h);
  }
  return h;
}

ComplexMatrix FactorSequence::materialized() const {
  return materialize_chain(factors, width);
}

void FactorSequence::validate_alternation() const {
  for (size_t i = 0; i < factors.size(); ++i) {
    const FactorKind want =
        (i % 2 == 0) ? FactorKind::kDiagonal : FactorKind::kCirculant;
    if (factors[i].kind != want) {
      throw std::invalid_argument("FactorSequence: alternation violated");
    }
    if (static_cast<int>(factors[i].values.size()) != width) {
      throw std::invalid_argument("FactorSequence: width mismatch");
    }
  }
}

FactorSequence transpose(const FactorSequence& fs) {
  FactorSequence out;
  out.width = fs.width;
  out.reconstruction_error = fs.reconstruction_error;
  out.factors.reserve(fs.factors.size());
  for (auto it = fs.factors.rbegin(); it != fs.factors.rend(); ++it) {
    out.factors.push_back(transpose_factor(*it));
  }
  return out;
}

int ShiftedDiagSum::shift_range() const {
  int r = 0;
  for (const auto& [shift, diag] : terms) r = std::max(r, shift + 1);
  return r;
}

CVec ShiftedDiagSum::apply(const CVec& x) const {
  CVec y(x.size(), Complex{});
  for (const auto& [shift, diag] : terms) {
    const CVec shifted = shift_apply(x, shift);
    for (size_t i = 0; i < y.size(); ++i) y[i] += diag[i] * shifted[i];
  }
  return y;
}

ComplexMatrix ShiftedDiagSum::materialized() const {
  ComplexMatrix m(width, width);
  for (const auto& [shift, diag] : terms) {
    for (int t = 0; t < width; ++t) {
      m.at(t, mod_index(t - shift, width)) += diag[t];
    }
  }
  return m;
}

ShiftedDiagSum shifted_diag_decompose(const ComplexMatrix& a) {
  if (!a.square()) throw std::invalid_argument("shifted_diag_decompose: square only");
  const int n = a.rows;
  ShiftedDiagSum out;
  out.width = n;
  for (int p = 0; p < n; ++p) {
    CVec diag(n);
    bool nonzero = false;
    for (int t = 0; t < n; ++t) {
      diag[t] = a.at(t, mod_index(t - p, n));
      nonzero = nonzero || diag[t] != Complex{};
    }
    if (nonzero) out.terms.emplace_back(p, std::move(diag));
  }
  return out;
}

CirculantMatrix choose_r(int n, int k) {
  if (k < 1 || n < 1 || n % k != 0) {
    throw std::invalid_argument("choose_r: k must divide n");
  }
  CVec c(n, Complex{});
  for (int j = k - 1; j < n; j += k) c[j] = 1.0;  // 1-based positions k, 2k, ...
  return CirculantMatrix(std::move(c));
}

DiagonalMatrix projection_O(int n, int k) {
  if (k < 0 || k > n) throw std::invalid_argument("projection_O: k out of range");
  CVec d(n, Complex{});
  for (int i = 0; i < k; ++i) d[i] = 1.0;
  return DiagonalMatrix(std::move(d));
}

ShiftedDiagSum solve_w(const ComplexMatrix& u, const CirculantMatrix& r,
                       const DiagonalMatrix& o, int k) {
  if (!u.square()) throw std::invalid_argument("solve_w: square only");
  const int n = u.rows;
  if (k < 1 || n % k != 0) throw std::invalid_argument("solve_w: k must divide n");
  if (r.size() != n || o.size() != n) {
    throw std::invalid_argument("solve_w: operand width mismatch");
  }
  for (int i = 0; i < n; ++i) {
    const double want = i < k ? 1.0 : 0.0;
    if (std::abs(o.entries[i] - Complex(want, 0.0)) > 1e-12) {
      throw std::invalid_argument("solve_w: o must project onto the first k coords");
    }
  }
  double tail = 0.0, total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double mag = std::norm(u.at(i, j));
      total += mag;
      if (j >= k) tail += mag;
    }
  }
  if (tail > 1e-20 * std::max(total, 1e-300) && tail > 1e-10 * total) {
    throw std::invalid_argument("solve_w: last n-k columns of u must vanish");
  }

  std::vector<CVec> diagonals(k, CVec(n));
  ComplexMatrix block(k, k);
  CVec rhs(k);
  for (int t = 0; t < n; ++t) {
    for (int m = 0; m < k; ++m) {
      rhs[m] = u.at(t, m);
      for (int p = 0; p < k; ++p) {
        block.at(m, p) = r.coeffs()[mod_index(t - p - m, n)];
      }
    }
    CVec d;
    try {
      d = solve_linear(block, rhs);
    } catch (const NumericalError&) {
      throw NumericalError("solve_w: singular per-row block");
    }
    for (int p = 0; p < k; ++p) diagonals[p][t] = d[p];
  }

  ShiftedDiagSum out;
  out.width = n;
  for (int p = 0; p < k; ++p) out.terms.emplace_back(p, std::move(diagonals[p]));
  return out;
}

RankReduction rank_reduce(const ComplexMatrix& a, int k, double rank_tol) {
  if (!a.square()) throw std::invalid_argument("rank_reduce: square only");
  const int n = a.rows;
  if (k < 1 || n % k != 0) {
    throw std::invalid_argument("rank_reduce: k must divide n");
  }
  if (numeric_rank(a, rank_tol) > k) {
    throw std::invalid_argument("rank_reduce: numeric rank exceeds k");
  }

  const SvdResult s = svd(a);
  ComplexMatrix u_trunc(n, n);
  ComplexMatrix vt_trunc(n, n);  // conj(V), plain-transpose convention
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      u_trunc.at(i, j) = s.u.at(i, j);
      vt_trunc.at(i, j) = std::conj(s.v.at(i, j));
    }
  }

  RankReduction out;
  out.k = k;
  out.r = choose_r(n, k);
  out.o = projection_O(n, k);
  CVec sig(n, Complex{});
  for (int i = 0; i < k; ++i) sig[i] = s.singular_values[i];
  out.sigma = DiagonalMatrix(std::move(sig));
  out.w = solve_w(u_trunc, out.r, out.o, k);
  out.wp = solve_w(vt_trunc, out.r, out.o, k);

  // reconstruction W R (O S O^T) R^T W'^T
  const ComplexMatrix rm = materialize(out.r);
  const ComplexMatrix mid = materialize(out.sigma);
  ComplexMatrix recon = matmul(out.w.materialized(), rm);
  recon = matmul(recon, mid);
  recon = matmul(recon, transpose(rm));
  recon = matmul(recon, transpose(out.wp.materialized()));
  out.reconstruction_error = rel_operator_error(recon, a);
  return out;
}

namespace {

// ---- alternating-product least-squares fitter ----

struct FitResult {
  std::vector<Factor> factors;
  double frob_rel = 0.0;
};

double frob_rel_error(const ComplexMatrix& got, const ComplexMatrix& want,
                      double want_frob) {
  double acc = 0.0;
  for (size_t i = 0; i < got.data.size(); ++i) {
    acc += std::norm(got.data[i] - want.data[i]);
  }
  const double err = std::sqrt(acc);
  return want_frob > 0.0 ? err / want_frob : err;
}

// Frobenius-closest circulant: average along wrapped diagonals.
CVec circulant_average(const ComplexMatrix& t) {
  const int n = t.rows;
  CVec c(n, Complex{});
  for (int p = 0; p < n; ++p) {
    Complex acc{};
    for (int i = 0; i < n; ++i) acc += t.at(i, mod_index(i - p, n));
    c[p] = acc / static_cast<double>(n);
  }
  return c;
}

void idft_rows(ComplexMatrix& m) {
  CVec row(m.cols);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) row[j] = m.at(i, j);
    row = idft(row);
    for (int j = 0; j < m.cols; ++j) m.at(i, j) = row[j];
  }
}

void dft_cols(ComplexMatrix& m) {
  CVec col(m.rows);
  for (int j = 0; j < m.cols; ++j) {
    for (int i = 0; i < m.rows; ++i) col[i] = m.at(i, j);
    col = dft(col);
    for (int i = 0; i < m.rows; ++i) m.at(i, j) = col[i];
  }
}

// Exact least-squares update of one factor with the rest fixed:
// minimize || BL diag(d) BR - T ||_F over d.
CVec solve_factor_ls(const ComplexMatrix& bl, const ComplexMatrix& br,
                     const ComplexMatrix& t, double tikhonov) {
  const int n = bl.rows;
  ComplexMatrix h(n, n);
  for (int m = 0; m < n; ++m) {
    for (int mp = 0; mp < n; ++mp) {
      Complex gl{};
      for (int i = 0; i < n; ++i) gl += std::conj(bl.at(i, m)) * bl.at(i, mp);
      Complex gr{};
      for (int j = 0; j < n; ++j) gr += std::conj(br.at(m, j)) * br.at(mp, j);
      h.at(m, mp) = gl * gr;
    }
  }
  CVec beta(n, Complex{});
  for (int m = 0; m < n; ++m) {
    for (int j = 0; j < n; ++j) {
      Complex m1{};
      for (int i = 0; i < n; ++i) m1 += std::conj(bl.at(i, m)) * t.at(i, j);
      beta[m] += m1 * std::conj(br.at(m, j));
    }
  }
  double peak = 0.0;
  for (int m = 0; m < n; ++m) peak = std::max(peak, std::abs(h.at(m, m)));
  const Complex reg(tikhonov * peak + 1e-300, 0.0);
  for (int m = 0; m < n; ++m) h.at(m, m) += reg;
  return solve_linear(std::move(h), std::move(beta));
}

// One left-to-right sweep of exact per-factor updates.
void als_sweep(std::vector<Factor>& factors, const ComplexMatrix& target,
               double tikhonov) {
  const int n = target.rows;
  const int m = static_cast<int>(factors.size());
  std::vector<ComplexMatrix> suffix(m + 1);
  suffix[m] = ComplexMatrix::identity(n);
  for (int j = m - 1; j >= 0; --j) {
    suffix[j] = suffix[j + 1];
    // prepend factor j: suffix[j] = F_j * suffix[j+1]
    factor_apply_columns(factors[j], suffix[j]);
  }
  ComplexMatrix prefix = ComplexMatrix::identity(n);
  for (int j = 0; j < m; ++j) {
    if (factors[j].kind == FactorKind::kDiagonal) {
      factors[j].values =
          solve_factor_ls(prefix, suffix[j + 1], target, tikhonov);
    } else {
      ComplexMatrix bl = prefix;
      idft_rows(bl);
      ComplexMatrix br = suffix[j + 1];
      dft_cols(br);
      factors[j].values = idft(solve_factor_ls(bl, br, target, tikhonov));
    }
    factor_apply_rows(prefix, factors[j]);
  }
}

// Reverse-mode gradient of 0.5 || product - target ||_F^2 in the flat
// (re, im) parameter layout, matching the training-style pair convention.
void chain_gradient(const std::vector<Factor>& factors,
                    const ComplexMatrix& target, double* loss_out,
                    std::vector<double>& grad_flat) {
  const int n = target.rows;
  const int m = static_cast<int>(factors.size());
  // forward in application order (rightmost factor first)
  std::vector<ComplexMatrix> acts(m + 1);
  acts[0] = ComplexMatrix::identity(n);
  for (int i = 0; i < m; ++i) {
    acts[i + 1] = acts[i];
    factor_apply_columns(factors[m - 1 - i], acts[i + 1]);
  }
  ComplexMatrix g = subtract(acts[m], target);
  double loss = 0.0;
  for (const Complex& z : g.data) loss += 0.5 * std::norm(z);
  if (loss_out) *loss_out = loss;

  std::fill(grad_flat.begin(), grad_flat.end(), 0.0);
  CVec cola(n), colg(n);
  for (int i = m - 1; i >= 0; --i) {
    const int fi = m - 1 - i;
    const Factor& f = factors[fi];
    double* gslot = grad_flat.data() + static_cast<size_t>(fi) * 2 * n;
    if (f.kind == FactorKind::kDiagonal) {
      for (int r = 0; r < n; ++r) {
        Complex acc{};
        for (int j = 0; j < n; ++j) acc += g.at(r, j) * std::conj(acts[i].at(r, j));
        gslot[2 * r] += acc.real();
        gslot[2 * r + 1] += acc.imag();
        const Complex dc = std::conj(f.values[r]);
        for (int j = 0; j < n; ++j) g.at(r, j) *= dc;
      }
    } else {
      for (int j = 0; j < n; ++j) {
        for (int r = 0; r < n; ++r) {
          cola[r] = acts[i].at(r, j);
          colg[r] = g.at(r, j);
        }
        const CVec gc = circular_correlation(colg, cola);
        for (int r = 0; r < n; ++r) {
          gslot[2 * r] += gc[r].real();
          gslot[2 * r + 1] += gc[r].imag();
        }
        const CVec down = circular_correlation(colg, f.values);
        for (int r = 0; r < n; ++r) g.at(r, j) = down[r];
      }
    }
  }
}

std::vector<double> flatten_factors(const std::vector<Factor>& factors, int n) {
  std::vector<double> out(factors.size() * 2 * n);
  for (size_t f = 0; f < factors.size(); ++f) {
    for (int i = 0; i < n; ++i) {
      out[f * 2 * n + 2 * i] = factors[f].values[i].real();
      out[f * 2 * n + 2 * i + 1] = factors[f].values[i].imag();
    }
  }
  return out;
}

void unflatten_factors(const std::vector<double>& flat,
                       std::vector<Factor>& factors, int n) {
  for (size_t f = 0; f < factors.size(); ++f) {
    for (int i = 0; i < n; ++i) {
      factors[f].values[i] =
          Complex(flat[f * 2 * n + 2 * i], flat[f * 2 * n + 2 * i + 1]);
    }
  }
}

std::vector<Factor> init_chain(const std::vector<FactorKind>& kinds,
                               const ComplexMatrix& target, int restart,
                               CounterRng& rng) {
  const int n = target.rows;
  std::vector<Factor> factors;
  factors.reserve(kinds.size());
  for (FactorKind kind : kinds) factors.push_back(identity_factor(kind, n));

  if (restart < 3) {
    // seed the first circulant with the closest circulant to the target,
    // then perturb the remaining factors to break symmetry
    for (Factor& f : factors) {
      if (f.kind == FactorKind::kCirculant) {
        f.values = circulant_average(target);
        break;
      }
    }
    const double noise = restart == 0 ? 0.02 : (restart == 1 ? 0.1 : 0.3);
    bool first_circ = true;
    for (Factor& f : factors) {
      if (f.kind == FactorKind::kCirculant && first_circ) {
        first_circ = false;
        continue;
      }
      for (Complex& v : f.values) {
        v += Complex(noise * rng.normal(), noise * rng.normal());
      }
    }
  } else {
    double tfrob = 0.0;
    for (const Complex& z : target.data) tfrob += std::norm(z);
    tfrob = std::sqrt(tfrob);
    const double scale =
        std::pow(std::max(tfrob, 1e-12) / std::sqrt(static_cast<double>(n)),
                 1.0 / static_cast<double>(kinds.size()));
    for (Factor& f : factors) {
      for (Complex& v : f.values) {
        v = Complex(scale * rng.normal(), scale * rng.normal());
      }
    }
  }
  return factors;
}

// Fits an alternating chain of the given kinds to the dense target.
// Best-effort: returns the best factors found across restarts along with
// the relative Frobenius error; never throws on a missed target. When a
// warm start is supplied (the exact peeling chain) it is polished first and
// random restarts only run if it misses the target.
FitResult fit_chain(const std::vector<FactorKind>& kinds,
                    const ComplexMatrix& target, double frob_rel_target,
                    const FitOptions& opts,
                    const std::vector<Factor>* warm_start = nullptr) {
  const int n = target.rows;
  double tfrob = 0.0;
  for (const Complex& z : target.data) tfrob += std::norm(z);
  tfrob = std::sqrt(tfrob);

  FitResult best;
  best.frob_rel = std::numeric_limits<double>::infinity();

  if (tfrob == 0.0) {
    // zero target: zero out one circulant, identity elsewhere
    std::vector<Factor> factors;
    for (FactorKind kind : kinds) factors.push_back(identity_factor(kind, n));
    for (Factor& f : factors) {
      if (f.kind == FactorKind::kCirculant) {
        std::fill(f.values.begin(), f.values.end(), Complex{});
        break;
      }
    }
    return {std::move(factors), 0.0};
  }

  const bool have_warm =
      warm_start != nullptr && warm_start->size() == kinds.size();
  const int first = have_warm ? -1 : 0;
  for (int restart = first; restart < std::max(1, opts.restarts); ++restart) {
    CounterRng rng(opts.seed, 0xF17 + static_cast<uint64_t>(restart + 1));
    std::vector<Factor> factors =
        restart < 0 ? *warm_start : init_chain(kinds, target, restart, rng);

    if (restart >= 0 && opts.adam_steps > 0) {
      std::vector<double> params = flatten_factors(factors, n);
      std::vector<double> grads(params.size());
      AdamOptimizer adam(params.size());
      for (int step = 0; step < opts.adam_steps; ++step) {
        chain_gradient(factors, target, nullptr, grads);
        adam.step(params, grads, opts.adam_lr);
        unflatten_factors(params, factors, n);
      }
    }

    double prev = std::numeric_limits<double>::infinity();
    int stalled = 0;
    double err = frob_rel_error(materialize_chain(factors, n), target, tfrob);
    for (int sweep = 0; sweep < opts.als_sweeps && err > frob_rel_target;
         ++sweep) {
      als_sweep(factors, target, opts.tikhonov);
      err = frob_rel_error(materialize_chain(factors, n), target, tfrob);
      stalled = (prev - err < opts.stall_improvement * prev) ? stalled + 1 : 0;
      if (stalled >= opts.stall_sweeps) break;
      prev = err;
    }
    if (err < best.frob_rel) {
      best.frob_rel = err;
      best.factors = factors;
    }
    if (best.frob_rel <= frob_rel_target) break;
  }
  return best;
}

// ---- exact peeling initializer ----
//
// A k-range sum factors (generically) as L * Q with L linear in the shift
// and Q of range k-1. Two gauges are tried:
//   bottom: L = I + diag(B) S, q_0 = d_0, q_p = d_p - B .* shift(q_{p-1}),
//           constraint F(B) = B .* shift(q_{k-2}) - d_{k-1} = 0;
//   top:    L = diag(B) + S,  q_{k-2} = unshift(d_{k-1}),
//           q_{p-1} = unshift(d_p - B .* q_p),
//           constraint F(B) = B .* q_0 - d_0 = 0.
// Each is a cyclic polynomial system solved by damped Newton. A peeled
// linear factor rewrites exactly as diag * circ(e0 + gamma e1) * diag, so
// the sum collapses to a 2k-1 chain that seeds the least-squares polish.

CVec shift1(const CVec& x) { return shift_apply(x, 1); }
CVec unshift1(const CVec& x) { return shift_apply(x, -1); }

enum class PeelGauge { kBottom, kTop };

struct PeelEval {
  CVec f;
  std::vector<CVec> q;
};

// Bottom gauge: L = diag(g) + diag(B) S; top gauge: L = diag(B) + S.
PeelEval peel_eval(const std::vector<CVec>& d, const CVec& b, const CVec& g,
                   int n, PeelGauge gauge) {
  const int k = static_cast<int>(d.size());
  PeelEval out;
  out.q.resize(k - 1);
  out.f.resize(n);
  if (gauge == PeelGauge::kBottom) {
    out.q[0].resize(n);
    for (int t = 0; t < n; ++t) out.q[0][t] = d[0][t] / g[t];
    for (int p = 1; p <= k - 2; ++p) {
      const CVec qs = shift1(out.q[p - 1]);
      out.q[p].resize(n);
      for (int t = 0; t < n; ++t) {
        out.q[p][t] = (d[p][t] - b[t] * qs[t]) / g[t];
      }
    }
    const CVec qs = shift1(out.q[k - 2]);
    for (int t = 0; t < n; ++t) out.f[t] = b[t] * qs[t] - d[k - 1][t];
  } else {
    out.q[k - 2] = unshift1(d[k - 1]);
    for (int p = k - 2; p >= 1; --p) {
      CVec tmp(n);
      for (int t = 0; t < n; ++t) tmp[t] = d[p][t] - b[t] * out.q[p][t];
      out.q[p - 1] = unshift1(tmp);
    }
    for (int t = 0; t < n; ++t) out.f[t] = b[t] * out.q[0][t] - d[0][t];
  }
  return out;
}

ComplexMatrix peel_jacobian(const CVec& b, const CVec& g, const PeelEval& ev,
                            int n, PeelGauge gauge) {
  const int k = static_cast<int>(ev.q.size()) + 1;
  ComplexMatrix jq(n, n);  // d q_anchor / d b = 0
  ComplexMatrix jf(n, n);
  if (gauge == PeelGauge::kBottom) {
    for (int p = 1; p <= k - 2; ++p) {
      const CVec qs = shift1(ev.q[p - 1]);
      ComplexMatrix jnext(n, n);
      for (int t = 0; t < n; ++t) {
        const int tm = mod_index(t - 1, n);
        const Complex inv_g = 1.0 / g[t];
        for (int s = 0; s < n; ++s) {
          jnext.at(t, s) = -b[t] * jq.at(tm, s) * inv_g;
        }
        jnext.at(t, t) -= qs[t] * inv_g;
      }
      jq = std::move(jnext);
    }
    const CVec qs = shift1(ev.q[k - 2]);
    for (int t = 0; t < n; ++t) {
      const int tm = mod_index(t - 1, n);
      for (int s = 0; s < n; ++s) jf.at(t, s) = b[t] * jq.at(tm, s);
      jf.at(t, t) += qs[t];
    }
  } else {
    for (int p = k - 2; p >= 1; --p) {
      ComplexMatrix jnext(n, n);
      for (int t = 0; t < n; ++t) {
        const int tp = mod_index(t + 1, n);
        for (int s = 0; s < n; ++s) jnext.at(t, s) = -b[tp] * jq.at(tp, s);
        jnext.at(t, tp) -= ev.q[p][tp];
      }
      jq = std::move(jnext);
    }
    for (int t = 0; t < n; ++t) {
      for (int s = 0; s < n; ++s) jf.at(t, s) = b[t] * jq.at(t, s);
      jf.at(t, t) += ev.q[0][t];
    }
  }
  return jf;
}

double vec_norm_inf(const CVec& v) {
  double m = 0.0;
  for (const Complex& z : v) m = std::max(m, std::abs(z));
  return m;
}

double median_magnitude(const CVec& v) {
  std::vector<double> mags(v.size());
  for (size_t i = 0; i < v.size(); ++i) mags[i] = std::abs(v[i]);
  std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
  return mags[mags.size() / 2];
}

// Newton solve of F(B) = 0 across gauges and starts. On success the peeled
// linear factor is diag(g) (I + diag(lin) S) with lin = B ./ g (bottom) or
// diag(B) (I + diag(1/B) S) (top); g_out carries the merged diagonal.
bool peel_newton(const std::vector<CVec>& d, int n, CVec& lin_out, CVec& g_out,
                 std::vector<CVec>& q_out, uint64_t seed) {
  const int k = static_cast<int>(d.size());
  const double scale = std::clamp(
      median_magnitude(d[k - 1]) / std::max(median_magnitude(d[k - 2]), 1e-12),
      0.05, 20.0);

  for (int attempt = 0; attempt < 10; ++attempt) {
    const PeelGauge gauge = (attempt == 1 || attempt == 9) ? PeelGauge::kTop
                                                           : PeelGauge::kBottom;
    CounterRng rng(seed, 0xBEE1 + 16 * static_cast<uint64_t>(attempt));
    CVec g(n, Complex{1.0, 0.0});
    if (gauge == PeelGauge::kBottom && attempt >= 2 && attempt <= 7) {
      // random gauge diversifies the Newton basins
      for (Complex& z : g) {
        z = std::polar(0.4 + std::abs(rng.normal()),
                       rng.uniform(-3.14159, 3.14159));
      }
    }
    CVec b(n, Complex{});
    if (attempt == 8 || attempt == 9) {
      for (Complex& z : b) {
        z = Complex(scale * rng.normal(), scale * rng.normal());
      }
    }
    const CVec& anchor = gauge == PeelGauge::kBottom ? d[k - 1] : d[0];
    const double tol = 1e-12 * std::max(1.0, vec_norm_inf(anchor));

    PeelEval ev = peel_eval(d, b, g, n, gauge);
    double fnorm = norm2(ev.f);
    for (int iter = 0; iter < 80 && fnorm > tol; ++iter) {
      CVec rhs(n);
      for (int t = 0; t < n; ++t) rhs[t] = -ev.f[t];
      CVec delta;
      try {
        delta = solve_linear(peel_jacobian(b, g, ev, n, gauge), std::move(rhs));
      } catch (const NumericalError&) {
        break;
      }
      double lambda = 1.0;
      bool stepped = false;
      for (int bt = 0; bt < 30; ++bt) {
        CVec trial_b(n);
        for (int t = 0; t < n; ++t) trial_b[t] = b[t] + lambda * delta[t];
        PeelEval trial = peel_eval(d, trial_b, g, n, gauge);
        const double tn = norm2(trial.f);
        if (tn < fnorm * (1.0 - 1e-4 * lambda)) {
          b = std::move(trial_b);
          ev = std::move(trial);
          fnorm = tn;
          stepped = true;
          break;
        }
        lambda *= 0.5;
      }
      if (!stepped) break;
    }
    if (fnorm > tol) continue;

    CVec lin(n);
    CVec gmerge(n);
    bool usable = true;
    if (gauge == PeelGauge::kBottom) {
      for (int t = 0; t < n && usable; ++t) {
        lin[t] = b[t] / g[t];
        gmerge[t] = g[t];
      }
    } else {
      for (int t = 0; t < n && usable; ++t) {
        if (std::abs(b[t]) < 1e-12) usable = false;
        else {
          lin[t] = 1.0 / b[t];
          gmerge[t] = b[t];
        }
      }
    }
    if (!usable) continue;
    lin_out = std::move(lin);
    g_out = std::move(gmerge);
    q_out = std::move(ev.q);
    return true;
  }
  return false;
}

#ifdef DCNN_FIT_DEBUG
#define FITDBG(...) std::fprintf(stderr, __VA_ARGS__)
#else
#define FITDBG(...)
#endif

// (I + diag(B) S) = diag(a) circ(e0 + gamma e1) diag(bv), following the
// cyclic ratio recurrence; fails when B has (near-)zero entries or the
// cumulative products overflow a reasonable dynamic range.
bool linear_factor_to_dcd(const CVec& b, int n, CVec& a_out, Complex& gamma_out,
                          CVec& bv_out) {
  double min_mag = std::numeric_limits<double>::infinity();
  Complex log_acc{};
  for (const Complex& z : b) {
    min_mag = std::min(min_mag, std::abs(z));
    if (std::abs(z) > 0.0) log_acc += std::log(z);
  }
  if (min_mag < 1e-10) { FITDBG("dcd: tiny B entry %.2e\n", min_mag); return false; }
  const Complex gamma = std::exp(log_acc / static_cast<double>(n));

  // bv[t-1] = bv[t] * B[t] / gamma, bv[n-1] = 1; track log magnitude range
  CVec bv(n);
  bv[n - 1] = 1.0;
  double max_log = 0.0, min_log = 0.0;
  for (int t = n - 1; t >= 1; --t) {
    bv[t - 1] = bv[t] * b[t] / gamma;
    const double lg = std::log(std::abs(bv[t - 1]));
    max_log = std::max(max_log, lg);
    min_log = std::min(min_log, lg);
  }
  if (max_log - min_log > 27.0) {
    FITDBG("dcd: dynamic range %.1f\n", max_log - min_log);
    return false;
  }
  // closure check: the recurrence must wrap consistently (it does by the
  // choice of gamma, up to roundoff)
  const Complex wrap = bv[0] * b[0] / gamma;
  if (std::abs(wrap - bv[n - 1]) > 1e-8 * std::abs(bv[n - 1])) {
    FITDBG("dcd: wrap mismatch %.2e\n",
           std::abs(wrap - bv[n - 1]) / std::abs(bv[n - 1]));
    return false;
  }

  CVec a(n);
  for (int t = 0; t < n; ++t) a[t] = 1.0 / bv[t];
  a_out = std::move(a);
  bv_out = std::move(bv);
  gamma_out = gamma;
  return true;
}

// Durand-Kerner roots of a dense polynomial c_0 + c_1 z + ... + c_m z^m.
std::vector<Complex> poly_roots(const std::vector<Complex>& coeffs) {
  int m = static_cast<int>(coeffs.size()) - 1;
  while (m > 0 && std::abs(coeffs[m]) == 0.0) --m;
  if (m < 1) return {};
  const auto eval = [&](Complex z) {
    Complex acc{};
    for (int p = m; p >= 0; --p) acc = acc * z + coeffs[p];
    return acc;
  };
  double radius = 0.0;
  for (int p = 0; p < m; ++p) {
    radius = std::max(radius, std::abs(coeffs[p] / coeffs[m]));
  }
  radius = 1.0 + radius;
  std::vector<Complex> z(m);
  for (int i = 0; i < m; ++i) {
    z[i] = std::polar(0.5 * radius * (1.0 + 0.3 * i / m), 0.7 + 2.399 * i);
  }
  for (int iter = 0; iter < 400; ++iter) {
    double moved = 0.0;
    for (int i = 0; i < m; ++i) {
      Complex denom = coeffs[m];
      for (int j = 0; j < m; ++j) {
        if (j != i) denom *= z[i] - z[j];
      }
      if (std::abs(denom) < 1e-300) continue;
      const Complex delta = eval(z[i]) / denom;
      z[i] -= delta;
      moved = std::max(moved, std::abs(delta));
    }
    if (moved < 1e-14 * radius) break;
  }
  return z;
}

// Peels one linear factor by continuation: the constant-coefficient sum
// built from the diagonal means factors exactly via polynomial roots, and a
// Newton-tracked homotopy carries that root to the true target.
bool peel_continuation(const std::vector<CVec>& d, int n, CVec& lin_out,
                       CVec& g_out, std::vector<CVec>& q_out, uint64_t seed) {
  const int r = static_cast<int>(d.size());
  std::vector<Complex> means(r);
  double scale = 0.0;
  for (int p = 0; p < r; ++p) {
    Complex acc{};
    for (const Complex& v : d[p]) acc += v;
    means[p] = acc / static_cast<double>(n);
    scale = std::max(scale, std::abs(means[p]));
  }
  CounterRng rng(seed, 0xC0117);
  for (int p = 0; p < r; ++p) {
    // keep the easy problem nondegenerate
    if (std::abs(means[p]) < 1e-3 * std::max(scale, 1e-12)) {
      means[p] += Complex(0.01 * scale * (1.0 + rng.uniform01()),
                          0.01 * scale * rng.uniform01());
    }
  }
  std::vector<Complex> roots = poly_roots(means);
  if (roots.empty()) return false;
  std::stable_sort(roots.begin(), roots.end(), [](Complex a, Complex b) {
    return std::abs(a) > std::abs(b);
  });

  const CVec g(n, Complex{1.0, 0.0});
  std::vector<CVec> easy(r);
  for (int p = 0; p < r; ++p) easy[p] = CVec(n, means[p]);

  for (const Complex& root : roots) {
    if (std::abs(root) < 1e-10) continue;
    CVec b(n, -1.0 / root);
    double tau = 0.0, step = 0.25;
    bool dead = false;
    while (tau < 1.0 && !dead) {
      const double next = std::min(1.0, tau + step);
      std::vector<CVec> mix(r, CVec(n));
      for (int p = 0; p < r; ++p) {
        for (int t = 0; t < n; ++t) {
          mix[p][t] = (1.0 - next) * easy[p][t] + next * d[p][t];
        }
      }
      const double tol = 1e-12 * std::max(1.0, vec_norm_inf(mix[r - 1]));
      CVec bt = b;
      PeelEval ev = peel_eval(mix, bt, g, n, PeelGauge::kBottom);
      double fnorm = norm2(ev.f);
      bool converged = fnorm <= tol;
      for (int iter = 0; iter < 25 && !converged; ++iter) {
        CVec rhs(n);
        for (int t = 0; t < n; ++t) rhs[t] = -ev.f[t];
        CVec delta;
        try {
          delta = solve_linear(peel_jacobian(bt, g, ev, n, PeelGauge::kBottom),
                               std::move(rhs));
        } catch (const NumericalError&) {
          break;
        }
        double lambda = 1.0;
        bool stepped = false;
        for (int bs = 0; bs < 20; ++bs) {
          CVec trial(n);
          for (int t = 0; t < n; ++t) trial[t] = bt[t] + lambda * delta[t];
          PeelEval tev = peel_eval(mix, trial, g, n, PeelGauge::kBottom);
          const double tn = norm2(tev.f);
          if (tn < fnorm * (1.0 - 1e-4 * lambda)) {
            bt = std::move(trial);
            ev = std::move(tev);
            fnorm = tn;
            stepped = true;
            break;
          }
          lambda *= 0.5;
        }
        if (!stepped) break;
        converged = fnorm <= tol;
      }
      if (converged) {
        b = std::move(bt);
        tau = next;
        step = std::min(0.5, step * 1.6);
        if (tau >= 1.0) {
          lin_out = b;
          g_out = g;
          q_out = std::move(ev.q);
          return true;
        }
      } else {
        step *= 0.5;
        if (step < 1e-3) dead = true;
      }
    }
  }
  return false;
}

// Recursive peeling of a k-range sum into an exact prefix chain of linear
// factors plus a (possibly unpeeled) remainder table. complete means the
// remainder collapsed to a single diagonal and was folded into the chain.
struct PeelOutcome {
  std::vector<Factor> chain;
  std::vector<CVec> remainder;
  bool complete = false;
};

PeelOutcome peel_sum(const ShiftedDiagSum& w, uint64_t seed) {
  const int n = w.width;
  PeelOutcome out;
  const int k = w.shift_range();
  if (k < 2) return out;
  std::vector<CVec> d(k, CVec(n, Complex{}));
  for (const auto& [shift, diag] : w.terms) d[shift] = diag;

  const auto merge_diag = [&](const CVec& extra) {
    if (!out.chain.empty() && out.chain.back().kind == FactorKind::kDiagonal) {
      for (int t = 0; t < n; ++t) out.chain.back().values[t] *= extra[t];
    } else {
      out.chain.push_back({FactorKind::kDiagonal, extra});
    }
  };

  while (static_cast<int>(d.size()) > 1) {
    const int range = static_cast<int>(d.size());
    CVec lin, gmerge;
    std::vector<CVec> q;
    bool peeled = false;
    if (range == 2) {
      // closed form: lin = d_1 ./ shift(d_0)
      const CVec q0s = shift1(d[0]);
      lin.resize(n);
      peeled = true;
      for (int t = 0; t < n && peeled; ++t) {
        if (std::abs(q0s[t]) < 1e-14) peeled = false;
        else lin[t] = d[1][t] / q0s[t];
      }
      if (peeled) {
        gmerge = CVec(n, Complex{1.0, 0.0});
        q = {d[0]};
      }
    }
    if (!peeled && range >= 3) {
      peeled = peel_continuation(d, n, lin, gmerge, q, seed);
    }
    if (!peeled) peeled = peel_newton(d, n, lin, gmerge, q, seed);
    if (peeled) {
      CVec a, bv;
      Complex gamma;
      peeled = linear_factor_to_dcd(lin, n, a, gamma, bv);
      if (peeled) {
        merge_diag(gmerge);
        merge_diag(a);
        CVec cc(n, Complex{});
        cc[0] = 1.0;
        cc[1 % n] = gamma;
        out.chain.push_back({FactorKind::kCirculant, std::move(cc)});
        out.chain.push_back({FactorKind::kDiagonal, bv});
      }
    }
    if (!peeled) {
      FITDBG("peel: stuck at range %d\n", range);
      out.remainder = std::move(d);
      return out;
    }
    d = std::move(q);
  }
  // fold the final diagonal into the trailing one
  merge_diag(d[0]);
  out.complete = true;
  return out;
}

std::vector<FactorKind> alternating_kinds(int count) {
  std::vector<FactorKind> kinds(count);
  for (int i = 0; i < count; ++i) {
    kinds[i] = (i % 2 == 0) ? FactorKind::kDiagonal : FactorKind::kCirculant;
  }
  return kinds;
}

// Warm start for the chain fit: exact peeling when it completes, otherwise
// the exact prefix composed with a smaller least-squares fit of the
// remainder (the trailing diagonal of the prefix merges with the remainder
// chain's leading diagonal, keeping the total at 2k-1).
std::vector<Factor> warm_chain(const ShiftedDiagSum& w, const FitOptions& opts) {
  PeelOutcome po = peel_sum(w, opts.seed);
  if (po.complete) return po.chain;
  if (po.chain.empty() || po.remainder.empty()) return {};

  const int n = w.width;
  const int r = static_cast<int>(po.remainder.size());
  ShiftedDiagSum rest;
  rest.width = n;
  for (int p = 0; p < r; ++p) rest.terms.emplace_back(p, po.remainder[p]);
  const ComplexMatrix t = rest.materialized();
  FitOptions sub = opts;
  sub.adam_steps = std::min(opts.adam_steps, 60);
  const double rel = 1e-8 * operator_norm(t) / std::max(frobenius_norm(t), 1e-300);
  FitResult rem = fit_chain(alternating_kinds(2 * r - 1), t, rel, sub);

  std::vector<Factor> chain = po.chain;  // ends with a diagonal
  for (int t2 = 0; t2 < n; ++t2) {
    chain.back().values[t2] *= rem.factors.front().values[t2];
  }
  chain.insert(chain.end(), rem.factors.begin() + 1, rem.factors.end());
  return chain;
}

bool diag_is_constant(const CVec& d) {
  for (const Complex& v : d) {
    if (std::abs(v - d[0]) > 1e-12 * std::max(1.0, std::abs(d[0]))) return false;
  }
  return true;
}

}  // namespace

FactorSequence sum_to_product(const ShiftedDiagSum& w, double eps,
                              const FitOptions& opts) {
  const int n = w.width;
  if (n < 1) throw std::invalid_argument("sum_to_product: empty operand");
  if (n > opts.certificate_max_width) {
    throw std::invalid_argument("sum_to_product: width exceeds certificate cap");
  }
  const int k = std::max(1, w.shift_range());

  FactorSequence out;
  out.width = n;

  if (k == 1) {
    // a 1-term sum is the diagonal itself
    CVec d(n, Complex{});
    if (!w.terms.empty()) d = w.terms.front().second;
    out.factors.push_back({FactorKind::kDiagonal, std::move(d)});
    out.reconstruction_error = 0.0;
    return out;
  }

  // a common shift power factors out as a single circulant: the reduced sum
  // has a nonzero zero-shift term, which the peeling construction needs
  int min_shift = n;
  for (const auto& [shift, diag] : w.terms) min_shift = std::min(min_shift, shift);
  if (!w.terms.empty() && min_shift > 0) {
    ShiftedDiagSum reduced;
    reduced.width = n;
    for (const auto& [shift, diag] : w.terms) {
      reduced.terms.emplace_back(shift - min_shift, diag);
    }
    FactorSequence inner = sum_to_product(reduced, eps, opts);
    out.factors = std::move(inner.factors);
    if (out.factors.back().kind == FactorKind::kDiagonal) {
      CVec shifter(n, Complex{});
      shifter[min_shift] = 1.0;
      out.factors.push_back({FactorKind::kCirculant, std::move(shifter)});
    } else {
      // merge the shift into the trailing circulant
      CirculantMatrix merged = circ_mul(
          CirculantMatrix(out.factors.back().values),
          CirculantMatrix([&] {
            CVec s(n, Complex{});
            s[min_shift] = 1.0;
            return s;
          }()));
      out.factors.back().values = merged.coeffs();
    }
    while (out.count() < 2 * k - 1) {
      if (out.factors.back().kind == FactorKind::kDiagonal) {
        out.factors.push_back(identity_factor(FactorKind::kCirculant, n));
      } else {
        out.factors.push_back(identity_factor(FactorKind::kDiagonal, n));
      }
    }
    out.validate_alternation();
    out.reconstruction_error =
        rel_operator_error(materialize_chain(out.factors, n), w.materialized());
    if (out.reconstruction_error > eps) {
      throw NumericalError("sum_to_product: fit missed the requested error",
                           out.reconstruction_error);
    }
    return out;
  }

  // constant diagonals make the sum itself circulant; collapse exactly
  bool all_constant = true;
  for (const auto& [shift, diag] : w.terms) {
    all_constant = all_constant && diag_is_constant(diag);
  }
  if (all_constant) {
    CVec coeffs(n, Complex{});
    for (const auto& [shift, diag] : w.terms) coeffs[shift] = diag[0];
    out.factors.push_back(identity_factor(FactorKind::kDiagonal, n));
    out.factors.push_back({FactorKind::kCirculant, std::move(coeffs)});
    out.factors.push_back(identity_factor(FactorKind::kDiagonal, n));
    out.reconstruction_error = 0.0;
    return out;
  }

  const ComplexMatrix target = w.materialized();
  const double op_target = operator_norm(target);
  const double frob_rel_target =
      0.9 * eps * op_target /
      std::max(frobenius_norm(target), 1e-300);
  const std::vector<Factor> warm = warm_chain(w, opts);
  const FitResult fit = fit_chain(alternating_kinds(2 * k - 1), target,
                                  frob_rel_target, opts, &warm);

  out.factors = fit.factors;
  out.reconstruction_error = rel_operator_error(materialize_chain(out.factors, n), target);
  if (out.reconstruction_error > eps) {
    throw NumericalError("sum_to_product: fit missed the requested error",
                         out.reconstruction_error);
  }
  return out;
}

FactorSequence full_decompose(const ComplexMatrix& a, int k, double eps,
                              const FitOptions& opts, double rank_tol) {
  if (!a.square()) throw std::invalid_argument("full_decompose: square only");
  const int n = a.rows;
  if (n > opts.certificate_max_width) {
    throw std::invalid_argument("full_decompose: width exceeds certificate cap");
  }
  const RankReduction rr = rank_reduce(a, k, rank_tol);

  FactorSequence out;
  out.width = n;

  // sub-chains for W and W'; the k = 1 chains are bare diagonals and exact
  const auto sub_chain = [&](const ShiftedDiagSum& w) -> std::vector<Factor> {
    if (k == 1) return {{FactorKind::kDiagonal, w.terms.front().second}};
    const ComplexMatrix t = w.materialized();
    const double rel =
        0.25 * eps * operator_norm(t) / std::max(frobenius_norm(t), 1e-300);
    const std::vector<Factor> warm = warm_chain(w, opts);
    return fit_chain(alternating_kinds(2 * k - 1), t, rel, opts, &warm).factors;
  };

  // A = [W chain] R (O S O^T) [R^T] [W'^T chain]: the diagonal-first chains
  // place circulants R and R^T at even positions, so the count is exactly
  // (2k-1) + 3 + (2k-1) = 4k+1 with alternation intact
  out.factors = sub_chain(rr.w);
  out.factors.push_back({FactorKind::kCirculant, rr.r.coeffs()});
  CVec mid(n, Complex{});
  for (int i = 0; i < k; ++i) mid[i] = rr.sigma.entries[i];
  out.factors.push_back({FactorKind::kDiagonal, std::move(mid)});
  out.factors.push_back({FactorKind::kCirculant, transpose(rr.r).coeffs()});
  const std::vector<Factor> vchain = sub_chain(rr.wp);
  for (auto it = vchain.rbegin(); it != vchain.rend(); ++it) {
    out.factors.push_back(transpose_factor(*it));
  }

  // global polish of the assembled chain against A itself
  const double afrob = frobenius_norm(a);
  const double target_abs = 0.9 * eps * operator_norm(a);
  double err = frob_rel_error(materialize_chain(out.factors, n), a,
                              std::max(afrob, 1e-300)) *
               afrob;
  double prev = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int sweep = 0; sweep < opts.als_sweeps && err > target_abs; ++sweep) {
    als_sweep(out.factors, a, opts.tikhonov);
    err = frob_rel_error(materialize_chain(out.factors, n), a,
                         std::max(afrob, 1e-300)) *
          afrob;
    stalled = (prev - err < opts.stall_improvement * prev) ? stalled + 1 : 0;
    if (stalled >= opts.stall_sweeps) break;
    prev = err;
  }

  if (out.count() != 4 * k + 1) {
    throw NumericalError("full_decompose: factor count invariant violated");
  }
  out.validate_alternation();
  out.reconstruction_error = rel_operator_error(out.materialized(), a);
  if (out.reconstruction_error > eps) {
    throw NumericalError("full_decompose: certified error above eps",
                         out.reconstruction_error);
  }
  return out;
}

std::vector<CVec> linearizing_biases(const std::vector<ComplexMatrix>& weights,
                                     const CVec& b,
                                     const std::vector<CVec>& samples,
                                     double safety) {
  const int depth = static_cast<int>(weights.size());
  if (depth < 1) throw std::invalid_argument("linearizing_biases: empty chain");
  if (samples.empty()) {
    throw std::invalid_argument("linearizing_biases: calibration samples required");
  }
  const int n = weights.front().rows;
  if (depth == 1) return {b};

  double max_re = 0.0, max_im = 0.0;
  for (const CVec& x : samples) {
    CVec h = x;
    for (int j = 0; j < depth; ++j) {
      h = matvec(weights[j], h);
      for (const Complex& z : h) {
        max_re = std::max(max_re, std::abs(z.real()));
        max_im = std::max(max_im, std::abs(z.imag()));
      }
    }
  }
  const Complex omega = safety * Complex(max_re, max_im);

  // Every hidden layer sees its pre-activation shifted into the nonnegative
  // orthant by a constant offset of omega per coordinate; each bias cancels
  // the offset the layer's weight carries in and re-adds omega, and the last
  // bias swaps the offset for the requested b.
  const CVec offset(n, omega);
  std::vector<CVec> betas(depth);
  betas[0] = offset;
  for (int j = 1; j < depth; ++j) {
    const CVec carried = matvec(weights[j], offset);
    betas[j].resize(n);
    for (int i = 0; i < n; ++i) {
      betas[j][i] = (j == depth - 1 ? b[i] : omega) - carried[i];
    }
  }
  return betas;
}

namespace {

int next_pow2(int x) {
  int p = 1;
  while (p < x) p <<= 1;
  return p;
}

bool is_pow2_int(int x) { return x > 0 && (x & (x - 1)) == 0; }

}  // namespace

CompressionResult compress_network(const DenseReluNetwork& net,
                                   const std::vector<int>& per_layer_ranks,
                                   double eps, CompressionMode mode,
                                   const std::vector<CVec>& samples,
                                   const FitOptions& opts) {
  const int n = net.width;
  const int depth = net.depth();
  if (depth < 1) throw std::invalid_argument("compress_network: empty network");
  if (samples.empty()) {
    throw std::invalid_argument("compress_network: calibration samples required");
  }
  if (mode == CompressionMode::kRankBased) {
    if (static_cast<int>(per_layer_ranks.size()) != depth) {
      throw std::invalid_argument("compress_network: one rank per layer required");
    }
    if (!is_pow2_int(n)) {
      throw std::invalid_argument(
          "compress_network: rank-based mode needs a power-of-two width");
    }
  }

  CompressionResult result;
  result.net.width = n;

  // current activations of the calibration samples through the compressed
  // prefix; the bias construction is exact on these realized inputs
  std::vector<CVec> current = samples;
  // the same samples through the source network, for the deviation bound
  std::vector<double> layer_weight_norms(depth);
  std::vector<double> layer_abs_errors(depth);
  std::vector<double> layer_input_norms(depth, 0.0);

  for (int l = 0; l < depth; ++l) {
    const DenseLayer& src = net.layers[l];
    FactorSequence fs;
    if (mode == CompressionMode::kRankBased) {
      int kreq = std::clamp(per_layer_ranks[l], 1, n);
      const int kp = (n % kreq == 0) ? kreq : next_pow2(kreq);
      fs = full_decompose(src.weight, kp, eps, opts);
    } else {
      ShiftedDiagSum sds = shifted_diag_decompose(src.weight);
      sds.width = n;
      FitOptions full_opts = opts;
      FactorSequence fitted = sum_to_product(sds, eps, full_opts);
      fs = std::move(fitted);
      // pad to the structural 2n-1 count with identity pairs
      while (fs.count() < 2 * n - 1) {
        fs.factors.push_back(identity_factor(FactorKind::kCirculant, n));
        fs.factors.push_back(identity_factor(FactorKind::kDiagonal, n));
      }
      fs.validate_alternation();
    }
    result.layer_errors.push_back(fs.reconstruction_error);
    layer_weight_norms[l] = operator_norm(src.weight);
    layer_abs_errors[l] = fs.reconstruction_error * layer_weight_norms[l];
    for (const CVec& h : current) {
      layer_input_norms[l] = std::max(layer_input_norms[l], norm2(h));
    }

    // one factor per DC layer, rightmost factor applied first
    std::vector<ComplexMatrix> chain_ops;
    for (int j = fs.count() - 1; j >= 0; --j) {
      const Factor& f = fs.factors[j];
      chain_ops.push_back(f.kind == FactorKind::kCirculant
                              ? materialize(CirculantMatrix(f.values))
                              : materialize(DiagonalMatrix(f.values)));
    }
    const std::vector<CVec> betas = linearizing_biases(chain_ops, src.bias, current);

    for (int j = 0; j < fs.count(); ++j) {
      const Factor& f = fs.factors[fs.count() - 1 - j];
      const bool last = (j == fs.count() - 1);
      DCLayer layer(
          f.kind == FactorKind::kDiagonal ? DiagonalMatrix(f.values)
                                          : DiagonalMatrix::identity(n),
          f.kind == FactorKind::kCirculant ? CirculantMatrix(f.values)
                                           : CirculantMatrix::identity(n),
          betas[j], last ? src.activation : Activation::relu());
      result.net.layers.push_back(std::move(layer));
    }

    // advance the calibration samples through the freshly built chain
    const size_t first = result.net.layers.size() - fs.count();
    for (CVec& h : current) {
      for (size_t li = first; li < result.net.layers.size(); ++li) {
        h = dc_layer_forward(result.net.layers[li], h);
      }
    }
  }
  result.net.ensure_spectra();

  // deviation bound: per-layer operator error times the calibration input
  // norm, amplified by downstream layer norms (activations are 1-Lipschitz)
  for (int l = 0; l < depth; ++l) {
    double amp = 1.0;
    for (int j = l + 1; j < depth; ++j) amp *= layer_weight_norms[j];
    result.predicted_deviation += layer_abs_errors[l] * layer_input_norms[l] * amp;
  }
  for (size_t s = 0; s < samples.size(); ++s) {
    const CVec want = dense_forward(net, samples[s]);
    CVec diff = current[s];
    for (size_t i = 0; i < diff.size(); ++i) diff[i] -= want[i];
    result.max_sample_deviation = std::max(result.max_sample_deviation, norm2(diff));
  }
  return result;
}

}  // namespace dcnn
