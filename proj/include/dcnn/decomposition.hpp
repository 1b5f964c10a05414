#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dcnn/structured_layers.hpp"

namespace dcnn {

enum class FactorKind { kCirculant, kDiagonal };

struct Factor {
  FactorKind kind = FactorKind::kCirculant;
  CVec values;  // circulant first column, or diagonal entries
};

/// Alternating diagonal/circulant product B_1 B_2 ... B_m with diagonals at
/// the odd (1-based) positions. A single diagonal represents any 1-term
/// shifted sum exactly, which a circulant-first chain cannot; this parity is
/// also the one the W R O pipeline produces without any seam merging.
/// reconstruction_error is the certified relative operator-norm distance to
/// the matrix the sequence was fitted against.
struct FactorSequence {
  int width = 0;
  std::vector<Factor> factors;
  double reconstruction_error = 0.0;

  int count() const { return static_cast<int>(factors.size()); }
  CVec apply(const CVec& x) const;
  ComplexMatrix materialized() const;
  /// Strict alternation with circulant odd positions; throws otherwise.
  void validate_alternation() const;
};

/// Reversed sequence of transposed factors; represents the transpose of the
/// original product and is again a valid alternating sequence.
FactorSequence transpose(const FactorSequence& fs);

/// Sum of shifted diagonals: sum_p diag(terms[p]) S^shift(p), where S is the
/// cyclic shift. Matvec costs O(k n).
struct ShiftedDiagSum {
  int width = 0;
  std::vector<std::pair<int, CVec>> terms;  // (shift, diagonal), shifts ascending

  int term_count() const { return static_cast<int>(terms.size()); }
  /// One past the largest shift; the k in the 2k-1 factor count.
  int shift_range() const;
  CVec apply(const CVec& x) const;
  ComplexMatrix materialized() const;
};

/// Exact expansion of a square matrix along its wrapped diagonals:
/// term p's diagonal reads entries (t, (t - p) mod n). All-zero terms are
/// dropped.
ShiftedDiagSum shifted_diag_decompose(const ComplexMatrix& a);

/// Circulant with ones at positions {k, 2k, ..., n} (1-based coefficient
/// indices). Requires k | n; the per-row solve blocks it induces are
/// permutations of the identity.
CirculantMatrix choose_r(int n, int k);

/// Rank-k projector: diagonal with ones at the first k positions.
DiagonalMatrix projection_O(int n, int k);

/// Finds W = sum_{p<k} diag(d_p) S^p with W R O = U, where the last n-k
/// columns of U vanish. Each row yields an independent k x k system; with
/// choose_r's coefficients these are permutation matrices and the solve is
/// exact.
ShiftedDiagSum solve_w(const ComplexMatrix& u, const CirculantMatrix& r,
                       const DiagonalMatrix& o, int k);

struct RankReduction {
  ShiftedDiagSum w;       // W R O = U (truncated)
  CirculantMatrix r;
  DiagonalMatrix o;
  DiagonalMatrix sigma;   // truncated singular values
  ShiftedDiagSum wp;      // W' R O = conj(V) (truncated)
  int k = 0;
  double reconstruction_error = 0.0;  // relative operator norm
};

/// SVD route A = U S V^H, rewritten with the plain-transpose convention
/// V_t = conj(V) so that A = W R O S O^T R^T W'^T. Requires k | n and
/// numeric rank of A at most k.
RankReduction rank_reduce(const ComplexMatrix& a, int k, double rank_tol = 1e-10);

struct FitOptions {
  int adam_steps = 120;
  double adam_lr = 0.02;
  int als_sweeps = 200;
  int restarts = 4;
  uint64_t seed = 0xD1A60ULL;
  double tikhonov = 1e-11;
  /// Stop sweeping after this many consecutive sweeps improving the error
  /// by less than stall_improvement (relative).
  int stall_sweeps = 15;
  double stall_improvement = 0.005;
  /// Certificates materialize the product; widths above this are rejected.
  int certificate_max_width = 256;
};

/// Rewrites a k-term shifted-diagonal sum as an alternating product of
/// 2k-1 factors. Sums whose diagonals are all constant are circulant and
/// collapse to the single exact factor. General sums are fitted by
/// least squares (Adam warm-up, then per-factor exact block solves) and the
/// result is certified in operator norm; a miss after the restart budget
/// throws NumericalError carrying the best achieved error.
FactorSequence sum_to_product(const ShiftedDiagSum& w, double eps,
                              const FitOptions& opts = {});

/// Full pipeline for a square matrix of numeric rank at most k (k | n):
/// rank reduction, product fitting of W and W', seam merging so the factor
/// count is exactly 4k+1, a global polish against A, and a certified
/// relative operator-norm error (<= eps or NumericalError).
FactorSequence full_decompose(const ComplexMatrix& a, int k, double eps,
                              const FitOptions& opts = {},
                              double rank_tol = 1e-10);

/// Bias shifts that keep every intermediate pre-activation of the chain
/// x -> relu(W_L(... relu(W_1 x + beta_1) ...) + beta_L) inside the
/// nonnegative orthant on the calibration samples, so the composition equals
/// relu(W_L ... W_1 x + b) there. Weights are given in application order.
/// The offset magnitude is the largest absolute real/imaginary value of any
/// partial product on the samples, times safety.
std::vector<CVec> linearizing_biases(const std::vector<ComplexMatrix>& weights,
                                     const CVec& b,
                                     const std::vector<CVec>& samples,
                                     double safety = 1.0);

enum class CompressionMode { kRankBased, kFullDepth };

struct CompressionResult {
  DCNetwork net;
  std::vector<double> layer_errors;  // relative operator norm per source layer
  /// Sound bound on the output deviation over the calibration samples,
  /// propagated through downstream layer norms.
  double predicted_deviation = 0.0;
  double max_sample_deviation = 0.0;
};

/// Replaces every dense layer with its factor chain (one factor per DC
/// layer, ReLU activations made transparent by linearizing biases; the
/// chain's last layer keeps the source activation). kRankBased uses 4k'+1
/// factors per layer with k' the requested rank rounded up to a power of two
/// when it does not divide n (width must be a power of two); kFullDepth uses
/// 2n-1 factors per layer regardless of rank.
CompressionResult compress_network(const DenseReluNetwork& net,
                                   const std::vector<int>& per_layer_ranks,
                                   double eps, CompressionMode mode,
                                   const std::vector<CVec>& samples,
                                   const FitOptions& opts = {});

}  // namespace dcnn
