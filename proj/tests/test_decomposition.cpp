#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "dcnn/decomposition.hpp"
#include "dcnn/rng.hpp"
#include "oracles.hpp"

using namespace dcnn;

TEST_CASE("shifted diagonal expansion of identity and shift matrices") {
  const ShiftedDiagSum id = shifted_diag_decompose(ComplexMatrix::identity(4));
  REQUIRE(id.term_count() == 1);
  CHECK(id.terms[0].first == 0);
  for (const Complex& v : id.terms[0].second) CHECK(v == Complex{1.0, 0.0});

  const ComplexMatrix s = materialize(CirculantMatrix(CVec{0, 1, 0, 0}));
  const ShiftedDiagSum ss = shifted_diag_decompose(s);
  REQUIRE(ss.term_count() == 1);
  CHECK(ss.terms[0].first == 1);
  for (const Complex& v : ss.terms[0].second) CHECK(v == Complex{1.0, 0.0});
}

TEST_CASE("shifted diagonal expansion reconstructs exactly") {
  CounterRng rng(1, 0);
  for (int n : {1, 4, 9, 64}) {
    const ComplexMatrix a = oracle::random_matrix(n, n, rng);
    const ShiftedDiagSum sds = shifted_diag_decompose(a);
    CHECK(oracle::rel_err(sds.materialized(), a) <= 1e-14);
    // matvec route agrees with the dense route
    const CVec x = oracle::random_cvec(n, rng);
    CHECK(oracle::rel_err(sds.apply(x), oracle::dense_matvec(a, x)) < 1e-12);
  }
}

TEST_CASE("choose_r places ones at multiples of k") {
  const auto coeffs_of = [](const CirculantMatrix& c) { return c.coeffs(); };
  CHECK(coeffs_of(choose_r(4, 2)) == CVec{0.0, 1.0, 0.0, 1.0});
  CHECK(coeffs_of(choose_r(4, 1)) == CVec{1.0, 1.0, 1.0, 1.0});
  CHECK(coeffs_of(choose_r(4, 4)) == CVec{0.0, 0.0, 0.0, 1.0});
  CHECK_THROWS_AS(choose_r(6, 4), std::invalid_argument);
}

TEST_CASE("projection_O marks the leading k coordinates") {
  const DiagonalMatrix full = projection_O(4, 4);
  for (const Complex& v : full.entries) CHECK(v == Complex{1.0, 0.0});
  const DiagonalMatrix none = projection_O(4, 0);
  for (const Complex& v : none.entries) CHECK(v == Complex{});
  const DiagonalMatrix half = projection_O(4, 2);
  CHECK(half.entries == CVec{1.0, 1.0, 0.0, 0.0});
}

namespace {

ComplexMatrix truncate_cols(const ComplexMatrix& m, int k) {
  ComplexMatrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < k; ++j) out.at(i, j) = m.at(i, j);
  return out;
}

}  // namespace

TEST_CASE("solve_w inverts the permutation blocks") {
  const int n = 4, k = 2;
  const CirculantMatrix r = choose_r(n, k);
  const DiagonalMatrix o = projection_O(n, k);

  // consistency: u = R O itself is produced by the identity term
  const ComplexMatrix ro = matmul(materialize(r), materialize(o));
  const ShiftedDiagSum w_id = solve_w(ro, r, o, k);
  ComplexMatrix recon = matmul(w_id.materialized(), ro);
  CHECK(oracle::rel_err(recon, ro) < 1e-12);
  for (const Complex& v : w_id.terms[0].second) {
    CHECK(std::abs(v - Complex{1.0, 0.0}) < 1e-12);
  }
  for (const Complex& v : w_id.terms[1].second) CHECK(std::abs(v) < 1e-12);

  // random unitary truncated to k columns
  CounterRng rng(3, 0);
  const SvdResult s = svd(oracle::random_matrix(n, n, rng));
  const ComplexMatrix u = truncate_cols(s.u, k);
  const ShiftedDiagSum w = solve_w(u, r, o, k);
  const ComplexMatrix wro = matmul(w.materialized(), ro);
  const double unorm = operator_norm(u);
  CHECK(operator_norm(subtract(wro, u)) <= 1e-9 * unorm);
}

TEST_CASE("solve_w with k = 1 divides entrywise") {
  const int n = 5;
  const CirculantMatrix r = choose_r(n, 1);
  const DiagonalMatrix o = projection_O(n, 1);
  CounterRng rng(4, 0);
  ComplexMatrix u(n, n);
  for (int i = 0; i < n; ++i) u.at(i, 0) = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
  const ShiftedDiagSum w = solve_w(u, r, o, 1);
  REQUIRE(w.term_count() == 1);
  for (int i = 0; i < n; ++i) {
    CHECK(std::abs(w.terms[0].second[i] - u.at(i, 0)) < 1e-14);
  }
}

TEST_CASE("solve_w rejects a u with nonzero trailing columns") {
  const int n = 4, k = 2;
  CounterRng rng(5, 0);
  const ComplexMatrix dense = oracle::random_matrix(n, n, rng);
  CHECK_THROWS_AS(solve_w(dense, choose_r(n, k), projection_O(n, k), k),
                  std::invalid_argument);
}

TEST_CASE("rank_reduce reconstructs low-rank matrices") {
  CounterRng rng(6, 0);

  const ComplexMatrix r1 = oracle::random_rank_matrix(4, 1, rng);
  const RankReduction a = rank_reduce(r1, 1);
  CHECK(a.reconstruction_error <= 1e-8);

  const RankReduction zero = rank_reduce(ComplexMatrix(4, 4), 2);
  CHECK(zero.reconstruction_error == 0.0);

  const ComplexMatrix r2 = oracle::random_rank_matrix(8, 2, rng);
  const RankReduction b = rank_reduce(r2, 2);
  CHECK(b.reconstruction_error <= 1e-8);

  CHECK_THROWS_AS(rank_reduce(oracle::random_matrix(8, 8, rng), 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(rank_reduce(r2, 3), std::invalid_argument);  // 3 ∤ 8
}

TEST_CASE("sum_to_product: single-term sums are exact single diagonals") {
  CounterRng rng(7, 0);
  ShiftedDiagSum w;
  w.width = 6;
  w.terms.emplace_back(0, oracle::random_cvec(6, rng));
  const FactorSequence fs = sum_to_product(w, 1e-3);
  REQUIRE(fs.count() == 1);
  CHECK(fs.factors[0].kind == FactorKind::kDiagonal);
  CHECK(fs.reconstruction_error == 0.0);
}

TEST_CASE("sum_to_product: identity sum gives identity factors") {
  ShiftedDiagSum w;
  w.width = 4;
  w.terms.emplace_back(0, CVec(4, Complex{1.0, 0.0}));
  const FactorSequence fs = sum_to_product(w, 1e-3);
  CHECK(fs.reconstruction_error == 0.0);
  CHECK(oracle::rel_err(fs.materialized(), ComplexMatrix::identity(4)) < 1e-14);
}

TEST_CASE("sum_to_product: constant-diagonal sums collapse to the circulant") {
  ShiftedDiagSum w;
  w.width = 4;
  w.terms.emplace_back(0, CVec(4, Complex{2.0, 0.0}));
  w.terms.emplace_back(1, CVec(4, Complex{0.0, 1.0}));
  const FactorSequence fs = sum_to_product(w, 1e-3);
  CHECK(fs.reconstruction_error <= 1e-12);
  fs.validate_alternation();
  CHECK(oracle::rel_err(fs.materialized(), w.materialized()) < 1e-12);
}

TEST_CASE("sum_to_product: random two-term sum meets the fit contract") {
  CounterRng rng(8, 0);
  ShiftedDiagSum w;
  w.width = 8;
  w.terms.emplace_back(0, oracle::random_cvec(8, rng));
  w.terms.emplace_back(1, oracle::random_cvec(8, rng));
  const FactorSequence fs = sum_to_product(w, 1e-3);
  REQUIRE(fs.count() == 3);
  fs.validate_alternation();
  CHECK(fs.reconstruction_error <= 1e-3);
  CHECK(oracle::rel_err(fs.materialized(), w.materialized()) < 1e-3);
}

TEST_CASE("sum_to_product: pure shift power factors exactly") {
  ShiftedDiagSum w;
  w.width = 6;
  CounterRng rng(9, 0);
  w.terms.emplace_back(2, oracle::random_cvec(6, rng));
  const FactorSequence fs = sum_to_product(w, 1e-6);
  CHECK(fs.count() == 2 * 3 - 1);
  fs.validate_alternation();
  CHECK(fs.reconstruction_error <= 1e-10);
}

TEST_CASE("sum_to_product: unreachable tolerance raises with the best error") {
  CounterRng rng(10, 0);
  ShiftedDiagSum w;
  w.width = 8;
  w.terms.emplace_back(0, oracle::random_cvec(8, rng));
  w.terms.emplace_back(1, oracle::random_cvec(8, rng));
  FitOptions opts;
  opts.restarts = 1;
  opts.als_sweeps = 2;
  opts.adam_steps = 0;
  try {
    const FactorSequence fs = sum_to_product(w, 1e-16, opts);
    // the peeled chain may legitimately be this accurate; accept either way
    CHECK(fs.reconstruction_error <= 1e-16);
  } catch (const NumericalError& e) {
    CHECK(e.best_error() > 0.0);
    CHECK(e.best_error() < 1e-6);  // near-exact chain, just above the ask
  }
}

TEST_CASE("full_decompose emits exactly 4k+1 alternating factors") {
  CounterRng rng(11, 0);
  const ComplexMatrix r2 = oracle::random_rank_matrix(8, 2, rng);
  const FactorSequence fs = full_decompose(r2, 2, 1e-3);
  CHECK(fs.count() == 9);
  fs.validate_alternation();
  CHECK(fs.reconstruction_error <= 1e-3);

  const ComplexMatrix r1 = oracle::random_rank_matrix(4, 1, rng);
  const FactorSequence f1 = full_decompose(r1, 1, 1e-3);
  CHECK(f1.count() == 5);
  f1.validate_alternation();
  CHECK(f1.reconstruction_error <= 1e-6);

  const ComplexMatrix r4 = oracle::random_rank_matrix(16, 4, rng);
  const FactorSequence f4 = full_decompose(r4, 4, 1e-3);
  CHECK(f4.count() == 17);
  CHECK(f4.reconstruction_error <= 1e-3);
}

TEST_CASE("factor sequence apply matches its materialization") {
  CounterRng rng(12, 0);
  const ComplexMatrix a = oracle::random_rank_matrix(8, 2, rng);
  const FactorSequence fs = full_decompose(a, 2, 1e-3);
  const CVec x = oracle::random_cvec(8, rng);
  CHECK(oracle::rel_err(fs.apply(x), oracle::dense_matvec(fs.materialized(), x)) <
        1e-10);
}

TEST_CASE("transposed factor sequences stay valid and represent the transpose") {
  CounterRng rng(13, 0);
  const ComplexMatrix a = oracle::random_rank_matrix(8, 2, rng);
  const FactorSequence fs = full_decompose(a, 2, 1e-3);
  const FactorSequence ft = transpose(fs);
  ft.validate_alternation();
  CHECK(oracle::rel_err(ft.materialized(), transpose(fs.materialized())) < 1e-12);
}

TEST_CASE("linearizing biases: degenerate single layer returns b") {
  CounterRng rng(14, 0);
  const CVec b = oracle::random_cvec(4, rng);
  const auto betas = linearizing_biases({ComplexMatrix::identity(4)}, b,
                                        {oracle::random_cvec(4, rng)});
  REQUIRE(betas.size() == 1);
  CHECK(oracle::rel_err(betas[0], b) == 0.0);
}

namespace {

// two-path check: relu chain with biases vs relu of the collapsed product
double linearization_gap(const std::vector<ComplexMatrix>& weights,
                         const CVec& b, const std::vector<CVec>& samples) {
  const auto betas = linearizing_biases(weights, b, samples);
  double worst = 0.0;
  for (const CVec& x : samples) {
    CVec h = x;
    for (size_t j = 0; j < weights.size(); ++j) {
      h = matvec(weights[j], h);
      for (size_t i = 0; i < h.size(); ++i) {
        h[i] = complex_relu(h[i] + betas[j][i]);
      }
    }
    CVec flat = x;
    for (const ComplexMatrix& w : weights) flat = matvec(w, flat);
    for (size_t i = 0; i < flat.size(); ++i) {
      const Complex want = complex_relu(flat[i] + b[i]);
      worst = std::max(worst, std::abs(h[i] - want));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("linearizing biases: identity chain on the unit box is exact") {
  const int n = 4;
  std::vector<CVec> samples;
  CounterRng rng(15, 0);
  for (int s = 0; s < 10; ++s) {
    CVec x(n);
    for (Complex& z : x) z = Complex(rng.uniform01(), 0.0);
    samples.push_back(std::move(x));
  }
  const std::vector<ComplexMatrix> ws = {ComplexMatrix::identity(n),
                                         ComplexMatrix::identity(n)};
  CHECK(linearization_gap(ws, CVec(n, Complex{}), samples) <= 1e-12);
}

TEST_CASE("linearizing biases: random chain matches on all calibration points") {
  const int n = 16, depth = 4;
  CounterRng rng(16, 0);
  std::vector<ComplexMatrix> ws;
  for (int j = 0; j < depth; ++j) {
    ws.push_back(oracle::random_matrix(n, n, rng, 0.5));
  }
  const CVec b = oracle::random_cvec(n, rng);
  std::vector<CVec> samples;
  for (int s = 0; s < 100; ++s) samples.push_back(oracle::random_cvec(n, rng));
  CHECK(linearization_gap(ws, b, samples) <= 1e-9);
}

namespace {

DenseReluNetwork random_dense_net(int n, int depth, int rank, CounterRng& rng) {
  DenseReluNetwork net;
  net.width = n;
  for (int l = 0; l < depth; ++l) {
    net.layers.push_back({rank >= n ? oracle::random_matrix(n, n, rng)
                                    : oracle::random_rank_matrix(n, rank, rng),
                          oracle::random_cvec(n, rng, 0.2), Activation::relu()});
  }
  return net;
}

std::vector<CVec> random_samples(int n, int count, CounterRng& rng) {
  std::vector<CVec> out;
  for (int s = 0; s < count; ++s) out.push_back(oracle::random_cvec(n, rng));
  return out;
}

}  // namespace

TEST_CASE("compress_network: identity network reproduces inputs") {
  const int n = 8;
  DenseReluNetwork net;
  net.width = n;
  for (int l = 0; l < 2; ++l) {
    net.layers.push_back({ComplexMatrix::identity(n), CVec(n, Complex{}),
                          Activation::relu()});
  }
  CounterRng rng(17, 0);
  const auto samples = random_samples(n, 8, rng);
  const CompressionResult res = compress_network(
      net, {n, n}, 1e-6, CompressionMode::kRankBased, samples);
  CHECK(res.net.depth() == 2 * (4 * n + 1));
  CHECK(res.max_sample_deviation <= 1e-9);
}

TEST_CASE("compress_network: rank-based depth bookkeeping") {
  const int n = 8;
  CounterRng rng(18, 0);
  DenseReluNetwork net = random_dense_net(n, 2, 2, rng);
  const auto samples = random_samples(n, 6, rng);
  const CompressionResult res = compress_network(
      net, {2, 2}, 1e-3, CompressionMode::kRankBased, samples);
  // ranks divide the width: exactly (4k+1) per layer, depth L + 4 * total rank
  CHECK(res.net.depth() == 2 * (4 * 2 + 1));
  CHECK(res.net.depth() <= net.depth() + 4 * total_rank(net));
  CHECK(res.max_sample_deviation <= res.predicted_deviation + 1e-9);

  // a rank that does not divide the width rounds up to the next power of two
  DenseReluNetwork odd = random_dense_net(n, 1, 3, rng);
  const CompressionResult res3 = compress_network(
      odd, {3}, 1e-3, CompressionMode::kRankBased, samples);
  CHECK(res3.net.depth() == 4 * 4 + 1);
  CHECK(res3.net.depth() <= 9 * total_rank(odd));
}

TEST_CASE("compress_network: full-depth mode uses 2n-1 factors per layer") {
  const int n = 4;
  CounterRng rng(19, 0);
  DenseReluNetwork net = random_dense_net(n, 2, n, rng);
  const auto samples = random_samples(n, 6, rng);
  const CompressionResult res = compress_network(
      net, {}, 1e-3, CompressionMode::kFullDepth, samples);
  CHECK(res.net.depth() == (2 * n - 1) * 2);
  CHECK(res.max_sample_deviation <= res.predicted_deviation + 1e-9);
}

TEST_CASE("compress_network rejects non-power-of-two widths in rank mode") {
  const int n = 6;
  CounterRng rng(20, 0);
  DenseReluNetwork net = random_dense_net(n, 1, 2, rng);
  const auto samples = random_samples(n, 2, rng);
  CHECK_THROWS_AS(compress_network(net, {2}, 1e-3, CompressionMode::kRankBased,
                                   samples),
                  std::invalid_argument);
}
