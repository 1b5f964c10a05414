#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "dcnn/initialization.hpp"
#include "dcnn/rng.hpp"
#include "oracles.hpp"

using namespace dcnn;

namespace {
ActivationPattern relu_all() { return {1, ActKind::kComplexRelu, 1.0}; }
}  // namespace

TEST_CASE("zero sigma_prime gives exactly zero biases, diagonals are signs") {
  DCNetwork net = init_dcnn(build_dcnn(16, 3, relu_all(), true), {0.0, 99});
  for (const DCLayer& layer : net.layers) {
    for (const Complex& b : layer.bias) CHECK(b == Complex{});
    for (const Complex& d : layer.diag.entries) {
      CHECK(std::abs(d) == 1.0);
      CHECK(d.imag() == 0.0);
    }
    for (const Complex& c : layer.circ.coeffs()) CHECK(c.imag() == 0.0);
  }
}

TEST_CASE("circulant coefficient variance tracks 2/n") {
  const int n = 10000;
  DCNetwork net = init_dcnn(build_dcnn(n, 1, relu_all(), true), {0.0, 7});
  double mean = 0.0, sq = 0.0;
  for (const Complex& c : net.layers[0].circ.coeffs()) {
    mean += c.real();
    sq += c.real() * c.real();
  }
  mean /= n;
  const double var = sq / n - mean * mean;
  const double want = 2.0 / n;
  CHECK(std::abs(var - want) < 0.05 * want);
}

TEST_CASE("identical seed reproduces the initialization bitwise") {
  const DCNetwork a = init_dcnn(build_dcnn(8, 4, relu_all(), true), {1e-2, 1234});
  const DCNetwork b = init_dcnn(build_dcnn(8, 4, relu_all(), true), {1e-2, 1234});
  for (int l = 0; l < 4; ++l) {
    for (int i = 0; i < 8; ++i) {
      CHECK(a.layers[l].circ.coeffs()[i] == b.layers[l].circ.coeffs()[i]);
      CHECK(a.layers[l].diag.entries[i] == b.layers[l].diag.entries[i]);
      CHECK(a.layers[l].bias[i] == b.layers[l].bias[i]);
    }
  }
}

TEST_CASE("per-layer substreams: extra layers do not disturb earlier draws") {
  const DCNetwork shallow = init_dcnn(build_dcnn(8, 2, relu_all(), false), {1e-2, 5});
  const DCNetwork deep = init_dcnn(build_dcnn(8, 5, relu_all(), false), {1e-2, 5});
  for (int l = 0; l < 2; ++l) {
    for (int i = 0; i < 8; ++i) {
      CHECK(shallow.layers[l].circ.coeffs()[i] == deep.layers[l].circ.coeffs()[i]);
      CHECK(shallow.layers[l].diag.entries[i] == deep.layers[l].diag.entries[i]);
      CHECK(shallow.layers[l].bias[i] == deep.layers[l].bias[i]);
    }
  }
}

TEST_CASE("covariance probe matches the predicted diagonal at depth 3") {
  const CovarianceReport r =
      covariance_probe(4, 3, {1.0, 1.0, 1.0, 1.0}, 20000, {0.0, 42});
  CHECK(r.predicted_diag == doctest::Approx(2.0));
  for (double d : r.diag_estimates) {
    CHECK(std::abs(d - 2.0) < 0.05 * 2.0);
  }
  CHECK(r.max_offdiag_se_units < 4.0);
}

TEST_CASE("covariance probe at zero input is exactly zero") {
  const CovarianceReport r = covariance_probe(4, 2, {0.0, 0.0, 0.0, 0.0}, 200, {0.0, 1});
  for (double d : r.diag_estimates) CHECK(d == 0.0);
  CHECK(r.max_offdiag_abs == 0.0);
}

TEST_CASE("covariance diagonal does not drift with depth") {
  std::vector<double> x = {1.0, -0.5, 0.25, 2.0, 0.0, 1.5, -1.0, 0.75,
                           0.3, -0.2, 1.1, 0.6, -0.9, 0.4, 0.8, -1.2};
  std::vector<double> means;
  for (int depth : {1, 2, 3}) {
    const CovarianceReport r = covariance_probe(16, depth, x, 20000, {0.0, 77});
    double m = 0.0;
    for (double d : r.diag_estimates) m += d;
    means.push_back(m / 16.0);
    for (double d : r.diag_estimates) {
      CHECK(std::abs(d - r.predicted_diag) < 0.05 * r.predicted_diag);
    }
  }
  for (double m : means) {
    CHECK(std::abs(m - means[0]) < 0.05 * means[0]);
  }
}

TEST_CASE("covariance probe validates its inputs") {
  CHECK_THROWS_AS(covariance_probe(4, 1, {1, 1, 1, 1}, 50, {0.0, 0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(covariance_probe(4, 1, {1, 1, 1, 1}, 200, {0.1, 0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(covariance_probe(4, 1, {1, 1}, 200, {0.0, 0}),
                  std::invalid_argument);
}

TEST_CASE("single-block variance rule at a basis vector") {
  const VarianceReport r = variance_check_fixed_u({1, 0, 0, 0, 0, 0}, 1.0, 20000, 3);
  CHECK(r.predicted_variance == doctest::Approx(1.0));
  for (double v : r.variance_estimates) CHECK(std::abs(v - 1.0) < 0.05);
}

TEST_CASE("single-block variance at u = 0 is exactly zero") {
  const VarianceReport r = variance_check_fixed_u({0, 0, 0, 0}, 1.0, 500, 4);
  for (double v : r.variance_estimates) CHECK(v == 0.0);
  CHECK(r.max_variance_se_units == 0.0);
}

TEST_CASE("single-block variance within three standard errors on random u") {
  CounterRng rng(55, 0);
  std::vector<double> u(8);
  for (double& v : u) v = rng.uniform(-1.0, 1.0);
  const VarianceReport r = variance_check_fixed_u(u, 0.5, 50000, 6);
  CHECK(r.max_variance_se_units < 3.0);
  CHECK(r.max_offdiag_se_units < 4.5);
}

TEST_CASE("pre-activation distribution is symmetric (third moment test)") {
  // mean of y^3 should sit within 4 empirical SEs of zero at every layer
  const int n = 8, depth = 3, samples = 30000;
  std::vector<double> x = {1.0, -0.5, 0.25, 2.0, 0.0, 1.5, -1.0, 0.75};
  const CVec xin = embed_real(x, n);
  DCNetwork shape = build_dcnn(n, depth, relu_all(), true);

  std::vector<std::vector<double>> cube_sum(depth, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> cube_sq(depth, std::vector<double>(n, 0.0));
  CounterRng seeder(2024, 0);
  for (int s = 0; s < samples; ++s) {
    const DCNetwork net = init_dcnn(shape, {0.0, seeder.next_u64()});
    CVec h = xin;
    for (int l = 0; l < depth; ++l) {
      CVec u = circ_matvec(net.layers[l].circ, h);
      for (int i = 0; i < n; ++i) {
        const double pre = (net.layers[l].diag.entries[i] * u[i]).real();
        cube_sum[l][i] += pre * pre * pre;
        cube_sq[l][i] += pre * pre * pre * pre * pre * pre;
        u[i] = net.layers[l].activation.apply(net.layers[l].diag.entries[i] * u[i]);
      }
      h = std::move(u);
    }
  }
  for (int l = 0; l < depth; ++l) {
    for (int i = 0; i < n; ++i) {
      const double m3 = cube_sum[l][i] / samples;
      const double v3 = std::max(0.0, cube_sq[l][i] / samples - m3 * m3);
      const double se = std::sqrt(v3 / samples);
      CHECK(std::abs(m3) <= 4.0 * se);
    }
  }
}
