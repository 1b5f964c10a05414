#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "dcnn/structured_layers.hpp"
#include "dcnn/rng.hpp"
#include "oracles.hpp"

using namespace dcnn;

namespace {

DCLayer random_layer(int n, CounterRng& rng, Activation act) {
  return DCLayer(DiagonalMatrix(oracle::random_cvec(n, rng)),
                 CirculantMatrix(oracle::random_cvec(n, rng)),
                 oracle::random_cvec(n, rng), act);
}

// Dense-composition reference for one DC layer.
CVec layer_oracle(const DCLayer& layer, const CVec& x) {
  const ComplexMatrix w =
      matmul(materialize(layer.diag), materialize(layer.circ));
  CVec pre = oracle::dense_matvec(w, x);
  for (size_t i = 0; i < pre.size(); ++i) {
    pre[i] = layer.activation.apply(pre[i] + layer.bias[i]);
  }
  return pre;
}

}  // namespace

TEST_CASE("complex relu acts componentwise") {
  CHECK(complex_relu({3.0, 2.0}) == Complex{3.0, 2.0});
  CHECK(complex_relu({-1.0, 2.0}) == Complex{0.0, 2.0});
  CHECK(complex_relu({-1.0, -2.0}) == Complex{0.0, 0.0});
}

TEST_CASE("complex relu is idempotent") {
  CounterRng rng(1, 0);
  for (int i = 0; i < 50; ++i) {
    const Complex z(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
    CHECK(complex_relu(complex_relu(z)) == complex_relu(z));
  }
}

TEST_CASE("leaky complex relu: slope one is identity, slope scales negatives") {
  CounterRng rng(2, 0);
  for (int i = 0; i < 20; ++i) {
    const Complex z(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
    CHECK(leaky_complex_relu(z, 1.0) == z);
  }
  CHECK(leaky_complex_relu({-2.0, 1.0}, 0.5) == Complex{-1.0, 1.0});
}

TEST_CASE("leaky complex relu approaches plain relu as the slope vanishes") {
  CounterRng rng(3, 0);
  for (int i = 0; i < 20; ++i) {
    const Complex z(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
    const Complex lo = leaky_complex_relu(z, 1e-12);
    CHECK(std::abs(lo - complex_relu(z)) < 1e-11);
  }
}

TEST_CASE("dc layer forward: identity wiring passes input through") {
  CounterRng rng(4, 0);
  const int n = 6;
  const CVec x = oracle::random_cvec(n, rng);

  DCLayer id(DiagonalMatrix::identity(n), CirculantMatrix::identity(n),
             CVec(n, Complex{}), Activation::identity());
  CHECK(oracle::rel_err(dc_layer_forward(id, x), x) < 1e-14);

  const CVec d = oracle::random_cvec(n, rng);
  DCLayer scaled(DiagonalMatrix(d), CirculantMatrix::identity(n),
                 CVec(n, Complex{}), Activation::identity());
  CVec want(n);
  for (int i = 0; i < n; ++i) want[i] = d[i] * x[i];
  CHECK(oracle::rel_err(dc_layer_forward(scaled, x), want) < 1e-14);
}

TEST_CASE("dc layer forward matches the dense composition oracle") {
  CounterRng rng(5, 0);
  for (Activation act : {Activation::identity(), Activation::relu(),
                         Activation::leaky(0.5)}) {
    const int n = 8;
    const DCLayer layer = random_layer(n, rng, act);
    const CVec x = oracle::random_cvec(n, rng);
    CHECK(oracle::rel_err(dc_layer_forward(layer, x), layer_oracle(layer, x)) <
          1e-10);
  }
}

TEST_CASE("dcnn forward composes layers in order") {
  CounterRng rng(6, 0);
  const int n = 5;
  DCNetwork net;
  net.width = n;
  net.layers.push_back(DCLayer(DiagonalMatrix::identity(n),
                               CirculantMatrix::identity(n), CVec(n),
                               Activation::identity()));
  const CVec x = oracle::random_cvec(n, rng);
  CHECK(oracle::rel_err(dcnn_forward(net, x), x) < 1e-14);

  net.layers.push_back(net.layers.front());
  CHECK(oracle::rel_err(dcnn_forward(net, x), x) < 1e-14);

  DCNetwork deep;
  deep.width = n;
  for (int i = 0; i < 3; ++i) deep.layers.push_back(random_layer(n, rng, Activation::relu()));
  CVec expect = x;
  for (const DCLayer& l : deep.layers) expect = layer_oracle(l, expect);
  CHECK(oracle::rel_err(dcnn_forward(deep, x), expect) < 1e-10);
}

TEST_CASE("dcnn forward agrees with the equivalent dense network") {
  CounterRng rng(7, 0);
  for (int n : {4, 16, 64}) {
    for (int depth : {1, 3, 10}) {
      DCNetwork net;
      net.width = n;
      DenseReluNetwork dense;
      dense.width = n;
      for (int i = 0; i < depth; ++i) {
        const Activation act = (i % 2 == 0) ? Activation::relu() : Activation::leaky(0.5);
        DCLayer layer = random_layer(n, rng, act);
        dense.layers.push_back(
            {matmul(materialize(layer.diag), materialize(layer.circ)),
             layer.bias, act});
        net.layers.push_back(std::move(layer));
      }
      const CVec x = oracle::random_cvec(n, rng);
      CHECK(oracle::rel_err(dcnn_forward(net, x), dense_forward(dense, x)) < 1e-9);
    }
  }
}

TEST_CASE("identity activations with zero biases give a linear map") {
  CounterRng rng(8, 0);
  const int n = 8;
  DCNetwork net;
  net.width = n;
  for (int i = 0; i < 4; ++i) {
    net.layers.push_back(DCLayer(DiagonalMatrix(oracle::random_cvec(n, rng)),
                                 CirculantMatrix(oracle::random_cvec(n, rng)),
                                 CVec(n, Complex{}), Activation::identity()));
  }
  const CVec x = oracle::random_cvec(n, rng);
  const CVec y = oracle::random_cvec(n, rng);
  const Complex alpha{0.3, -1.1}, beta{-0.7, 0.2};

  CVec mix(n);
  for (int i = 0; i < n; ++i) mix[i] = alpha * x[i] + beta * y[i];
  const CVec lhs = dcnn_forward(net, mix);
  const CVec fx = dcnn_forward(net, x);
  const CVec fy = dcnn_forward(net, y);
  CVec rhs(n);
  for (int i = 0; i < n; ++i) rhs[i] = alpha * fx[i] + beta * fy[i];
  CHECK(oracle::rel_err(lhs, rhs) < 1e-10);
}

TEST_CASE("total rank sums per-layer numeric ranks") {
  const int n = 4;
  DenseReluNetwork all_id;
  all_id.width = n;
  for (int i = 0; i < 3; ++i) {
    all_id.layers.push_back({ComplexMatrix::identity(n), CVec(n), Activation::relu()});
  }
  CHECK(total_rank(all_id) == 12);

  CounterRng rng(9, 0);
  DenseReluNetwork mixed;
  mixed.width = n;
  mixed.layers.push_back({oracle::random_rank_matrix(n, 1, rng), CVec(n), Activation::relu()});
  mixed.layers.push_back({ComplexMatrix::identity(n), CVec(n), Activation::relu()});
  CHECK(total_rank(mixed) == 5);

  DenseReluNetwork zero;
  zero.width = n;
  zero.layers.push_back({ComplexMatrix(n, n), CVec(n), Activation::relu()});
  zero.layers.push_back({ComplexMatrix(n, n), CVec(n), Activation::relu()});
  CHECK(total_rank(zero) == 0);
}

TEST_CASE("parameter counts") {
  const ParamCount a = param_count(4, 3);
  CHECK(a.complex_weights == 24);
  CHECK(a.complex_biases == 12);
  CHECK(a.real_params == 72);

  const ParamCount b = param_count(1, 1);
  CHECK(b.complex_weights == 2);
  CHECK(b.complex_biases == 1);
  CHECK(b.real_params == 6);

  // dense n^2 weights per layer vs 2n structured: ratio n/2
  const long long n = 3072, l = 2;
  CHECK(param_count(n, l).complex_weights == 2 * n * l);
  CHECK((n * n * l) / param_count(n, l).complex_weights == n / 2);
}

TEST_CASE("activation pattern placement") {
  ActivationPattern every3{3, ActKind::kComplexRelu, 1.0};
  DCNetwork net = build_dcnn(4, 6, every3, false);
  for (int i = 1; i <= 6; ++i) {
    const bool active = (i % 3 == 0);
    CHECK(net.layers[i - 1].activation.is_identity() == !active);
  }

  DCNetwork trimmed = build_dcnn(4, 6, every3, true);
  CHECK(!trimmed.layers[2].activation.is_identity());
  CHECK(trimmed.layers[5].activation.is_identity());

  ActivationPattern every1{1, ActKind::kComplexRelu, 1.0};
  DCNetwork all = build_dcnn(4, 4, every1, false);
  for (const DCLayer& l : all.layers) CHECK(!l.activation.is_identity());

  ActivationPattern every2{2, ActKind::kLeakyComplexRelu, 0.5};
  DCNetwork five = build_dcnn(4, 5, every2, false);
  for (int i = 1; i <= 5; ++i) {
    CHECK(five.layers[i - 1].activation.is_identity() == (i % 2 != 0));
  }
}

TEST_CASE("real embedding and readout") {
  const CVec e = embed_real({1.0, 2.0}, 4);
  CHECK(e[0] == Complex{1.0, 0.0});
  CHECK(e[1] == Complex{2.0, 0.0});
  CHECK(e[2] == Complex{});
  CHECK(e[3] == Complex{});
  const std::vector<double> r = read_real({{1.5, 2.0}, {-0.5, 1.0}}, 2);
  CHECK(r[0] == 1.5);
  CHECK(r[1] == -0.5);
}
