#pragma once

#include <utility>
#include <vector>

#include "dcnn/complex_linalg.hpp"

namespace dcnn {

/// ReLU extended to the complex domain, applied to the real and imaginary
/// parts independently: relu(re(z)) + i relu(im(z)).
Complex complex_relu(Complex z);
/// Same componentwise rule with negative parts scaled by slope.
Complex leaky_complex_relu(Complex z, double slope);

enum class ActKind { kComplexRelu, kLeakyComplexRelu, kIdentity };

struct Activation {
  ActKind kind = ActKind::kIdentity;
  double slope = 1.0;  // leaky only, in (0, 1]

  static Activation identity() { return {ActKind::kIdentity, 1.0}; }
  static Activation relu() { return {ActKind::kComplexRelu, 1.0}; }
  static Activation leaky(double slope);

  Complex apply(Complex z) const;
  /// Componentwise sub-derivative at the pre-activation, as (d re, d im)
  /// scale factors. The ReLU sub-derivative at exactly 0 is 0.
  std::pair<double, double> mask(Complex pre) const;
  bool is_identity() const { return kind == ActKind::kIdentity; }
};

/// One diagonal-circulant block: x -> activation(D C x + bias).
struct DCLayer {
  DiagonalMatrix diag;
  CirculantMatrix circ;
  CVec bias;
  Activation activation;

  DCLayer() = default;
  DCLayer(DiagonalMatrix d, CirculantMatrix c, CVec b, Activation a);
  int width() const { return diag.size(); }
};

struct DCNetwork {
  int width = 0;
  std::vector<DCLayer> layers;

  int depth() const { return static_cast<int>(layers.size()); }
  /// Precompute every layer's circulant spectrum (call after edits and
  /// before sharing across threads).
  void ensure_spectra();
};

struct DenseLayer {
  ComplexMatrix weight;  // square, width x width
  CVec bias;
  Activation activation;
};

struct DenseReluNetwork {
  int width = 0;
  std::vector<DenseLayer> layers;

  int depth() const { return static_cast<int>(layers.size()); }
};

CVec dc_layer_forward(const DCLayer& layer, const CVec& x);
CVec dcnn_forward(const DCNetwork& net, const CVec& x);
CVec dense_forward(const DenseReluNetwork& net, const CVec& x);

/// Sum of per-layer numeric ranks of the weight matrices.
int total_rank(const DenseReluNetwork& net, double tol = 1e-10);

struct ParamCount {
  long long complex_weights = 0;  // n diagonal + n circulant per layer
  long long complex_biases = 0;
  long long real_params = 0;      // 2 scalars per complex parameter
};

ParamCount param_count(int width, int depth);

/// Nonlinearity placement: layer i (1-based) is activated iff
/// i mod relu_every == 0; remaining layers are identity.
struct ActivationPattern {
  int relu_every = 3;
  ActKind kind = ActKind::kLeakyComplexRelu;
  double slope = 0.5;

  Activation activation_for_layer(int layer_index_1based) const;
};

/// Builds the layer skeleton (identity weights, zero biases) with the given
/// activation placement; use the initializer to draw actual weights.
/// last_identity forces the final layer's activation to identity.
DCNetwork build_dcnn(int width, int depth, const ActivationPattern& pattern,
                     bool last_identity);

/// Real data enters with zero imaginary parts, zero-padded to the width.
CVec embed_real(const std::vector<double>& x, int width);
/// Reads the real parts of the leading `count` outputs.
std::vector<double> read_real(const CVec& y, int count);

}  // namespace dcnn
