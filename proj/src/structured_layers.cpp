#include "dcnn/structured_layers.hpp"

#include <stdexcept>

namespace dcnn {

Complex complex_relu(Complex z) {
  return {z.real() > 0.0 ? z.real() : 0.0, z.imag() > 0.0 ? z.imag() : 0.0};
}

Complex leaky_complex_relu(Complex z, double slope) {
  return {z.real() > 0.0 ? z.real() : slope * z.real(),
          z.imag() > 0.0 ? z.imag() : slope * z.imag()};
}

Activation Activation::leaky(double slope) {
  if (!(slope > 0.0 && slope <= 1.0)) {
    throw std::invalid_argument("Activation: leaky slope must be in (0, 1]");
  }
  return {ActKind::kLeakyComplexRelu, slope};
}

Complex Activation::apply(Complex z) const {
  switch (kind) {
    case ActKind::kComplexRelu:
      return complex_relu(z);
    case ActKind::kLeakyComplexRelu:
      return leaky_complex_relu(z, slope);
    case ActKind::kIdentity:
      return z;
  }
  return z;
}

std::pair<double, double> Activation::mask(Complex pre) const {
  switch (kind) {
    case ActKind::kComplexRelu:
      return {pre.real() > 0.0 ? 1.0 : 0.0, pre.imag() > 0.0 ? 1.0 : 0.0};
    case ActKind::kLeakyComplexRelu:
      return {pre.real() > 0.0 ? 1.0 : slope, pre.imag() > 0.0 ? 1.0 : slope};
    case ActKind::kIdentity:
      return {1.0, 1.0};
  }
  return {1.0, 1.0};
}

DCLayer::DCLayer(DiagonalMatrix d, CirculantMatrix c, CVec b, Activation a)
    : diag(std::move(d)), circ(std::move(c)), bias(std::move(b)), activation(a) {
  if (diag.size() != circ.size() ||
      diag.size() != static_cast<int>(bias.size())) {
    throw std::invalid_argument("DCLayer: diagonal, circulant and bias widths differ");
  }
  ensure_finite(bias, "DCLayer bias");
}

void DCNetwork::ensure_spectra() {
  for (DCLayer& layer : layers) layer.circ.ensure_spectrum();
}

CVec dc_layer_forward(const DCLayer& layer, const CVec& x) {
  if (static_cast<int>(x.size()) != layer.width()) {
    throw std::invalid_argument("dc_layer_forward: width mismatch");
  }
  CVec u = circ_matvec(layer.circ, x);
  for (int i = 0; i < layer.width(); ++i) {
    u[i] = layer.activation.apply(layer.diag.entries[i] * u[i] + layer.bias[i]);
  }
  return u;
}

CVec dcnn_forward(const DCNetwork& net, const CVec& x) {
  CVec h = x;
  for (const DCLayer& layer : net.layers) h = dc_layer_forward(layer, h);
  return h;
}

CVec dense_forward(const DenseReluNetwork& net, const CVec& x) {
  CVec h = x;
  for (const DenseLayer& layer : net.layers) {
    CVec pre = matvec(layer.weight, h);
    for (size_t i = 0; i < pre.size(); ++i) {
      pre[i] = layer.activation.apply(pre[i] + layer.bias[i]);
    }
    h = std::move(pre);
  }
  return h;
}

int total_rank(const DenseReluNetwork& net, double tol) {
  int acc = 0;
  for (const DenseLayer& layer : net.layers) acc += numeric_rank(layer.weight, tol);
  return acc;
}

ParamCount param_count(int width, int depth) {
  if (width < 1 || depth < 1) {
    throw std::invalid_argument("param_count: width and depth must be >= 1");
  }
  ParamCount out;
  const long long n = width, l = depth;
  out.complex_weights = 2 * n * l;
  out.complex_biases = n * l;
  out.real_params = 2 * (out.complex_weights + out.complex_biases);
  return out;
}

Activation ActivationPattern::activation_for_layer(int layer_index_1based) const {
  if (relu_every < 1) throw std::invalid_argument("ActivationPattern: relu_every >= 1");
  if (layer_index_1based % relu_every != 0) return Activation::identity();
  switch (kind) {
    case ActKind::kComplexRelu:
      return Activation::relu();
    case ActKind::kLeakyComplexRelu:
      return Activation::leaky(slope);
    case ActKind::kIdentity:
      return Activation::identity();
  }
  return Activation::identity();
}

DCNetwork build_dcnn(int width, int depth, const ActivationPattern& pattern,
                     bool last_identity) {
  if (width < 1 || depth < 1) {
    throw std::invalid_argument("build_dcnn: width and depth must be >= 1");
  }
  DCNetwork net;
  net.width = width;
  net.layers.reserve(depth);
  for (int i = 1; i <= depth; ++i) {
    Activation act = pattern.activation_for_layer(i);
    if (last_identity && i == depth) act = Activation::identity();
    net.layers.emplace_back(DiagonalMatrix::identity(width),
                            CirculantMatrix::identity(width),
                            CVec(width, Complex{}), act);
  }
  return net;
}

CVec embed_real(const std::vector<double>& x, int width) {
  if (static_cast<int>(x.size()) > width) {
    throw std::invalid_argument("embed_real: input longer than width");
  }
  CVec out(width, Complex{});
  for (size_t i = 0; i < x.size(); ++i) out[i] = Complex(x[i], 0.0);
  return out;
}

std::vector<double> read_real(const CVec& y, int count) {
  if (count > static_cast<int>(y.size())) {
    throw std::invalid_argument("read_real: count exceeds width");
  }
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) out[i] = y[i].real();
  return out;
}

}  // namespace dcnn
