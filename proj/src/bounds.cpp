#include "dcnn/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dcnn {

namespace {

ComplexMatrix rank_truncate(const SvdResult& s, int k) {
  const int n = s.u.rows;
  ComplexMatrix us = s.u;
  for (int j = 0; j < n; ++j) {
    const double sv = j < k ? s.singular_values[j] : 0.0;
    for (int i = 0; i < n; ++i) us.at(i, j) *= sv;
  }
  return matmul(us, conj_transpose(s.v));
}

CVec relu_affine(const ComplexMatrix& w, const CVec& x, const CVec& b) {
  CVec pre = matvec(w, x);
  for (size_t i = 0; i < pre.size(); ++i) {
    const Complex shifted = pre[i] + (b.empty() ? Complex{} : b[i]);
    pre[i] = complex_relu(shifted);
  }
  return pre;
}

CVec diff(const CVec& a, const CVec& b) {
  CVec out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

}  // namespace

DenseReluNetwork truncate_network(const DenseReluNetwork& net, int k) {
  if (k < 0) throw std::invalid_argument("truncate_network: negative rank");
  DenseReluNetwork out;
  out.width = net.width;
  for (const DenseLayer& layer : net.layers) {
    const SvdResult s = svd(layer.weight);
    out.layers.push_back({rank_truncate(s, k), layer.bias, layer.activation});
  }
  return out;
}

SingleLayerBound single_layer_bound(const ComplexMatrix& w, const CVec& x,
                                    const CVec& x_tilde, int k,
                                    const CVec& bias) {
  if (!w.square()) throw std::invalid_argument("single_layer_bound: square only");
  if (k < 0 || k >= w.rows) {
    throw std::invalid_argument("single_layer_bound: need 0 <= k < n");
  }
  const SvdResult s = svd(w);
  const double sigma1 = s.singular_values[0];
  const double sigma_k1 = s.singular_values[k];

  SingleLayerBound out;
  out.bound = sigma_k1 * norm2(x) + sigma1 * norm2(diff(x_tilde, x));
  const ComplexMatrix wt = rank_truncate(s, k);
  out.actual = norm2(diff(relu_affine(w, x, bias), relu_affine(wt, x_tilde, bias)));
  return out;
}

BoundReport network_svd_bound(const DenseReluNetwork& net, int k,
                              const std::vector<CVec>& inputs) {
  if (inputs.empty()) {
    throw std::invalid_argument("network_svd_bound: inputs required");
  }
  if (k < 1) throw std::invalid_argument("network_svd_bound: k >= 1");
  const int n = net.width;

  BoundReport report;
  report.depth = net.depth();
  for (const DenseLayer& layer : net.layers) {
    const SvdResult s = svd(layer.weight);
    report.sigma_max_1 = std::max(report.sigma_max_1, s.singular_values[0]);
    if (k - 1 < n) {
      report.sigma_max_k = std::max(report.sigma_max_k, s.singular_values[k - 1]);
    }
    if (k < n) {
      report.sigma_max_k_plus_1 =
          std::max(report.sigma_max_k_plus_1, s.singular_values[k]);
    }
  }

  // R covers every norm the per-layer recurrence touches, the input included
  for (const CVec& x : inputs) {
    report.r_bound = std::max(report.r_bound, norm2(x));
    CVec h = x;
    for (const DenseLayer& layer : net.layers) {
      CVec pre = matvec(layer.weight, h);
      for (size_t i = 0; i < pre.size(); ++i) {
        pre[i] = layer.activation.apply(pre[i] + layer.bias[i]);
      }
      h = std::move(pre);
      report.r_bound = std::max(report.r_bound, norm2(h));
    }
  }

  // explicit geometric sum; exact in the sigma_max_1 -> 1 limit
  double geo = 0.0, power = 1.0;
  for (int i = 0; i < report.depth; ++i) {
    geo += power;
    power *= report.sigma_max_1;
  }
  report.bound_value = geo * report.r_bound * report.sigma_max_k_plus_1;

  const DenseReluNetwork truncated = truncate_network(net, k);
  for (const CVec& x : inputs) {
    const double err = norm2(diff(dense_forward(net, x), dense_forward(truncated, x)));
    report.per_input_errors.push_back(err);
    report.actual_max_error = std::max(report.actual_max_error, err);
    if (err > report.bound_value + 1e-9) report.failed = true;
  }
  return report;
}

DcBoundReport dc_compression_bound(const DenseReluNetwork& net, int k,
                                   const std::vector<CVec>& inputs, double eps,
                                   const FitOptions& opts) {
  if (net.width % std::max(k, 1) != 0) {
    throw std::invalid_argument("dc_compression_bound: k must divide the width");
  }
  DcBoundReport report;
  report.svd = network_svd_bound(net, k, inputs);

  const DenseReluNetwork truncated = truncate_network(net, k);
  const std::vector<int> ranks(net.depth(), k);
  const CompressionResult compressed = compress_network(
      truncated, ranks, eps, CompressionMode::kRankBased, inputs, opts);

  report.dc_depth = compressed.net.depth();
  report.dc_depth_expected = net.depth() * (4 * k + 1);
  for (double e : compressed.layer_errors) {
    report.factorization_residual = std::max(report.factorization_residual, e);
  }
  for (const CVec& x : inputs) {
    const CVec want = dense_forward(net, x);
    const CVec got = dcnn_forward(compressed.net, x);
    report.measured_max_error =
        std::max(report.measured_max_error, norm2(diff(got, want)));
  }
  return report;
}

}  // namespace dcnn
