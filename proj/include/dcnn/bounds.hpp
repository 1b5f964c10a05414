#pragma once

#include <vector>

#include "dcnn/decomposition.hpp"
#include "dcnn/structured_layers.hpp"

namespace dcnn {

/// Per-layer rank-k SVD truncation; biases and activations unchanged.
DenseReluNetwork truncate_network(const DenseReluNetwork& net, int k);

/// One-layer truncation bound sigma_{k+1} |x| + sigma_1 |xt - x| against the
/// measured |relu(W x + b) - relu(Wt xt + b)|.
struct SingleLayerBound {
  double bound = 0.0;
  double actual = 0.0;
};

SingleLayerBound single_layer_bound(const ComplexMatrix& w, const CVec& x,
                                    const CVec& x_tilde, int k,
                                    const CVec& bias = {});

struct BoundReport {
  double sigma_max_1 = 0.0;
  double sigma_max_k = 0.0;         // k-th singular value, reported alongside
  double sigma_max_k_plus_1 = 0.0;  // the index the bound actually uses
  double r_bound = 0.0;             // max layer-output (and input) norm
  int depth = 0;
  double bound_value = 0.0;
  double actual_max_error = 0.0;
  std::vector<double> per_input_errors;
  /// Set when some input's measured error exceeds the bound (beyond 1e-9
  /// numerical slack); the inequality itself is exact mathematics.
  bool failed = false;
};

/// Whole-network truncation bound
///   sum_{i<L} sigma_max_1^i * R * sigma_max_{k+1}
/// evaluated as an explicit geometric sum (exact at sigma_max_1 = 1),
/// against measured errors of the truncated network on the given inputs.
/// R is the largest norm of any layer output, inputs included.
BoundReport network_svd_bound(const DenseReluNetwork& net, int k,
                              const std::vector<CVec>& inputs);

struct DcBoundReport {
  BoundReport svd;                    // truncation part
  int dc_depth = 0;
  int dc_depth_expected = 0;          // L (4k + 1)
  double factorization_residual = 0.0;  // max per-layer certified error
  double measured_max_error = 0.0;      // source network vs compressed chain
};

/// Truncates to rank k (k | n), rewrites the truncated network as a
/// diagonal-circulant chain of depth L(4k+1), and reports the truncation
/// bound together with the measured end-to-end deviation.
DcBoundReport dc_compression_bound(const DenseReluNetwork& net, int k,
                                   const std::vector<CVec>& inputs, double eps,
                                   const FitOptions& opts = {});

}  // namespace dcnn
