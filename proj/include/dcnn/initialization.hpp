#pragma once

#include <cstdint>
#include <vector>

#include "dcnn/structured_layers.hpp"

namespace dcnn {

/// Width-aware initialization: circulant coefficients are real draws from
/// N(0, 2/n), diagonal entries are uniform on {-1, +1}, biases are real
/// draws from N(0, sigma_prime^2). Each layer owns a disjoint RNG substream
/// so adding layers never perturbs earlier layers' draws.
struct InitConfig {
  double sigma_prime = 0.0;
  uint64_t seed = 0;

  static double sigma_for_width(int n);
};

DCNetwork init_dcnn(DCNetwork net, const InitConfig& cfg);

/// Monte-Carlo estimate of the output covariance of a freshly initialized
/// network at a fixed input, over independent re-initializations.
struct CovarianceReport {
  std::vector<double> diag_estimates;
  double max_offdiag_abs = 0.0;
  /// |cov(i,j)| of the worst pair measured in its own empirical standard
  /// errors; stays below ~4 when the off-diagonals are genuinely zero.
  double max_offdiag_se_units = 0.0;
  int n_samples = 0;
  double predicted_diag = 0.0;  // (2/n) * |x|^2
};

/// Re-initializes a width-n, depth-l network (ReLU on layers 1..l-1,
/// identity on layer l, zero biases) num_samples times and accumulates the
/// covariance of the output at x. num_samples < 100 is rejected, as is a
/// nonzero sigma_prime.
CovarianceReport covariance_probe(int width, int depth,
                                  const std::vector<double>& x,
                                  int num_samples, const InitConfig& cfg);

/// Single-block check of the variance rule var(y_i) = sum_j u_j^2 sigma^2
/// for y = D C u over re-draws of C and D at a fixed real u.
struct VarianceReport {
  std::vector<double> variance_estimates;
  double predicted_variance = 0.0;
  double max_offdiag_abs = 0.0;
  double max_offdiag_se_units = 0.0;
  /// Worst per-coordinate |sample variance - predicted| in standard errors.
  double max_variance_se_units = 0.0;
  int n_samples = 0;
};

VarianceReport variance_check_fixed_u(const std::vector<double>& u, double sigma,
                                      int num_samples, uint64_t seed);

}  // namespace dcnn
