#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dcnn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a flat real parameter vector. Complex parameters are optimized
/// as independent (re, im) pairs by the callers.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(size_t num_params, AdamConfig cfg = {})
      : cfg_(cfg), m_(num_params, 0.0), v_(num_params, 0.0) {}

  size_t size() const { return m_.size(); }

  void step(std::vector<double>& params, const std::vector<double>& grads,
            double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw std::invalid_argument("AdamOptimizer: size mismatch");
    }
    beta1_pow_ *= cfg_.beta1;
    beta2_pow_ *= cfg_.beta2;
    const double bc1 = 1.0 - beta1_pow_;
    const double bc2 = 1.0 - beta2_pow_;
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  double beta1_pow_ = 1.0;
  double beta2_pow_ = 1.0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace dcnn
