#include "dcnn/initialization.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dcnn/rng.hpp"

namespace dcnn {

namespace {
// Substream layout: three streams per layer, in layer order.
enum : uint64_t { kCircStream = 0, kDiagStream = 1, kBiasStream = 2 };
}  // namespace

double InitConfig::sigma_for_width(int n) {
  return std::sqrt(2.0 / static_cast<double>(n));
}

DCNetwork init_dcnn(DCNetwork net, const InitConfig& cfg) {
  const int n = net.width;
  const double sigma = InitConfig::sigma_for_width(n);
  for (size_t l = 0; l < net.layers.size(); ++l) {
    DCLayer& layer = net.layers[l];

    CounterRng circ_rng(cfg.seed, 3 * l + kCircStream);
    CVec coeffs(n);
    for (int i = 0; i < n; ++i) coeffs[i] = Complex(sigma * circ_rng.normal(), 0.0);
    layer.circ.set_coeffs(std::move(coeffs));

    CounterRng diag_rng(cfg.seed, 3 * l + kDiagStream);
    for (int i = 0; i < n; ++i) layer.diag.entries[i] = Complex(diag_rng.sign_pm1(), 0.0);

    CounterRng bias_rng(cfg.seed, 3 * l + kBiasStream);
    for (int i = 0; i < n; ++i) {
      layer.bias[i] = cfg.sigma_prime == 0.0
                          ? Complex{}
                          : Complex(cfg.sigma_prime * bias_rng.normal(), 0.0);
    }
  }
  net.ensure_spectra();
  return net;
}

CovarianceReport covariance_probe(int width, int depth,
                                  const std::vector<double>& x,
                                  int num_samples, const InitConfig& cfg) {
  if (num_samples < 100) {
    throw std::invalid_argument("covariance_probe: num_samples must be >= 100");
  }
  if (cfg.sigma_prime != 0.0) {
    throw std::invalid_argument("covariance_probe: requires sigma_prime = 0");
  }
  if (static_cast<int>(x.size()) != width) {
    throw std::invalid_argument("covariance_probe: x must have length width");
  }

  const ActivationPattern relu_all{1, ActKind::kComplexRelu, 1.0};
  DCNetwork shape = build_dcnn(width, depth, relu_all, /*last_identity=*/true);
  const CVec xin = embed_real(x, width);

  const int n = width;
  std::vector<double> sum(n, 0.0);
  std::vector<double> sum_prod(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> sum_prod_sq(static_cast<size_t>(n) * n, 0.0);

  CounterRng seeder(cfg.seed, 0x5eedf00dULL);
  for (int s = 0; s < num_samples; ++s) {
    const InitConfig sample_cfg{0.0, seeder.next_u64()};
    const DCNetwork net = init_dcnn(shape, sample_cfg);
    const CVec out = dcnn_forward(net, xin);
    for (int i = 0; i < n; ++i) {
      const double yi = out[i].real();
      sum[i] += yi;
      for (int j = i; j < n; ++j) {
        const double p = yi * out[j].real();
        sum_prod[static_cast<size_t>(i) * n + j] += p;
        sum_prod_sq[static_cast<size_t>(i) * n + j] += p * p;
      }
    }
  }

  CovarianceReport report;
  report.n_samples = num_samples;
  double xnorm2 = 0.0;
  for (double v : x) xnorm2 += v * v;
  report.predicted_diag = 2.0 * xnorm2 / static_cast<double>(n);
  report.diag_estimates.resize(n);

  const double ns = static_cast<double>(num_samples);
  for (int i = 0; i < n; ++i) {
    const double mean_i = sum[i] / ns;
    for (int j = i; j < n; ++j) {
      const size_t idx = static_cast<size_t>(i) * n + j;
      const double mean_j = sum[j] / ns;
      const double cov =
          (sum_prod[idx] - ns * mean_i * mean_j) / (ns - 1.0);
      if (i == j) {
        report.diag_estimates[i] = cov;
      } else {
        const double mean_p = sum_prod[idx] / ns;
        const double var_p =
            std::max(0.0, sum_prod_sq[idx] / ns - mean_p * mean_p);
        const double se = std::sqrt(var_p / ns);
        report.max_offdiag_abs = std::max(report.max_offdiag_abs, std::abs(cov));
        if (se > 0.0) {
          report.max_offdiag_se_units =
              std::max(report.max_offdiag_se_units, std::abs(cov) / se);
        }
      }
    }
  }
  return report;
}

VarianceReport variance_check_fixed_u(const std::vector<double>& u, double sigma,
                                      int num_samples, uint64_t seed) {
  if (num_samples < 2) {
    throw std::invalid_argument("variance_check_fixed_u: need at least 2 samples");
  }
  const int n = static_cast<int>(u.size());
  const CVec uc = embed_real(u, n);

  std::vector<double> sum(n, 0.0);
  std::vector<double> sum_sq(n, 0.0);
  std::vector<double> sum_sq_sq(n, 0.0);
  std::vector<double> sum_prod(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> sum_prod_sq(static_cast<size_t>(n) * n, 0.0);

  for (int s = 0; s < num_samples; ++s) {
    CounterRng crng(seed, 2 * static_cast<uint64_t>(s));
    CounterRng drng(seed, 2 * static_cast<uint64_t>(s) + 1);
    CVec coeffs(n);
    for (int i = 0; i < n; ++i) coeffs[i] = Complex(sigma * crng.normal(), 0.0);
    CirculantMatrix c(std::move(coeffs));
    CVec y = circ_matvec(c, uc);
    for (int i = 0; i < n; ++i) y[i] *= drng.sign_pm1();

    for (int i = 0; i < n; ++i) {
      const double yi = y[i].real();
      sum[i] += yi;
      sum_sq[i] += yi * yi;
      sum_sq_sq[i] += yi * yi * yi * yi;
      for (int j = i + 1; j < n; ++j) {
        const double p = yi * y[j].real();
        sum_prod[static_cast<size_t>(i) * n + j] += p;
        sum_prod_sq[static_cast<size_t>(i) * n + j] += p * p;
      }
    }
  }

  VarianceReport report;
  report.n_samples = num_samples;
  for (double v : u) report.predicted_variance += v * v * sigma * sigma;
  report.variance_estimates.resize(n);

  const double ns = static_cast<double>(num_samples);
  for (int i = 0; i < n; ++i) {
    const double mean = sum[i] / ns;
    const double var = (sum_sq[i] - ns * mean * mean) / (ns - 1.0);
    report.variance_estimates[i] = var;
    const double mean_sq = sum_sq[i] / ns;
    const double var_of_sq =
        std::max(0.0, sum_sq_sq[i] / ns - mean_sq * mean_sq);
    const double se = std::sqrt(var_of_sq / ns);
    if (se > 0.0) {
      report.max_variance_se_units =
          std::max(report.max_variance_se_units,
                   std::abs(var - report.predicted_variance) / se);
    } else if (var != report.predicted_variance) {
      report.max_variance_se_units = std::numeric_limits<double>::infinity();
    }
    for (int j = i + 1; j < n; ++j) {
      const size_t idx = static_cast<size_t>(i) * n + j;
      const double mean_j = sum[j] / ns;
      const double cov = (sum_prod[idx] - ns * mean * mean_j) / (ns - 1.0);
      const double mean_p = sum_prod[idx] / ns;
      const double var_p =
          std::max(0.0, sum_prod_sq[idx] / ns - mean_p * mean_p);
      const double se_p = std::sqrt(var_p / ns);
      report.max_offdiag_abs = std::max(report.max_offdiag_abs, std::abs(cov));
      if (se_p > 0.0) {
        report.max_offdiag_se_units =
            std::max(report.max_offdiag_se_units, std::abs(cov) / se_p);
      }
    }
  }
  return report;
}

}  // namespace dcnn
