#include "dcnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dcnn/initialization.hpp"
#include "dcnn/rng.hpp"

namespace dcnn {

namespace {

CVec masked_upstream(const DCLayer& layer, const LayerTrace& trace,
                     const CVec& upstream) {
  const int n = layer.width();
  CVec m(n);
  for (int i = 0; i < n; ++i) {
    const auto [mre, mim] = layer.activation.mask(trace.pre[i]);
    m[i] = Complex(mre * upstream[i].real(), mim * upstream[i].imag());
  }
  return m;
}

}  // namespace

ForwardTrace dcnn_forward_trace(const DCNetwork& net, const CVec& x) {
  ForwardTrace trace;
  trace.layers.reserve(net.layers.size());
  CVec h = x;
  for (const DCLayer& layer : net.layers) {
    LayerTrace lt;
    lt.input = h;
    lt.conv = circ_matvec(layer.circ, h);
    lt.pre.resize(layer.width());
    for (int i = 0; i < layer.width(); ++i) {
      lt.pre[i] = layer.diag.entries[i] * lt.conv[i] + layer.bias[i];
    }
    h.resize(layer.width());
    for (int i = 0; i < layer.width(); ++i) h[i] = layer.activation.apply(lt.pre[i]);
    trace.layers.push_back(std::move(lt));
  }
  trace.output = std::move(h);
  return trace;
}

CVec dc_layer_backward(const DCLayer& layer, const LayerTrace& trace,
                       const CVec& upstream, LayerGradients& grads) {
  const int n = layer.width();
  if (static_cast<int>(upstream.size()) != n) {
    throw std::invalid_argument("dc_layer_backward: upstream width mismatch");
  }
  const CVec m = masked_upstream(layer, trace, upstream);

  grads.d_bias = m;
  grads.d_diag.resize(n);
  CVec gu(n);
  for (int i = 0; i < n; ++i) {
    grads.d_diag[i] = m[i] * std::conj(trace.conv[i]);
    gu[i] = m[i] * std::conj(layer.diag.entries[i]);
  }
  grads.d_circ = circular_correlation(gu, trace.input);
  return circular_correlation(gu, layer.circ.coeffs());
}

std::pair<CVec, LayerGradients> backward_dc_layer(const DCLayer& layer,
                                                  const CVec& x,
                                                  const CVec& upstream) {
  LayerTrace trace;
  trace.input = x;
  trace.conv = circ_matvec(layer.circ, x);
  trace.pre.resize(layer.width());
  for (int i = 0; i < layer.width(); ++i) {
    trace.pre[i] = layer.diag.entries[i] * trace.conv[i] + layer.bias[i];
  }
  LayerGradients grads;
  CVec downstream = dc_layer_backward(layer, trace, upstream, grads);
  return {std::move(downstream), std::move(grads)};
}

CVec dcnn_backward(const DCNetwork& net, const ForwardTrace& trace,
                   CVec upstream, std::vector<LayerGradients>& grads) {
  grads.resize(net.layers.size());
  for (int l = net.depth() - 1; l >= 0; --l) {
    upstream = dc_layer_backward(net.layers[l], trace.layers[l], upstream, grads[l]);
  }
  return upstream;
}

namespace {

size_t param_offset(int width, int layer) {
  return static_cast<size_t>(layer) * 6 * width;
}

std::vector<double> flatten_params(const DCNetwork& net) {
  const int n = net.width;
  std::vector<double> out(static_cast<size_t>(6) * n * net.depth());
  for (int l = 0; l < net.depth(); ++l) {
    double* p = out.data() + param_offset(n, l);
    const DCLayer& layer = net.layers[l];
    for (int i = 0; i < n; ++i) {
      p[2 * i] = layer.diag.entries[i].real();
      p[2 * i + 1] = layer.diag.entries[i].imag();
      p[2 * n + 2 * i] = layer.circ.coeffs()[i].real();
      p[2 * n + 2 * i + 1] = layer.circ.coeffs()[i].imag();
      p[4 * n + 2 * i] = layer.bias[i].real();
      p[4 * n + 2 * i + 1] = layer.bias[i].imag();
    }
  }
  return out;
}

void apply_params(DCNetwork& net, const std::vector<double>& params) {
  const int n = net.width;
  for (int l = 0; l < net.depth(); ++l) {
    const double* p = params.data() + param_offset(n, l);
    DCLayer& layer = net.layers[l];
    CVec circ(n);
    for (int i = 0; i < n; ++i) {
      layer.diag.entries[i] = Complex(p[2 * i], p[2 * i + 1]);
      circ[i] = Complex(p[2 * n + 2 * i], p[2 * n + 2 * i + 1]);
      layer.bias[i] = Complex(p[4 * n + 2 * i], p[4 * n + 2 * i + 1]);
    }
    layer.circ.set_coeffs(std::move(circ));
  }
  net.ensure_spectra();
}

void accumulate_gradients(const std::vector<LayerGradients>& grads, int width,
                          double scale, std::vector<double>& flat) {
  for (size_t l = 0; l < grads.size(); ++l) {
    double* p = flat.data() + param_offset(width, static_cast<int>(l));
    for (int i = 0; i < width; ++i) {
      p[2 * i] += scale * grads[l].d_diag[i].real();
      p[2 * i + 1] += scale * grads[l].d_diag[i].imag();
      p[2 * width + 2 * i] += scale * grads[l].d_circ[i].real();
      p[2 * width + 2 * i + 1] += scale * grads[l].d_circ[i].imag();
      p[4 * width + 2 * i] += scale * grads[l].d_bias[i].real();
      p[4 * width + 2 * i + 1] += scale * grads[l].d_bias[i].imag();
    }
  }
}

LossGrad example_loss(const DCNetwork& net, const Dataset& data, size_t idx,
                      const CVec& out, LossKind loss) {
  (void)net;
  if (loss == LossKind::kMse) {
    return mse_loss(out, data.targets[idx]);
  }
  return classification_loss(out, data.labels[idx], data.target_dim);
}

}  // namespace

double grad_check(const DCNetwork& net, const CVec& x, double h,
                  double fault_injection) {
  const int n = net.width;
  CounterRng trng(0xFEEDFACEULL, static_cast<uint64_t>(n));
  CVec target(n);
  for (int i = 0; i < n; ++i) {
    target[i] = Complex(trng.uniform(-1.0, 1.0), trng.uniform(-1.0, 1.0));
  }
  const auto loss_of = [&](const DCNetwork& m, const CVec& in) {
    const CVec y = dcnn_forward(m, in);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += std::norm(y[i] - target[i]);
    return acc;
  };

  ForwardTrace trace = dcnn_forward_trace(net, x);
  CVec upstream(n);
  for (int i = 0; i < n; ++i) upstream[i] = 2.0 * (trace.output[i] - target[i]);
  std::vector<LayerGradients> grads;
  const CVec input_grad = dcnn_backward(net, trace, upstream, grads);

  std::vector<double> analytic = std::vector<double>(6 * n * net.depth());
  accumulate_gradients(grads, n, 1.0, analytic);
  if (fault_injection != 0.0 && !analytic.empty()) {
    analytic[analytic.size() / 2] += fault_injection;
  }
  std::vector<double> params = flatten_params(net);

  double worst = 0.0;
  const auto consider = [&](double a, double fd) {
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-4});
    worst = std::max(worst, std::abs(a - fd) / denom);
  };

  DCNetwork work = net;
  for (size_t p = 0; p < params.size(); ++p) {
    std::vector<double> bumped = params;
    bumped[p] += h;
    apply_params(work, bumped);
    const double lp = loss_of(work, x);
    bumped[p] = params[p] - h;
    apply_params(work, bumped);
    const double lm = loss_of(work, x);
    consider(analytic[p], (lp - lm) / (2.0 * h));
  }
  apply_params(work, params);

  for (int i = 0; i < n; ++i) {
    for (int comp = 0; comp < 2; ++comp) {
      CVec xp = x, xm = x;
      const Complex delta = comp == 0 ? Complex(h, 0.0) : Complex(0.0, h);
      xp[i] += delta;
      xm[i] -= delta;
      const double fd = (loss_of(net, xp) - loss_of(net, xm)) / (2.0 * h);
      const double a = comp == 0 ? input_grad[i].real() : input_grad[i].imag();
      consider(a, fd);
    }
  }
  return worst;
}

void LrSchedule::validate() const {
  if (entries.empty()) throw std::invalid_argument("schedule: empty");
  if (entries.front().first != 0) {
    throw std::invalid_argument("schedule: first threshold must be 0");
  }
  for (size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].first <= entries[i - 1].first) {
      throw std::invalid_argument("schedule: thresholds must strictly increase");
    }
  }
  for (const auto& [step, rate] : entries) {
    if (!(rate >= 0.0) || !std::isfinite(rate)) {
      throw std::invalid_argument("schedule: rates must be finite and >= 0");
    }
  }
}

double LrSchedule::rate_at(long long step) const {
  double rate = entries.front().second;
  for (const auto& [threshold, r] : entries) {
    if (step >= threshold) rate = r;
  }
  return rate;
}

LrSchedule LrSchedule::classic(long long total_steps) {
  LrSchedule s;
  s.entries.push_back({0, 5e-5});
  const long long b1 = std::max<long long>(1, total_steps * 2 / 5);
  const long long b2 = std::max<long long>(b1 + 1, total_steps * 3 / 5);
  const long long b3 = std::max<long long>(b2 + 1, total_steps * 4 / 5);
  s.entries.push_back({b1, 2.5e-5});
  s.entries.push_back({b2, 5e-6});
  s.entries.push_back({b3, 1e-6});
  return s;
}

LrSchedule LrSchedule::constant(double rate) {
  LrSchedule s;
  s.entries.push_back({0, rate});
  return s;
}

void Dataset::validate() const {
  if (inputs.empty()) throw std::invalid_argument("dataset: empty");
  if (classification()) {
    if (labels.size() != inputs.size()) {
      throw std::invalid_argument("dataset: label count mismatch");
    }
  } else if (targets.size() != inputs.size()) {
    throw std::invalid_argument("dataset: target count mismatch");
  }
  for (const auto& row : inputs) {
    if (static_cast<int>(row.size()) != input_dim) {
      throw std::invalid_argument("dataset: ragged inputs");
    }
  }
}

LossGrad mse_loss(const CVec& y, const std::vector<double>& target) {
  if (target.size() > y.size()) {
    throw std::invalid_argument("mse_loss: target wider than output");
  }
  LossGrad out;
  out.grad.assign(y.size(), Complex{});
  for (size_t i = 0; i < target.size(); ++i) {
    const Complex diff = y[i] - Complex(target[i], 0.0);
    out.loss += std::norm(diff);
    out.grad[i] = 2.0 * diff;
  }
  return out;
}

XentResult softmax_xent(const std::vector<double>& logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size())) {
    throw std::invalid_argument("softmax_xent: label out of range");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  XentResult out;
  out.loss = std::log(z) - (logits[label] - mx);
  out.grad.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    out.grad[i] = std::exp(logits[i] - mx) / z -
                  (static_cast<int>(i) == label ? 1.0 : 0.0);
  }
  return out;
}

LossGrad classification_loss(const CVec& y, int label, int num_classes) {
  if (num_classes > static_cast<int>(y.size())) {
    throw std::invalid_argument("classification_loss: more classes than outputs");
  }
  const XentResult x = softmax_xent(read_real(y, num_classes), label);
  LossGrad out;
  out.loss = x.loss;
  out.grad.assign(y.size(), Complex{});
  for (int i = 0; i < num_classes; ++i) out.grad[i] = Complex(x.grad[i], 0.0);
  return out;
}

double evaluate_loss(const DCNetwork& net, const Dataset& data, LossKind loss) {
  double acc = 0.0;
  for (size_t i = 0; i < data.size(); ++i) {
    const CVec out = dcnn_forward(net, embed_real(data.inputs[i], net.width));
    acc += example_loss(net, data, i, out, loss).loss;
  }
  return acc / static_cast<double>(data.size());
}

double evaluate_accuracy(const DCNetwork& net, const Dataset& data) {
  if (!data.classification()) {
    throw std::invalid_argument("evaluate_accuracy: not a classification set");
  }
  int hits = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    const CVec out = dcnn_forward(net, embed_real(data.inputs[i], net.width));
    const std::vector<double> logits = read_real(out, data.target_dim);
    const int pred = static_cast<int>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (pred == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train(DCNetwork net, const Dataset& data, const TrainConfig& cfg) {
  cfg.schedule.validate();
  data.validate();
  if (cfg.batch_size < 1 || cfg.epochs < 0) {
    throw std::invalid_argument("train: bad batch size or epoch count");
  }
  if (data.input_dim > net.width) {
    throw std::invalid_argument("train: input dim exceeds network width");
  }
  if (data.target_dim > net.width) {
    throw std::invalid_argument("train: target dim exceeds network width");
  }
  net.ensure_spectra();

  const int n = net.width;
  std::vector<double> params = flatten_params(net);
  AdamOptimizer adam(params.size(), cfg.adam);
  std::vector<double> grads(params.size());

  MetricsLog log;
  DCNetwork checkpoint = net;
  long long step = 0;

  const auto record = [&](int epoch) {
    MetricsRecord r;
    r.step = step;
    r.epoch = epoch;
    r.loss = evaluate_loss(net, data, cfg.loss);
    if (data.classification()) r.accuracy = evaluate_accuracy(net, data);
    r.learning_rate = cfg.schedule.rate_at(step);
    log.records.push_back(std::move(r));
  };

  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  record(0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    CounterRng shuffle_rng(cfg.seed, 0xE40C0000ULL + static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }

    const size_t batches = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
    for (size_t b = 0; b < batches; ++b) {
      std::fill(grads.begin(), grads.end(), 0.0);
      double batch_loss = 0.0;
      const double scale = 1.0 / static_cast<double>(cfg.batch_size);
      for (int e = 0; e < cfg.batch_size; ++e) {
        // the final partial batch wraps around the shuffled order
        const size_t idx = order[(b * cfg.batch_size + e) % order.size()];
        const CVec x = embed_real(data.inputs[idx], n);
        ForwardTrace trace = dcnn_forward_trace(net, x);
        LossGrad lg = example_loss(net, data, idx, trace.output, cfg.loss);
        batch_loss += scale * lg.loss;
        std::vector<LayerGradients> layer_grads;
        dcnn_backward(net, trace, std::move(lg.grad), layer_grads);
        accumulate_gradients(layer_grads, n, scale, grads);
      }
      if (!std::isfinite(batch_loss)) {
        return {std::move(checkpoint), std::move(log), TrainStatus::kNumericalFailure};
      }
      if (cfg.grad_clip_norm) {
        double norm = 0.0;
        for (double g : grads) norm += g * g;
        norm = std::sqrt(norm);
        if (norm > *cfg.grad_clip_norm && norm > 0.0) {
          const double s = *cfg.grad_clip_norm / norm;
          for (double& g : grads) g *= s;
        }
      }
      const double lr_before = cfg.schedule.rate_at(step);
      adam.step(params, grads, lr_before);
      apply_params(net, params);
      ++step;
      if (cfg.schedule.rate_at(step) != lr_before) record(epoch);
    }
    record(epoch);
    checkpoint = net;
  }
  return {std::move(net), std::move(log), TrainStatus::kOk};
}

Dataset synth_regression(int num_samples, int d_in, int d_out, uint64_t seed) {
  if (num_samples < 1 || d_in < 1 || d_out < 1) {
    throw std::invalid_argument("synth_regression: dims must be >= 1");
  }
  Dataset out;
  out.input_dim = d_in;
  out.target_dim = d_out;
  out.generator_seed = seed;

  CounterRng wrng(seed, 0);
  out.generating_weight.resize(static_cast<size_t>(d_in) * d_out);
  for (double& w : out.generating_weight) w = wrng.uniform(-1.0, 1.0);

  CounterRng xrng(seed, 1);
  CounterRng erng(seed, 2);
  out.inputs.reserve(num_samples);
  out.targets.reserve(num_samples);
  for (int s = 0; s < num_samples; ++s) {
    std::vector<double> x(d_in);
    for (double& v : x) v = xrng.uniform(-1.0, 1.0);
    std::vector<double> y(d_out, 0.0);
    for (int j = 0; j < d_out; ++j) {
      for (int i = 0; i < d_in; ++i) {
        y[j] += x[i] * out.generating_weight[static_cast<size_t>(i) * d_out + j];
      }
      y[j] += 0.1 * erng.normal();  // noise variance 0.01
    }
    out.inputs.push_back(std::move(x));
    out.targets.push_back(std::move(y));
  }
  return out;
}

Dataset two_class_dataset(int num_samples, int dim, uint64_t seed) {
  if (num_samples < 1 || dim < 1) {
    throw std::invalid_argument("two_class_dataset: bad shape");
  }
  Dataset out;
  out.input_dim = dim;
  out.target_dim = 2;
  out.generator_seed = seed;

  // fixed random rotation so the informative direction is not axis-aligned
  CounterRng qrng(seed, 0);
  std::vector<std::vector<double>> q(dim, std::vector<double>(dim));
  for (int j = 0; j < dim; ++j) {
    for (int i = 0; i < dim; ++i) q[j][i] = qrng.normal();
    for (int p = 0; p < j; ++p) {
      double dot = 0.0;
      for (int i = 0; i < dim; ++i) dot += q[j][i] * q[p][i];
      for (int i = 0; i < dim; ++i) q[j][i] -= dot * q[p][i];
    }
    double nrm = 0.0;
    for (int i = 0; i < dim; ++i) nrm += q[j][i] * q[j][i];
    nrm = std::sqrt(nrm);
    for (int i = 0; i < dim; ++i) q[j][i] /= nrm;
  }

  CounterRng zrng(seed, 1);
  out.inputs.reserve(num_samples);
  out.labels.reserve(num_samples);
  while (static_cast<int>(out.inputs.size()) < num_samples) {
    std::vector<double> z(dim);
    for (double& v : z) v = zrng.uniform(-1.0, 1.0);
    if (std::abs(z[0]) < 0.1) continue;  // margin band
    const int label = z[0] > 0.0 ? 1 : 0;
    std::vector<double> x(dim, 0.0);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) x[i] += q[j][i] * z[j];
    }
    out.inputs.push_back(std::move(x));
    out.labels.push_back(label);
  }
  return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, int train_count) {
  if (train_count < 1 || train_count >= static_cast<int>(data.size())) {
    throw std::invalid_argument("split_dataset: bad train count");
  }
  Dataset head = data, tail = data;
  head.inputs.assign(data.inputs.begin(), data.inputs.begin() + train_count);
  tail.inputs.assign(data.inputs.begin() + train_count, data.inputs.end());
  if (data.classification()) {
    head.labels.assign(data.labels.begin(), data.labels.begin() + train_count);
    tail.labels.assign(data.labels.begin() + train_count, data.labels.end());
  } else {
    head.targets.assign(data.targets.begin(), data.targets.begin() + train_count);
    tail.targets.assign(data.targets.begin() + train_count, data.targets.end());
  }
  return {std::move(head), std::move(tail)};
}

std::vector<ExperimentRow> relu_frequency_experiment(
    const Dataset& train_set, const Dataset& test_set,
    const std::vector<int>& depths, const std::vector<ExperimentVariant>& variants,
    int width, const TrainConfig& cfg, double init_sigma_prime,
    uint64_t init_seed) {
  if (!train_set.classification() || !test_set.classification()) {
    throw std::invalid_argument("relu_frequency_experiment: classification task required");
  }
  std::vector<ExperimentRow> rows;
  for (int depth : depths) {
    // one seed per depth: identical skeletons train identically, so
    // pattern choices that coincide (e.g. depth 1) report equal accuracy
    const uint64_t seed = CounterRng::mix(init_seed + 0x9E37 * static_cast<uint64_t>(depth));
    for (const ExperimentVariant& variant : variants) {
      DCNetwork net = build_dcnn(width, depth, variant.pattern, /*last_identity=*/true);
      net = init_dcnn(std::move(net), InitConfig{init_sigma_prime, seed});
      TrainConfig cell_cfg = cfg;
      cell_cfg.loss = LossKind::kSoftmaxCrossEntropy;
      cell_cfg.seed = seed;
      TrainResult result = train(std::move(net), train_set, cell_cfg);
      ExperimentRow row;
      row.depth = depth;
      row.variant = variant.name;
      row.diverged = result.status != TrainStatus::kOk ||
                     !std::isfinite(result.log.records.back().loss);
      row.final_loss = result.log.records.back().loss;
      row.test_accuracy = row.diverged ? 0.0 : evaluate_accuracy(result.net, test_set);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace dcnn
