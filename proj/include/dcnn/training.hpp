#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcnn/optimizer.hpp"
#include "dcnn/structured_layers.hpp"

namespace dcnn {

// Gradients of a real-valued loss with respect to complex parameters are
// stored as pairs: re(g) = dL/d re(p), im(g) = dL/d im(p).

struct LayerGradients {
  CVec d_diag;
  CVec d_circ;
  CVec d_bias;
};

/// Cached intermediates of one layer forward: input x, convolution C x,
/// and pre-activation D C x + b.
struct LayerTrace {
  CVec input;
  CVec conv;
  CVec pre;
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  CVec output;
};

ForwardTrace dcnn_forward_trace(const DCNetwork& net, const CVec& x);

/// Backward through one layer given its cached trace. Returns the gradient
/// with respect to the layer input.
CVec dc_layer_backward(const DCLayer& layer, const LayerTrace& trace,
                       const CVec& upstream, LayerGradients& grads);

/// Convenience wrapper that runs the forward internally.
std::pair<CVec, LayerGradients> backward_dc_layer(const DCLayer& layer,
                                                  const CVec& x,
                                                  const CVec& upstream);

/// Full reverse pass; returns the gradient with respect to the network input.
CVec dcnn_backward(const DCNetwork& net, const ForwardTrace& trace,
                   CVec upstream, std::vector<LayerGradients>& grads);

/// Compares every analytic parameter/input partial against central finite
/// differences on a fixed quadratic loss; returns the worst relative error.
/// fault_injection adds a spurious offset to one analytic component, giving
/// the checker's failure path a deterministic negative test.
double grad_check(const DCNetwork& net, const CVec& x, double h = 1e-5,
                  double fault_injection = 0.0);

struct LrSchedule {
  /// (step threshold, rate) pairs; thresholds strictly increasing, first 0.
  std::vector<std::pair<long long, double>> entries;

  void validate() const;
  double rate_at(long long step) const;
  /// Piecewise-constant ramp 5e-5 / 2.5e-5 / 5e-6 / 1e-6 with boundaries at
  /// 40%, 60% and 80% of the step budget.
  static LrSchedule classic(long long total_steps);
  static LrSchedule constant(double rate);
};

enum class LossKind { kMse, kSoftmaxCrossEntropy };

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  LrSchedule schedule = LrSchedule::constant(1e-3);
  AdamConfig adam;
  std::optional<double> grad_clip_norm;
  uint64_t seed = 0;
  LossKind loss = LossKind::kMse;
};

struct Dataset {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;  // regression targets
  std::vector<int> labels;                   // classification labels
  int input_dim = 0;
  int target_dim = 0;  // regression output dim / number of classes
  uint64_t generator_seed = 0;
  /// Generating weight of the synthetic regression task, row-major
  /// input_dim x target_dim; empty for other datasets.
  std::vector<double> generating_weight;

  bool classification() const { return !labels.empty(); }
  size_t size() const { return inputs.size(); }
  void validate() const;
};

struct MetricsRecord {
  long long step = 0;
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> accuracy;
  double learning_rate = 0.0;
};

struct MetricsLog {
  std::vector<MetricsRecord> records;
};

enum class TrainStatus { kOk, kNumericalFailure };

struct TrainResult {
  DCNetwork net;
  MetricsLog log;
  TrainStatus status = TrainStatus::kOk;
};

/// Mini-batch Adam with a piecewise-constant schedule. Deterministic for a
/// fixed config: fixed shuffle and accumulation order. The final partial
/// batch is padded by wrapping around the shuffled order. A non-finite batch
/// loss aborts with kNumericalFailure and the last end-of-epoch checkpoint.
TrainResult train(DCNetwork net, const Dataset& data, const TrainConfig& cfg);

/// Mean per-example loss over a dataset (sum over output coordinates).
double evaluate_loss(const DCNetwork& net, const Dataset& data, LossKind loss);
/// Classification accuracy via argmax over the real parts of the leading
/// class-count outputs.
double evaluate_accuracy(const DCNetwork& net, const Dataset& data);

/// Y = X W + noise with X, W uniform on [-1, 1] and noise N(0, 0.01).
Dataset synth_regression(int num_samples, int d_in, int d_out, uint64_t seed);

/// Two-class task: label = [ z_0 > 0 ] for z uniform in [-1,1]^dim with the
/// band |z_0| < 0.1 rejected, observed through a fixed random rotation. The
/// margin keeps perfect accuracy reachable, so the task measures whether
/// deep stacks train at all rather than raw model capacity.
Dataset two_class_dataset(int num_samples, int dim, uint64_t seed);

/// Head/tail split preserving metadata; examples are i.i.d. so the head
/// works as a training set and the tail as a held-out test set.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, int train_count);

struct LossGrad {
  double loss = 0.0;
  CVec grad;
};

/// Sum of |y_i - t_i|^2 over the leading target coordinates.
LossGrad mse_loss(const CVec& y, const std::vector<double>& target);

struct XentResult {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Numerically stable softmax cross-entropy on real logits.
XentResult softmax_xent(const std::vector<double>& logits, int label);

LossGrad classification_loss(const CVec& y, int label, int num_classes);

struct ExperimentVariant {
  std::string name;
  ActivationPattern pattern;
};

struct ExperimentRow {
  int depth = 0;
  std::string variant;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
};

/// Trains one network per (depth, variant) cell on the given split and
/// reports final test accuracy. Deterministic per seed.
std::vector<ExperimentRow> relu_frequency_experiment(
    const Dataset& train_set, const Dataset& test_set,
    const std::vector<int>& depths, const std::vector<ExperimentVariant>& variants,
    int width, const TrainConfig& cfg, double init_sigma_prime,
    uint64_t init_seed);

}  // namespace dcnn
