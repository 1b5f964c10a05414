// dcnn: command-line driver for diagonal-circulant network experiments.
// Exit codes: 0 success, 1 input/validation error, 2 numerical criterion
// not met.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dcnn/bench.hpp"
#include "dcnn/bounds.hpp"
#include "dcnn/decomposition.hpp"
#include "dcnn/initialization.hpp"
#include "dcnn/model_io.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/training.hpp"

using nlohmann::json;
using namespace dcnn;

namespace {

uint64_t default_seed() {
  if (const char* env = std::getenv("DCNN_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw std::invalid_argument("DCNN_SEED must be an unsigned integer");
    }
  }
  return 0;
}

LrSchedule parse_schedule(const std::string& text, long long total_steps) {
  if (text.empty() || text == "classic") return LrSchedule::classic(total_steps);
  LrSchedule s;
  std::istringstream in(text);
  std::string entry;
  while (std::getline(in, entry, ',')) {
    const size_t colon = entry.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("schedule entries must look like step:rate");
    }
    s.entries.emplace_back(std::stoll(entry.substr(0, colon)),
                           std::stod(entry.substr(colon + 1)));
  }
  s.validate();
  return s;
}

std::vector<CVec> read_inputs(const std::string& path, int width) {
  const Dataset data = read_dataset_csv(path);
  if (data.input_dim > width) {
    throw std::invalid_argument("inputs wider than the model");
  }
  std::vector<CVec> out;
  out.reserve(data.size());
  for (const auto& row : data.inputs) out.push_back(embed_real(row, width));
  return out;
}

int cmd_decompose(const std::string& matrix_file, int rank, double eps,
                  const std::string& mode, const std::string& out_path) {
  const ModelFile model = parse_model(read_text_file(matrix_file));
  if (model.kind != ModelKind::kMatrix) {
    throw std::invalid_argument("decompose expects a matrix file");
  }
  FactorSequence fs;
  double best = -1.0;
  bool certified = true;
  try {
    if (mode == "rank") {
      fs = full_decompose(model.matrix, rank, eps);
    } else {
      fs = sum_to_product(shifted_diag_decompose(model.matrix), eps);
    }
  } catch (const NumericalError& e) {
    certified = false;
    best = e.best_error();
  }
  if (!certified) {
    std::cerr << "decompose: certified error above eps (best " << best << ")\n";
    return 2;
  }
  write_text_file(out_path, serialize_factor_sequence(fs, {0, ""}));
  std::cout << "factors=" << fs.count()
            << " certified_error=" << fs.reconstruction_error << "\n";
  return 0;
}

int cmd_train(const std::string& dataset_path, int depth, int width,
              int relu_every, double slope, double sigma_prime, uint64_t seed,
              const std::string& schedule_text, int epochs, int batch_size,
              const std::string& out_path, const std::string& metrics_path) {
  const Dataset data = read_dataset_csv(dataset_path);
  const long long total_steps =
      static_cast<long long>(epochs) *
      ((data.size() + batch_size - 1) / batch_size);

  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.schedule = parse_schedule(schedule_text, total_steps);
  cfg.seed = seed;
  cfg.loss = data.classification() ? LossKind::kSoftmaxCrossEntropy
                                   : LossKind::kMse;

  const ActivationPattern pattern{relu_every,
                                  slope < 1.0 ? ActKind::kLeakyComplexRelu
                                              : ActKind::kComplexRelu,
                                  slope};
  DCNetwork net = init_dcnn(build_dcnn(width, depth, pattern, true),
                            {sigma_prime, seed});

  const TrainResult result = train(std::move(net), data, cfg);
  json cfg_json = {{"depth", depth},       {"width", width},
                   {"relu_every", relu_every}, {"slope", slope},
                   {"sigma_prime", sigma_prime}, {"seed", seed},
                   {"epochs", epochs},     {"batch", batch_size}};
  const Provenance prov{seed, fnv1a_hex(cfg_json.dump())};
  write_text_file(out_path, serialize_dcnn(result.net, prov));
  if (!metrics_path.empty()) {
    write_text_file(metrics_path, metrics_to_jsonl(result.log));
  }
  const MetricsRecord& last = result.log.records.back();
  std::cout << "final_loss=" << last.loss;
  if (last.accuracy) std::cout << " accuracy=" << *last.accuracy;
  std::cout << "\n";
  if (result.status != TrainStatus::kOk) {
    std::cerr << "train: aborted on non-finite loss; wrote last checkpoint\n";
    return 2;
  }
  return 0;
}

int cmd_init_probe(int width, int depth, int samples, uint64_t seed,
                   const std::string& out_path) {
  const std::vector<double> x(width, 1.0);
  const CovarianceReport report =
      covariance_probe(width, depth, x, samples, {0.0, seed});
  const json out = {
      {"width", width},
      {"depth", depth},
      {"n_samples", report.n_samples},
      {"predicted_diag", report.predicted_diag},
      {"diag_estimates", report.diag_estimates},
      {"max_offdiag_abs", report.max_offdiag_abs},
      {"max_offdiag_se_units", report.max_offdiag_se_units},
  };
  write_text_file(out_path, out.dump());
  double worst = 0.0;
  for (double d : report.diag_estimates) {
    worst = std::max(worst,
                     std::abs(d - report.predicted_diag) / report.predicted_diag);
  }
  std::cout << "predicted=" << report.predicted_diag << " worst_rel_dev=" << worst
            << " offdiag_se_units=" << report.max_offdiag_se_units << "\n";
  return 0;
}

int cmd_bound(const std::string& model_path, int rank,
              const std::string& inputs_path, bool dc_check, double eps,
              const std::string& out_path) {
  const ModelFile model = parse_model(read_text_file(model_path));
  if (model.kind != ModelKind::kDense) {
    throw std::invalid_argument("bound expects a dense model file");
  }
  const std::vector<CVec> inputs = read_inputs(inputs_path, model.dense.width);
  const BoundReport report = network_svd_bound(model.dense, rank, inputs);
  json out = {
      {"sigma_max_1", report.sigma_max_1},
      {"sigma_max_k", report.sigma_max_k},
      {"sigma_max_k_plus_1", report.sigma_max_k_plus_1},
      {"r_bound", report.r_bound},
      {"depth", report.depth},
      {"bound_value", report.bound_value},
      {"actual_max_error", report.actual_max_error},
      {"per_input_errors", report.per_input_errors},
      {"failed", report.failed},
  };
  if (dc_check) {
    const DcBoundReport dc = dc_compression_bound(model.dense, rank, inputs, eps);
    out["dc_depth"] = dc.dc_depth;
    out["dc_depth_expected"] = dc.dc_depth_expected;
    out["factorization_residual"] = dc.factorization_residual;
    out["measured_max_error"] = dc.measured_max_error;
  }
  write_text_file(out_path, out.dump());
  std::cout << "bound=" << report.bound_value
            << " actual_max=" << report.actual_max_error << "\n";
  return report.failed ? 2 : 0;
}

int cmd_linearize(const std::string& model_path, const std::string& samples_path,
                  const std::string& out_path) {
  const ModelFile model = parse_model(read_text_file(model_path));
  if (model.kind != ModelKind::kDense) {
    throw std::invalid_argument("linearize expects a dense model file");
  }
  const DenseReluNetwork& net = model.dense;
  const std::vector<CVec> samples = read_inputs(samples_path, net.width);

  std::vector<ComplexMatrix> weights;
  for (const DenseLayer& layer : net.layers) weights.push_back(layer.weight);
  const CVec& b = net.layers.back().bias;
  const std::vector<CVec> betas = linearizing_biases(weights, b, samples);

  // two-path verification on the samples
  double gap = 0.0;
  for (const CVec& x : samples) {
    CVec h = x;
    for (size_t j = 0; j < weights.size(); ++j) {
      h = matvec(weights[j], h);
      for (size_t i = 0; i < h.size(); ++i) h[i] = complex_relu(h[i] + betas[j][i]);
    }
    CVec flat = x;
    for (const ComplexMatrix& w : weights) flat = matvec(w, flat);
    for (size_t i = 0; i < flat.size(); ++i) {
      gap = std::max(gap, std::abs(h[i] - complex_relu(flat[i] + b[i])));
    }
  }

  json jb = json::array();
  for (const CVec& beta : betas) {
    json one = json::array();
    for (const Complex& z : beta) one.push_back({z.real(), z.imag()});
    jb.push_back(one);
  }
  const json out = {{"betas", jb}, {"max_gap", gap}};
  write_text_file(out_path, out.dump());
  std::cout << "max_gap=" << gap << "\n";
  return gap <= 1e-9 ? 0 : 2;
}

int cmd_bench(const std::string& sizes_text, int reps,
              const std::string& out_path) {
  std::vector<int> sizes;
  std::istringstream in(sizes_text);
  std::string tok;
  while (std::getline(in, tok, ',')) sizes.push_back(std::stoi(tok));
  BenchReport report = run_matvec_bench(sizes, reps);

  for (int width : {3072}) {
    const ParamCount pc = param_count(width, 2);
    report.param_table.push_back(
        {width, 2, pc.complex_weights,
         static_cast<long long>(width) * width * 2});
  }
  for (int n : sizes) {
    const ParamCount pc = param_count(n, 2);
    report.param_table.push_back(
        {n, 2, pc.complex_weights, static_cast<long long>(n) * n * 2});
  }

  json cells = json::array();
  for (const BenchCell& c : report.cells) {
    cells.push_back({{"size", c.size},
                     {"dense_seconds", c.dense_seconds},
                     {"circulant_seconds", c.circulant_seconds}});
  }
  json table = json::array();
  for (const ParamRow& r : report.param_table) {
    table.push_back({{"width", r.width},
                     {"depth", r.depth},
                     {"structured_complex_weights", r.structured_complex_weights},
                     {"dense_complex_weights", r.dense_complex_weights}});
  }
  const json out = {{"cells", cells},
                    {"dense_slope", report.dense_slope},
                    {"circulant_slope", report.circulant_slope},
                    {"param_table", table}};
  write_text_file(out_path, out.dump());
  std::cout << "dense_slope=" << report.dense_slope
            << " circulant_slope=" << report.circulant_slope << "\n";
  if (report.dense_slope < 1.8 || report.circulant_slope > 1.4) {
    std::cerr << "warning: timing slopes off the expected complexity "
                 "(hardware-dependent; not an error)\n";
  }
  return 0;
}

int cmd_gen_data(const std::string& kind, int samples, int d_in, int d_out,
                 int dim, uint64_t seed, const std::string& out_path) {
  Dataset data;
  if (kind == "regression") {
    data = synth_regression(samples, d_in, d_out, seed);
  } else if (kind == "two_class") {
    data = two_class_dataset(samples, dim, seed);
  } else {
    throw std::invalid_argument("gen-data: kind must be regression or two_class");
  }
  write_dataset_csv(out_path, data);
  std::cout << "wrote " << data.size() << " examples to " << out_path << "\n";
  return 0;
}

int cmd_grad_check(const std::string& model_path, bool inject_fault) {
  const ModelFile model = parse_model(read_text_file(model_path));
  if (model.kind != ModelKind::kDcnn) {
    throw std::invalid_argument("grad-check expects a dcnn model file");
  }
  CounterRng rng(model.provenance.seed ^ 0x6AD, 0);
  CVec x(model.dcnn.width);
  for (Complex& z : x) z = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
  const double err =
      grad_check(model.dcnn, x, 1e-5, inject_fault ? 1e-2 : 0.0);
  std::cout << "max_rel_error=" << err << "\n";
  return err <= 1e-4 ? 0 : 2;
}

int cmd_experiment(const std::string& data_path, int train_count,
                   const std::string& depths_text, int width, int epochs,
                   int batch, double lr, double sigma_prime, uint64_t seed,
                   const std::string& out_path) {
  const Dataset full = read_dataset_csv(data_path);
  if (train_count <= 0) {
    train_count = static_cast<int>(full.size() * 3 / 4);
  }
  const auto [train_set, test_set] = split_dataset(full, train_count);
  std::vector<int> depths;
  std::istringstream in(depths_text);
  std::string tok;
  while (std::getline(in, tok, ',')) depths.push_back(std::stoi(tok));

  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.schedule = LrSchedule::constant(lr);
  const std::vector<ExperimentVariant> variants = {
      {"relu_every_1", {1, ActKind::kComplexRelu, 1.0}},
      {"relu_every_2", {2, ActKind::kComplexRelu, 1.0}},
      {"relu_every_3", {3, ActKind::kComplexRelu, 1.0}},
      {"leaky_0.5_every_3", {3, ActKind::kLeakyComplexRelu, 0.5}},
      {"leaky_0.2_every_3", {3, ActKind::kLeakyComplexRelu, 0.2}},
  };
  const auto rows = relu_frequency_experiment(train_set, test_set, depths,
                                              variants, width, cfg, sigma_prime,
                                              seed);
  json jrows = json::array();
  for (const ExperimentRow& r : rows) {
    jrows.push_back({{"depth", r.depth},
                     {"variant", r.variant},
                     {"test_accuracy", r.test_accuracy},
                     {"final_loss", r.final_loss},
                     {"diverged", r.diverged}});
    std::cout << "depth=" << r.depth << "\t" << r.variant
              << "\tacc=" << r.test_accuracy << "\tloss=" << r.final_loss
              << (r.diverged ? "\tDIVERGED" : "") << "\n";
  }
  write_text_file(out_path, json{{"rows", jrows}}.dump());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diagonal-circulant network toolkit"};
  app.require_subcommand(1);

  try {
    const uint64_t env_seed = default_seed();

    // decompose
    auto* dec = app.add_subcommand("decompose", "factor a matrix into an alternating chain");
    std::string dec_in, dec_out = "factors.json", dec_mode = "rank";
    int dec_rank = 1;
    double dec_eps = 1e-3;
    dec->add_option("matrix", dec_in, "matrix JSON file")->required();
    dec->add_option("--rank", dec_rank, "target rank (rank mode)");
    dec->add_option("--eps", dec_eps, "certified relative error budget");
    dec->add_option("--mode", dec_mode, "rank | full-depth")
        ->check(CLI::IsMember({"rank", "full-depth"}));
    dec->add_option("--out", dec_out, "output factor file");

    // train
    auto* tr = app.add_subcommand("train", "train a network on a CSV dataset");
    std::string tr_data, tr_out = "model.json", tr_metrics, tr_schedule = "classic";
    int tr_depth = 4, tr_width = 32, tr_every = 3, tr_epochs = 10, tr_batch = 32;
    double tr_slope = 0.5, tr_sigma_prime = 1e-2;
    uint64_t tr_seed = env_seed;
    tr->add_option("dataset", tr_data, "CSV dataset")->required();
    tr->add_option("--depth", tr_depth);
    tr->add_option("--width", tr_width);
    tr->add_option("--relu-every", tr_every, "activation every m-th layer");
    tr->add_option("--slope", tr_slope, "leaky slope; 1.0 selects plain relu");
    tr->add_option("--sigma-prime", tr_sigma_prime, "bias init scale");
    tr->add_option("--seed", tr_seed);
    tr->add_option("--schedule", tr_schedule,
                   "classic or step:rate[,step:rate...]");
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--batch-size", tr_batch);
    tr->add_option("--out", tr_out, "model output");
    tr->add_option("--metrics", tr_metrics, "JSONL metrics output");

    // init-probe
    auto* probe = app.add_subcommand("init-probe", "output-covariance probe of the initializer");
    int pr_width = 16, pr_depth = 3, pr_samples = 20000;
    uint64_t pr_seed = env_seed;
    std::string pr_out = "probe.json";
    probe->add_option("--width", pr_width);
    probe->add_option("--depth", pr_depth);
    probe->add_option("--samples", pr_samples);
    probe->add_option("--seed", pr_seed);
    probe->add_option("--out", pr_out);

    // bound
    auto* bd = app.add_subcommand("bound", "truncation error bound report");
    std::string bd_model, bd_inputs, bd_out = "bound.json";
    int bd_rank = 1;
    bool bd_dc = false;
    double bd_eps = 1e-3;
    bd->add_option("model", bd_model, "dense model JSON")->required();
    bd->add_option("inputs", bd_inputs, "CSV of input rows")->required();
    bd->add_option("--rank", bd_rank);
    bd->add_flag("--dc-depth-check", bd_dc,
                 "also build the structured chain and check its depth");
    bd->add_option("--eps", bd_eps, "factorization budget for the depth check");
    bd->add_option("--out", bd_out);

    // linearize
    auto* lin = app.add_subcommand("linearize", "bias construction for a product chain");
    std::string lin_model, lin_samples, lin_out = "biases.json";
    lin->add_option("model", lin_model, "dense model JSON")->required();
    lin->add_option("samples", lin_samples, "CSV of calibration rows")->required();
    lin->add_option("--out", lin_out);

    // bench
    auto* be = app.add_subcommand("bench", "matvec timing and parameter tables");
    std::string be_sizes = "256,512,1024,2048,4096,8192", be_out = "bench.json";
    int be_reps = 5;
    be->add_option("--sizes", be_sizes, "comma-separated sizes");
    be->add_option("--reps", be_reps, "repetitions per cell (>= 5)");
    be->add_option("--out", be_out);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset CSV");
    std::string gen_kind = "regression", gen_out = "data.csv";
    int gen_samples = 1024, gen_din = 16, gen_dout = 4, gen_dim = 8;
    uint64_t gen_seed = env_seed;
    gen->add_option("--kind", gen_kind, "regression | two_class")
        ->check(CLI::IsMember({"regression", "two_class"}));
    gen->add_option("--samples", gen_samples);
    gen->add_option("--d-in", gen_din, "regression input dim");
    gen->add_option("--d-out", gen_dout, "regression output dim");
    gen->add_option("--dim", gen_dim, "two_class dim");
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out);

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "finite-difference check of a model");
    std::string gc_model;
    bool gc_fault = false;
    gc->add_option("model", gc_model, "dcnn model JSON")->required();
    gc->add_flag("--inject-gradient-fault", gc_fault,
                 "corrupt one analytic gradient (checker self-test)");

    // experiment
    auto* ex = app.add_subcommand("experiment", "activation-placement accuracy grid");
    std::string ex_data, ex_depths = "1,5,10,20", ex_out = "experiment.json";
    int ex_width = 16, ex_epochs = 30, ex_batch = 32, ex_train_count = 0;
    double ex_lr = 2e-3, ex_sigma_prime = 1e-2;
    uint64_t ex_seed = env_seed;
    ex->add_option("dataset", ex_data, "classification CSV; head trains, tail tests")->required();
    ex->add_option("--train-count", ex_train_count,
                   "examples used for training (default 3/4 of the file)");
    ex->add_option("--depths", ex_depths);
    ex->add_option("--width", ex_width);
    ex->add_option("--epochs", ex_epochs);
    ex->add_option("--batch-size", ex_batch);
    ex->add_option("--lr", ex_lr);
    ex->add_option("--sigma-prime", ex_sigma_prime);
    ex->add_option("--seed", ex_seed);
    ex->add_option("--out", ex_out);

    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::cerr << e.what() << "\n";
      return 1;
    }

    if (*dec) return cmd_decompose(dec_in, dec_rank, dec_eps, dec_mode, dec_out);
    if (*tr) {
      return cmd_train(tr_data, tr_depth, tr_width, tr_every, tr_slope,
                       tr_sigma_prime, tr_seed, tr_schedule, tr_epochs, tr_batch,
                       tr_out, tr_metrics);
    }
    if (*probe) return cmd_init_probe(pr_width, pr_depth, pr_samples, pr_seed, pr_out);
    if (*bd) return cmd_bound(bd_model, bd_rank, bd_inputs, bd_dc, bd_eps, bd_out);
    if (*lin) return cmd_linearize(lin_model, lin_samples, lin_out);
    if (*be) return cmd_bench(be_sizes, be_reps, be_out);
    if (*gen) {
      return cmd_gen_data(gen_kind, gen_samples, gen_din, gen_dout, gen_dim,
                          gen_seed, gen_out);
    }
    if (*gc) return cmd_grad_check(gc_model, gc_fault);
    if (*ex) {
      return cmd_experiment(ex_data, ex_train_count, ex_depths, ex_width,
                            ex_epochs, ex_batch, ex_lr, ex_sigma_prime, ex_seed,
                            ex_out);
    }
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
