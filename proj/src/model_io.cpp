#include "dcnn/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dcnn {

using nlohmann::json;

namespace {

json cvec_to_json(const CVec& v) {
  json out = json::array();
  for (const Complex& z : v) out.push_back({z.real(), z.imag()});
  return out;
}

CVec cvec_from_json(const json& j) {
  CVec out;
  out.reserve(j.size());
  for (const auto& pair : j) {
    if (!pair.is_array() || pair.size() != 2) {
      throw std::invalid_argument("model: scalar must be a [re, im] pair");
    }
    out.emplace_back(pair[0].get<double>(), pair[1].get<double>());
  }
  ensure_finite(out, "model scalars");
  return out;
}

json activation_to_json(const Activation& a) {
  json out;
  switch (a.kind) {
    case ActKind::kComplexRelu:
      out["kind"] = "relu";
      break;
    case ActKind::kLeakyComplexRelu:
      out["kind"] = "leaky_relu";
      out["slope"] = a.slope;
      break;
    case ActKind::kIdentity:
      out["kind"] = "identity";
      break;
  }
  return out;
}

Activation activation_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "relu") return Activation::relu();
  if (kind == "identity") return Activation::identity();
  if (kind == "leaky_relu") return Activation::leaky(j.at("slope").get<double>());
  throw std::invalid_argument("model: unknown activation kind '" + kind + "'");
}

json provenance_to_json(const Provenance& p) {
  return {{"seed", p.seed}, {"config_hash", p.config_hash}};
}

Provenance provenance_from_json(const json& j) {
  Provenance p;
  if (j.contains("provenance")) {
    p.seed = j["provenance"].value("seed", 0ULL);
    p.config_hash = j["provenance"].value("config_hash", "");
  }
  return p;
}

void check_version(const json& j) {
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != kModelVersion) {
    throw std::invalid_argument("model: unsupported version");
  }
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string serialize_dcnn(const DCNetwork& net, const Provenance& prov) {
  json layers = json::array();
  for (const DCLayer& layer : net.layers) {
    layers.push_back({{"diag", cvec_to_json(layer.diag.entries)},
                      {"circ", cvec_to_json(layer.circ.coeffs())},
                      {"bias", cvec_to_json(layer.bias)},
                      {"activation", activation_to_json(layer.activation)}});
  }
  const json out = {{"version", kModelVersion},
                    {"kind", "dcnn"},
                    {"width", net.width},
                    {"layers", layers},
                    {"provenance", provenance_to_json(prov)}};
  return out.dump();
}

std::string serialize_dense(const DenseReluNetwork& net, const Provenance& prov) {
  json layers = json::array();
  for (const DenseLayer& layer : net.layers) {
    layers.push_back({{"weight", cvec_to_json(layer.weight.data)},
                      {"bias", cvec_to_json(layer.bias)},
                      {"activation", activation_to_json(layer.activation)}});
  }
  const json out = {{"version", kModelVersion},
                    {"kind", "dense"},
                    {"width", net.width},
                    {"layers", layers},
                    {"provenance", provenance_to_json(prov)}};
  return out.dump();
}

std::string serialize_factor_sequence(const FactorSequence& fs,
                                      const Provenance& prov) {
  json factors = json::array();
  for (const Factor& f : fs.factors) {
    factors.push_back(
        {{"kind", f.kind == FactorKind::kCirculant ? "circulant" : "diagonal"},
         {"values", cvec_to_json(f.values)}});
  }
  const json out = {{"version", kModelVersion},
                    {"kind", "factor_sequence"},
                    {"width", fs.width},
                    {"factors", factors},
                    {"reconstruction_error", fs.reconstruction_error},
                    {"provenance", provenance_to_json(prov)}};
  return out.dump();
}

std::string serialize_matrix(const ComplexMatrix& m, const Provenance& prov) {
  const json out = {{"version", kModelVersion},
                    {"kind", "matrix"},
                    {"width", m.rows},
                    {"entries", cvec_to_json(m.data)},
                    {"provenance", provenance_to_json(prov)}};
  return out.dump();
}

ModelFile parse_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("model: invalid JSON: ") + e.what());
  }
  check_version(j);
  const std::string kind = j.at("kind").get<std::string>();
  const int width = j.at("width").get<int>();
  if (width < 1) throw std::invalid_argument("model: width must be >= 1");

  ModelFile out;
  out.provenance = provenance_from_json(j);
  if (kind == "dcnn") {
    out.kind = ModelKind::kDcnn;
    out.dcnn.width = width;
    for (const auto& layer : j.at("layers")) {
      CVec diag = cvec_from_json(layer.at("diag"));
      CVec circ = cvec_from_json(layer.at("circ"));
      CVec bias = cvec_from_json(layer.at("bias"));
      if (static_cast<int>(diag.size()) != width ||
          static_cast<int>(circ.size()) != width ||
          static_cast<int>(bias.size()) != width) {
        throw std::invalid_argument("model: layer width mismatch");
      }
      out.dcnn.layers.emplace_back(DiagonalMatrix(std::move(diag)),
                                   CirculantMatrix(std::move(circ)),
                                   std::move(bias),
                                   activation_from_json(layer.at("activation")));
    }
    if (out.dcnn.layers.empty()) {
      throw std::invalid_argument("model: empty network");
    }
  } else if (kind == "dense") {
    out.kind = ModelKind::kDense;
    out.dense.width = width;
    for (const auto& layer : j.at("layers")) {
      CVec weight = cvec_from_json(layer.at("weight"));
      if (static_cast<int>(weight.size()) != width * width) {
        throw std::invalid_argument("model: dense weight size mismatch");
      }
      out.dense.layers.push_back(
          {ComplexMatrix(width, width, std::move(weight)),
           cvec_from_json(layer.at("bias")),
           activation_from_json(layer.at("activation"))});
    }
    if (out.dense.layers.empty()) {
      throw std::invalid_argument("model: empty network");
    }
  } else if (kind == "factor_sequence") {
    out.kind = ModelKind::kFactorSequence;
    out.factors.width = width;
    out.factors.reconstruction_error =
        j.value("reconstruction_error", 0.0);
    for (const auto& factor : j.at("factors")) {
      const std::string fk = factor.at("kind").get<std::string>();
      if (fk != "circulant" && fk != "diagonal") {
        throw std::invalid_argument("model: unknown factor kind");
      }
      out.factors.factors.push_back(
          {fk == "circulant" ? FactorKind::kCirculant : FactorKind::kDiagonal,
           cvec_from_json(factor.at("values"))});
    }
    out.factors.validate_alternation();
  } else if (kind == "matrix") {
    out.kind = ModelKind::kMatrix;
    CVec entries = cvec_from_json(j.at("entries"));
    if (static_cast<int>(entries.size()) != width * width) {
      throw std::invalid_argument("model: matrix entry count mismatch");
    }
    out.matrix = ComplexMatrix(width, width, std::move(entries));
  } else {
    throw std::invalid_argument("model: unknown kind '" + kind + "'");
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::invalid_argument("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_dataset_csv(const std::string& path, const Dataset& data) {
  data.validate();
  std::ostringstream out;
  for (int i = 0; i < data.input_dim; ++i) out << "x" << i << ",";
  if (data.classification()) {
    out << "label\n";
  } else {
    for (int j = 0; j < data.target_dim; ++j) {
      out << "y" << j << (j + 1 == data.target_dim ? "\n" : ",");
    }
  }
  for (size_t s = 0; s < data.size(); ++s) {
    for (int i = 0; i < data.input_dim; ++i) {
      out << format_double(data.inputs[s][i]) << ",";
    }
    if (data.classification()) {
      out << data.labels[s] << "\n";
    } else {
      for (int j = 0; j < data.target_dim; ++j) {
        out << format_double(data.targets[s][j])
            << (j + 1 == data.target_dim ? "\n" : ",");
      }
    }
  }
  write_text_file(path, out.str());
}

Dataset read_dataset_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("dataset: empty file " + path);
  }
  const std::vector<std::string> header = split_csv_line(line);
  Dataset out;
  int y_cols = 0;
  bool labelled = false;
  for (const std::string& name : header) {
    if (name.rfind("x", 0) == 0) ++out.input_dim;
    else if (name == "label") labelled = true;
    else if (name.rfind("y", 0) == 0) ++y_cols;
    else throw std::invalid_argument("dataset: unknown column '" + name + "'");
  }
  if (out.input_dim == 0 || (y_cols == 0 && !labelled)) {
    throw std::invalid_argument("dataset: header must list x columns and targets");
  }
  out.target_dim = labelled ? 2 : y_cols;

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) !=
        out.input_dim + (labelled ? 1 : y_cols)) {
      throw std::invalid_argument("dataset: ragged row");
    }
    std::vector<double> x(out.input_dim);
    for (int i = 0; i < out.input_dim; ++i) x[i] = std::stod(cells[i]);
    out.inputs.push_back(std::move(x));
    if (labelled) {
      const int label = std::stoi(cells[out.input_dim]);
      if (label < 0) throw std::invalid_argument("dataset: negative label");
      out.labels.push_back(label);
    } else {
      std::vector<double> y(y_cols);
      for (int j = 0; j < y_cols; ++j) y[j] = std::stod(cells[out.input_dim + j]);
      out.targets.push_back(std::move(y));
    }
  }
  if (labelled) {
    int max_label = 1;
    for (int l : out.labels) max_label = std::max(max_label, l);
    out.target_dim = max_label + 1;
  }
  out.validate();
  return out;
}

std::string metrics_to_jsonl(const MetricsLog& log) {
  std::ostringstream out;
  for (const MetricsRecord& r : log.records) {
    json j = {{"step", r.step},
              {"epoch", r.epoch},
              {"loss", r.loss},
              {"accuracy", r.accuracy ? json(*r.accuracy) : json(nullptr)},
              {"learning_rate", r.learning_rate}};
    out << j.dump() << "\n";
  }
  return out.str();
}

}  // namespace dcnn
