#pragma once

#include <string>

#include "dcnn/decomposition.hpp"
#include "dcnn/structured_layers.hpp"
#include "dcnn/training.hpp"

namespace dcnn {

// JSON model files, CSV datasets, JSON-lines metrics. Model scalars are
// stored as [re, im] pairs; serialize(parse(s)) == s for files this module
// wrote (keys sorted, shortest float round-trip).

inline constexpr int kModelVersion = 1;

struct Provenance {
  uint64_t seed = 0;
  std::string config_hash;
};

/// FNV-1a over the canonical text, for provenance stamps.
std::string fnv1a_hex(const std::string& text);

std::string serialize_dcnn(const DCNetwork& net, const Provenance& prov);
std::string serialize_dense(const DenseReluNetwork& net, const Provenance& prov);
std::string serialize_factor_sequence(const FactorSequence& fs,
                                      const Provenance& prov);
std::string serialize_matrix(const ComplexMatrix& m, const Provenance& prov);

enum class ModelKind { kDcnn, kDense, kFactorSequence, kMatrix };

struct ModelFile {
  ModelKind kind = ModelKind::kDcnn;
  Provenance provenance;
  DCNetwork dcnn;
  DenseReluNetwork dense;
  FactorSequence factors;
  ComplexMatrix matrix;
};

/// Parses any of the model kinds; rejects unknown versions or kinds.
ModelFile parse_model(const std::string& text);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

void write_dataset_csv(const std::string& path, const Dataset& data);
Dataset read_dataset_csv(const std::string& path);

std::string metrics_to_jsonl(const MetricsLog& log);

}  // namespace dcnn
