#pragma once

#include <vector>

#include "dcnn/structured_layers.hpp"

namespace dcnn {

struct BenchCell {
  int size = 0;
  double dense_seconds = 0.0;      // median over repetitions
  double circulant_seconds = 0.0;
};

struct ParamRow {
  int width = 0;
  int depth = 0;
  long long structured_complex_weights = 0;  // 2 n L
  long long dense_complex_weights = 0;       // n^2 L
};

struct BenchReport {
  std::vector<BenchCell> cells;   // sizes strictly increasing
  double dense_slope = 0.0;       // log-log least squares
  double circulant_slope = 0.0;
  std::vector<ParamRow> param_table;
};

/// Times the quadratic index-rule matvec against the FFT path on random
/// circulants, median of `reps` (>= 5) measurements per cell.
BenchReport run_matvec_bench(const std::vector<int>& sizes, int reps,
                             uint64_t seed = 0xBE7C4);

}  // namespace dcnn
