#include "dcnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "dcnn/rng.hpp"

namespace dcnn {

namespace {

using Clock = std::chrono::steady_clock;

// O(n^2) matvec straight off the circulant index rule, split to keep the
// wrap-around out of the inner loops.
CVec dense_circulant_matvec(const CVec& c, const CVec& x) {
  const int n = static_cast<int>(x.size());
  CVec y(n, Complex{});
  for (int t = 0; t < n; ++t) {
    Complex acc{};
    for (int j = 0; j <= t; ++j) acc += c[t - j] * x[j];
    for (int j = t + 1; j < n; ++j) acc += c[t - j + n] * x[j];
    y[t] = acc;
  }
  return y;
}

template <typename Fn>
double time_median(Fn&& fn, int reps, double min_seconds = 2e-3) {
  // calibrate an inner loop so each measurement is long enough to trust
  int iters = 1;
  for (;;) {
    const auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) fn();
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    if (dt >= min_seconds || iters >= (1 << 20)) break;
    iters *= 2;
  }
  std::vector<double> samples(reps);
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) fn();
    samples[r] =
        std::chrono::duration<double>(Clock::now() - t0).count() / iters;
  }
  std::nth_element(samples.begin(), samples.begin() + reps / 2, samples.end());
  return samples[reps / 2];
}

double fit_slope(const std::vector<int>& sizes, const std::vector<double>& times) {
  const int m = static_cast<int>(sizes.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < m; ++i) {
    const double x = std::log(static_cast<double>(sizes[i]));
    const double y = std::log(times[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace

BenchReport run_matvec_bench(const std::vector<int>& sizes, int reps,
                             uint64_t seed) {
  if (sizes.empty()) throw std::invalid_argument("bench: no sizes");
  if (reps < 5) throw std::invalid_argument("bench: at least 5 repetitions");
  for (size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) {
      throw std::invalid_argument("bench: sizes must strictly increase");
    }
  }

  BenchReport report;
  std::vector<double> dense_times, circ_times;
  for (int n : sizes) {
    CounterRng rng(seed, n);
    CVec c(n), x(n);
    for (int i = 0; i < n; ++i) {
      c[i] = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
      x[i] = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    CirculantMatrix circ(c);
    circ.ensure_spectrum();

    volatile double sink = 0.0;  // keep the optimizer honest
    BenchCell cell;
    cell.size = n;
    cell.dense_seconds = time_median(
        [&] {
          const CVec y = dense_circulant_matvec(c, x);
          sink = sink + y[0].real();
        },
        reps);
    cell.circulant_seconds = time_median(
        [&] {
          const CVec y = circ_matvec(circ, x);
          sink = sink + y[0].real();
        },
        reps);
    dense_times.push_back(cell.dense_seconds);
    circ_times.push_back(cell.circulant_seconds);
    report.cells.push_back(cell);
  }
  if (sizes.size() >= 2) {
    report.dense_slope = fit_slope(sizes, dense_times);
    report.circulant_slope = fit_slope(sizes, circ_times);
  }
  return report;
}

}  // namespace dcnn
