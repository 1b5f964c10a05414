#pragma once

#include <cstdint>

namespace dcnn {

/// Counter-based generator: the SplitMix64 finalizer applied to
/// key + counter * golden gamma. A (seed, stream) pair selects an
/// independent substream, so e.g. layer k's draws never depend on how many
/// other layers exist. Stateless apart from the counter; reproducible across
/// platforms.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream);

  uint64_t next_u64();
  /// Uniform in (0, 1].
  double uniform01();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();
  /// Uniform on {-1, +1}.
  double sign_pm1();
  /// Uniform integer in [0, bound).
  uint64_t below(uint64_t bound);

  static uint64_t mix(uint64_t x);

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace dcnn
