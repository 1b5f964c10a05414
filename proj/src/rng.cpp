#include "dcnn/rng.hpp"

#include <cmath>
#include <numbers>

namespace dcnn {

namespace {
constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
}

uint64_t CounterRng::mix(uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

CounterRng::CounterRng(uint64_t seed, uint64_t stream)
    : key_(mix(mix(seed + kGamma) ^ mix(stream * kGamma + 0x1234567897531ULL))) {}

uint64_t CounterRng::next_u64() { return mix(key_ + (++counter_) * kGamma); }

double CounterRng::uniform01() {
  // 53 mantissa bits, shifted into (0, 1]
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double CounterRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double CounterRng::normal() {
  const double u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double CounterRng::sign_pm1() { return (next_u64() & 1ULL) ? 1.0 : -1.0; }

uint64_t CounterRng::below(uint64_t bound) {
  // modulo bias is negligible for desk-scale bounds (<< 2^32)
  return next_u64() % bound;
}

}  // namespace dcnn
