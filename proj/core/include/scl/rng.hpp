#pragma once
// Counter-based random numbers.
//
// Every variate is a pure function of (seed, stream, counter), so any draw
// can be regenerated without replaying the ones before it. The mixing
// function is the SplitMix64 finalizer applied to a Weyl sequence keyed by
// (seed, stream).

#include <cstdint>
#include <limits>

namespace scl {

// Independent named streams derived from one user seed.
enum class Stream : std::uint64_t {
  population = 1,
  noise = 2,
  guess = 3,
  treatment = 4,
  tables = 5,
  audit = 6,
};

std::uint64_t mix64(std::uint64_t z);

// 64 random bits at position `counter` of the stream keyed by (seed, stream).
std::uint64_t random_bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

// Uniform on [0, 1) with 53 bits of resolution.
inline double to_unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Derives a child seed, e.g. per replication or per Monte Carlo draw.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, Stream stream, std::uint64_t start = 0)
      : seed_(seed), stream_(static_cast<std::uint64_t>(stream)), counter_(start) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return random_bits(seed_, stream_, counter_++); }

  double uniform() { return to_unit_interval((*this)()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Box-Muller; consumes two counters per call.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
};

}  // namespace scl
