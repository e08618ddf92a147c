#pragma once

#include "sympde/common.hpp"

#include <array>
#include <cstdint>

namespace sympde {

/// Philox4x32-10 counter-based generator. Stateless: every draw is a pure
/// function of (key, counter), so parallel scheduling never changes results.
struct Philox {
  static std::array<uint32_t, 4> block(uint64_t key, const std::array<uint32_t, 4>& ctr);
};

/// Draw stream keyed by (seed, stream). Counters are caller-defined words,
/// typically (iteration, sample, particle, purpose|step|slot).
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }
  CounterRng with_stream(uint64_t stream) const { return CounterRng(seed_, stream); }

  /// Uniform on (0,1].
  double uniform(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3) const;
  /// Uniform on [lo,hi).
  double uniform(double lo, double hi, uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3) const;
  /// Standard normal (Box-Muller, cosine branch).
  double normal(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3) const;
  /// Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n, uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3) const;

 private:
  std::array<uint32_t, 4> raw(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3) const;
  uint64_t seed_, stream_;
};

}  // namespace sympde
