#include "sympde/rng.hpp"

#include <cmath>

namespace sympde {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::array<uint32_t, 4>& ctr, uint32_t k0, uint32_t k1) {
  const uint64_t p0 = uint64_t(kPhiloxM0) * ctr[0];
  const uint64_t p1 = uint64_t(kPhiloxM1) * ctr[2];
  const uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
  const uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
  ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

// splitmix64 finalizer, used to whiten the (seed, stream) pair into a Philox key
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::array<uint32_t, 4> Philox::block(uint64_t key, const std::array<uint32_t, 4>& ctr_in) {
  std::array<uint32_t, 4> ctr = ctr_in;
  uint32_t k0 = uint32_t(key), k1 = uint32_t(key >> 32);
  for (int r = 0; r < 10; ++r) {
    philox_round(ctr, k0, k1);
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return ctr;
}

std::array<uint32_t, 4> CounterRng::raw(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3) const {
  const uint64_t key = mix64(seed_ ^ mix64(stream_));
  // fold the four 64-bit words into the 128-bit Philox counter
  const uint64_t a = mix64(mix64(c0) ^ c2);
  const uint64_t b = mix64(mix64(c1) ^ c3);
  std::array<uint32_t, 4> ctr = {uint32_t(a), uint32_t(a >> 32), uint32_t(b), uint32_t(b >> 32)};
  return Philox::block(key, ctr);
}

double CounterRng::uniform(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3) const {
  const auto r = raw(c0, c1, c2, c3);
  const uint64_t u = (uint64_t(r[0]) << 32) | r[1];
  return double(u + 1) * 0x1.0p-64;  // (0,1]
}

double CounterRng::uniform(double lo, double hi, uint64_t c0, uint64_t c1, uint64_t c2,
                           uint64_t c3) const {
  const auto r = raw(c0, c1, c2, c3);
  const uint64_t u = (uint64_t(r[0]) << 32) | r[1];
  return lo + (hi - lo) * (double(u) * 0x1.0p-64);  // [lo,hi)
}

double CounterRng::normal(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3) const {
  const auto r = raw(c0, c1, c2, c3);
  const uint64_t w1 = (uint64_t(r[0]) << 32) | r[1];
  const uint64_t w2 = (uint64_t(r[2]) << 32) | r[3];
  const double u1 = double(w1 + 1) * 0x1.0p-64;  // (0,1], keeps log finite
  const double u2 = double(w2) * 0x1.0p-64;      // [0,1)
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

uint64_t CounterRng::uniform_index(uint64_t n, uint64_t c0, uint64_t c1, uint64_t c2,
                                   uint64_t c3) const {
  const auto r = raw(c0, c1, c2, c3);
  const uint64_t u = (uint64_t(r[0]) << 32) | r[1];
  return n == 0 ? 0 : u % n;
}

}  // namespace sympde
