#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

#include "gansearch/errors.hpp"

namespace gansearch {

// Deterministic pseudo-random stream (xoshiro256**, seeded via splitmix64).
// The standard <random> distributions are implementation-defined, so every
// draw used by the library goes through this class to keep runs reproducible
// and checkpoint-resumable.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 24 mantissa bits.
  float uniform() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw Error("Rng::uniform_int: n must be positive");
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  // Standard normal via Box-Muller (no cached second value, so the
  // serialized state fully describes the stream position).
  float normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                              std::cos(2.0 * M_PI * u2));
  }

  // Independent child stream; deterministic function of (state, tag).
  Rng fork(uint64_t tag) {
    Rng child(0);
    uint64_t x = next_u64() ^ (0x9e3779b97f4a7c15ull * (tag + 1));
    for (auto& word : child.s_) word = splitmix64(x);
    return child;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << s_[0] << ' ' << s_[1] << ' ' << s_[2] << ' ' << s_[3];
    return os.str();
  }

  static Rng deserialize(const std::string& text) {
    Rng r(0);
    std::istringstream is(text);
    if (!(is >> r.s_[0] >> r.s_[1] >> r.s_[2] >> r.s_[3]))
      throw DataError("Rng::deserialize: malformed state '" + text + "'");
    return r;
  }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  uint64_t s_[4];
};

}  // namespace gansearch
