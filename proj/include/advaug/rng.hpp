#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "advaug/errors.hpp"

namespace advaug {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic stream on top of std::mt19937_64. normal() keeps no cached
// spare value, so the engine state is the whole state and serialization is a
// plain engine round-trip.
struct Rng {
  std::mt19937_64 g;

  explicit Rng(uint64_t seed = 0, uint64_t stream = 0)
      : g(splitmix64(splitmix64(seed) ^ splitmix64(~stream))) {}

  uint64_t raw() { return g(); }

  double uniform() {  // [0, 1)
    return double(g() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  uint64_t uniform_int(uint64_t n) {  // [0, n), unbiased by rejection
    require(n > 0, "uniform_int(0)");
    uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = g();
    } while (x >= lim);
    return x % n;
  }

  double normal() {  // Box-Muller, cosine branch only
    double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(6.283185307179586477 * u2);
  }

  template <class V>
  void shuffle(V& vec) {  // Fisher-Yates
    for (size_t i = vec.size(); i > 1; --i) {
      size_t j = size_t(uniform_int(i));
      std::swap(vec[i - 1], vec[j]);
    }
  }

  std::string state() const {
    std::ostringstream os;
    os << g;
    return os.str();
  }
  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> g;
    if (is.fail()) throw StateError("bad rng state string");
  }
};

}  // namespace advaug
