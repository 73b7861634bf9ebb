#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ptlab {

// mt19937_64 output is fully specified by the standard; the distribution
// transforms below are ours, so a given seed produces the same stream on
// every platform. std::*_distribution is implementation-defined and would
// break the bit-identical rerun contract.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t u64() { return eng_(); }

  // [0, 1), 53-bit resolution
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // [0, n)
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(eng_() % static_cast<uint64_t>(n));
  }

  // Box-Muller, one value per call
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

// splitmix64 step, used to derive independent per-cell / per-epoch seeds
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ptlab
