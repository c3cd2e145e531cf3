#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace shade {

uint64_t splitmix64(uint64_t x);

// Deterministic stream id for (seed, tag, index) triples. All per-sample and
// per-iteration randomness is derived through this so parallel generation
// never changes results.
uint64_t derive_stream(uint64_t seed, uint64_t tag, uint64_t index);

// mt19937_64 engine with hand-rolled distributions. The standard library
// distribution objects are implementation-defined, so every draw here is
// spelled out to keep outputs identical across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(splitmix64(seed)) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 bits.
  double uniform();
  // Uniform in [0, n).
  int64_t uniform_int(int64_t n);
  // Standard normal via Box-Muller, one value per call (no cached spare).
  double normal();
  // Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 handled by boosting.
  double gamma(double alpha);
  double beta(double a, double b);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

  // k distinct indices from [0, n), in draw order.
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k);

 private:
  std::mt19937_64 eng_;
};

}  // namespace shade
