// Deterministic random streams. Distributions are implemented on top of the
// raw mt19937_64 output instead of <random> adapters so that a given seed
// produces identical draws on every platform and standard library.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ordstab {

// splitmix64-style mixer for deriving independent substream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform01() * static_cast<double>(n));
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Knuth's method, splitting large rates to keep the product bounded.
  int poisson(double lambda) {
    int count = 0;
    while (lambda > 30.0) {
      // lambda = a + b with a = 30: poisson(a) + poisson(b)
      count += poisson_small(30.0);
      lambda -= 30.0;
    }
    return count + poisson_small(lambda);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      std::size_t j = static_cast<std::size_t>(below(static_cast<std::uint64_t>(n - i)));
      out.push_back(pool[j]);
      std::swap(pool[j], pool[static_cast<std::size_t>(n - i - 1)]);
    }
    return out;
  }

 private:
  int poisson_small(double lambda) {
    if (lambda <= 0.0) return 0;
    double limit = std::exp(-lambda);
    double prod = 1.0;
    int count = -1;
    do {
      prod *= uniform01();
      ++count;
    } while (prod > limit);
    return count;
  }

  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ordstab
