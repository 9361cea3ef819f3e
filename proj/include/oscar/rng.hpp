#pragma once

// Seed derivation and a portable bounded RNG. std::uniform_int_distribution
// differs between standard libraries, so draws go through bounded() instead.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace oscar {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Keyed hash of (seed, k1, k2, ...). Adding chains never perturbs existing ones.
inline std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ull));
  return h;
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t k) { return derive(seed, {k}); }

// FNV-1a, for stable string keys (query ids, config fingerprints).
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // uniform in [0, n)
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // k distinct draws from items, in draw order
  template <typename T>
  std::vector<T> sample(std::vector<T> items, std::size_t k) {
    std::vector<T> out;
    for (std::size_t j = 0; j < k && j < items.size(); ++j) {
      std::size_t r = j + static_cast<std::size_t>(bounded(items.size() - j));
      std::swap(items[j], items[r]);
      out.push_back(items[j]);
    }
    return out;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace oscar
