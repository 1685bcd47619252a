#pragma once

#include <cmath>
#include <cstdint>
#include <iterator>
#include <random>
#include <utility>

namespace ncanet {

// Seeded generator with platform-independent conversions (the std
// distributions are implementation-defined, which would break bit-exact
// reproducibility across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [0, n)
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(std::distance(first, last));
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = below(i);
      std::swap(*(first + static_cast<std::ptrdiff_t>(i - 1)),
                *(first + static_cast<std::ptrdiff_t>(j)));
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ncanet
