#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "ncanet/random.hpp"
#include "ncanet/tape.hpp"
#include "ncanet/tensor.hpp"

namespace ncanet::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Values bounded away from zero so ReLU kinks are never within a FD step.
inline Tensor<double> kink_free_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.1, 1.0);
    t[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ncanet-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace ncanet::testing
