#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ncanet/random.hpp"
#include "ncanet/tensor.hpp"

namespace ncanet {

struct RainPair {
  Tensor<float> rainy;
  Tensor<float> clean;
  std::string id;
};

// Reads rain-<id>.png / norain-<id>.png pairs, sorted by id. Other files are
// skipped with a warning. Throws IoError on an unmatched id or a size
// mismatch inside a pair.
std::vector<RainPair> load_pairs(const std::filesystem::path& dir);

// Writes the pairs in the layout load_pairs reads. Creates dir if needed.
void save_pairs(const std::filesystem::path& dir, const std::vector<RainPair>& pairs);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Angles in degrees from vertical, positive leaning right.
struct SynthRainSpec {
  std::size_t streak_count = 0;
  Range angle_deg{-10.0, 10.0};
  Range length_px{8.0, 20.0};
  Range width_px{1.0, 1.5};
  Range intensity{0.2, 0.5};
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on empty ranges or intensity outside [0, 1].
  void validate() const;
};

// Streak density scaled to the image area. "light" resembles Rain100L,
// "heavy" Rain100H. Throws std::invalid_argument for other names.
SynthRainSpec rain_preset(const std::string& name, std::size_t height, std::size_t width,
                          std::uint64_t seed);

struct SynthResult {
  RainPair pair;
  Tensor<float> mask;  // 1 x H x W, 1 where the streak layer is nonzero
};

// rainy = min(1, clean + L) with L the rendered streak layer (identical in
// every channel). Each streak is a segment with coverage
// clamp(width/2 + 0.5 - distance, 0, 1) scaled by its intensity; overlapping
// streaks add, L saturates at 1 and values below 1/512 are dropped.
SynthResult synth_rain(const Tensor<float>& clean, const SynthRainSpec& spec, std::string id = "");

// Procedural background: smooth gradients, soft-edged shapes and low
// frequency texture, values in [0.05, 0.85].
Tensor<float> synth_clean(std::size_t channels, std::size_t height, std::size_t width, Rng& rng);

// count pairs named 000, 001, ...; clean images and rain share one seed.
std::vector<SynthResult> synth_dataset(std::size_t count, std::size_t height, std::size_t width,
                                       const std::string& preset, std::uint64_t seed);

// Same size x size window from rainy and clean, origin uniform over all
// valid positions. Throws ShapeError if the image is smaller than size.
RainPair sample_patch(const RainPair& pair, std::size_t size, Rng& rng);

inline constexpr std::size_t kDefaultPatch = 100;

}  // namespace ncanet
