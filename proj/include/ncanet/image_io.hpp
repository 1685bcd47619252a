#pragma once

#include <filesystem>

#include "ncanet/tensor.hpp"

namespace ncanet {

// Decodes any PNG into a 3 x H x W tensor with values v/255 in [0, 1].
// Conversions: palette -> RGB, grayscale -> replicated to 3 channels,
// sub-8-bit gray -> 8-bit, 16-bit -> 8-bit by round(v * 255 / 65535),
// alpha dropped (not composited). Throws IoError.
Tensor<float> read_png(const std::filesystem::path& path);

// Encodes a 1- or 3-channel tensor as gray or RGB PNG. Values are clamped to
// [0, 1] and quantized as round(v * (2^depth - 1)); bit_depth is 8 or 16.
void write_png(const std::filesystem::path& path, const Tensor<float>& image, int bit_depth = 8);

// round(clamp(v, 0, 1) * 255)
unsigned char quantize8(float v);

}  // namespace ncanet
