#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ncanet {

using u128 = unsigned __int128;

// Rows of the memory table in display order.
enum class AttentionVariant { full, ncl, scse, nca };

inline constexpr AttentionVariant kAllVariants[] = {AttentionVariant::full, AttentionVariant::ncl,
                                                    AttentionVariant::scse, AttentionVariant::nca};

std::string variant_name(AttentionVariant v);   // full, ncl, scse, nca
std::string variant_label(AttentionVariant v);  // baseline, +NCL, +scSE, +NCA
AttentionVariant parse_variant(const std::string& s);

// Bytes held by the attention maps of one block:
//   full (CHW)^2 e, ncl (HW)^2 e, nca (H^2 + W^2 + C^2) e, scse (C + HW) e.
// Throws std::invalid_argument on a zero dimension.
u128 attention_map_bytes(AttentionVariant v, std::uint64_t C, std::uint64_t H, std::uint64_t W,
                         std::uint64_t elem_bytes = 1);

// Multiply-accumulates of forming plus applying the maps:
//   full 2 (CHW)^2, ncl 2 (HW)^2 C' with C' = max(1, C/2),
//   nca 2 (H^2 CW + W^2 HC + C^2 HW), scse 4 C HW (pool, excite, squeeze, scale).
u128 attention_matmul_flops(AttentionVariant v, std::uint64_t C, std::uint64_t H, std::uint64_t W);

std::string u128_to_string(u128 v);
// Throws std::invalid_argument on anything but decimal digits or on overflow.
u128 parse_u128(const std::string& s);

struct ShapeCHW {
  std::uint64_t C = 1, H = 1, W = 1;
};

// "CxHxW" with positive integers. Throws std::invalid_argument.
ShapeCHW parse_shape(const std::string& s);

struct FootprintReport {
  AttentionVariant variant = AttentionVariant::full;
  std::uint64_t C = 1, H = 1, W = 1;
  u128 map_bytes = 0;
  u128 matmul_flops = 0;
  std::uint64_t elem_bytes = 1;

  friend bool operator==(const FootprintReport&, const FootprintReport&) = default;
};

// Four rows per shape in kAllVariants order. Throws std::invalid_argument on
// an empty shape list.
std::vector<FootprintReport> footprint_table(const std::vector<ShapeCHW>& shapes, std::uint64_t elem_bytes = 1);

std::string footprint_text(const std::vector<FootprintReport>& rows);
// Header variant,C,H,W,map_bytes,matmul_flops.
std::string footprint_csv(const std::vector<FootprintReport>& rows);
std::vector<FootprintReport> parse_footprint_csv(const std::string& text, std::uint64_t elem_bytes = 1);

}  // namespace ncanet
