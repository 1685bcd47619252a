#include "ncanet/profiler.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace ncanet {

std::string variant_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::full: return "full";
    case AttentionVariant::ncl: return "ncl";
    case AttentionVariant::scse: return "scse";
    case AttentionVariant::nca: return "nca";
  }
  return "?";
}

std::string variant_label(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::full: return "baseline";
    case AttentionVariant::ncl: return "+NCL";
    case AttentionVariant::scse: return "+scSE";
    case AttentionVariant::nca: return "+NCA";
  }
  return "?";
}

AttentionVariant parse_variant(const std::string& s) {
  for (AttentionVariant v : kAllVariants)
    if (variant_name(v) == s) return v;
  throw std::invalid_argument("unknown attention variant '" + s + "'");
}

namespace {

void check_dims(std::uint64_t C, std::uint64_t H, std::uint64_t W) {
  if (C == 0 || H == 0 || W == 0)
    throw std::invalid_argument("attention accounting needs positive dimensions, got " + std::to_string(C) + "x" +
                                std::to_string(H) + "x" + std::to_string(W));
}

}  // namespace

u128 attention_map_bytes(AttentionVariant v, std::uint64_t C, std::uint64_t H, std::uint64_t W,
                         std::uint64_t elem_bytes) {
  check_dims(C, H, W);
  if (elem_bytes == 0) throw std::invalid_argument("elem_bytes must be positive");
  const u128 c = C, h = H, w = W, e = elem_bytes;
  switch (v) {
    case AttentionVariant::full: return (c * h * w) * (c * h * w) * e;
    case AttentionVariant::ncl: return (h * w) * (h * w) * e;
    case AttentionVariant::scse: return (c + h * w) * e;
    case AttentionVariant::nca: return (h * h + w * w + c * c) * e;
  }
  return 0;
}

u128 attention_matmul_flops(AttentionVariant v, std::uint64_t C, std::uint64_t H, std::uint64_t W) {
  check_dims(C, H, W);
  const u128 c = C, h = H, w = W;
  switch (v) {
    case AttentionVariant::full: return 2 * (c * h * w) * (c * h * w);
    case AttentionVariant::ncl: return 2 * (h * w) * (h * w) * std::max<u128>(1, c / 2);
    case AttentionVariant::scse: return 4 * c * h * w;
    case AttentionVariant::nca: return 2 * (h * h * (c * w) + w * w * (h * c) + c * c * (h * w));
  }
  return 0;
}

std::string u128_to_string(u128 v) {
  if (v == 0) return "0";
  std::string s;
  while (v) {
    s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  std::reverse(s.begin(), s.end());
  return s;
}

u128 parse_u128(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("empty integer");
  const u128 max = ~u128(0);
  u128 v = 0;
  for (char ch : s) {
    if (ch < '0' || ch > '9') throw std::invalid_argument("not an unsigned integer: '" + s + "'");
    const unsigned d = static_cast<unsigned>(ch - '0');
    if (v > (max - d) / 10) throw std::invalid_argument("integer overflow: '" + s + "'");
    v = v * 10 + d;
  }
  return v;
}

ShapeCHW parse_shape(const std::string& s) {
  std::uint64_t dims[3];
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t end = i < 2 ? s.find('x', pos) : s.size();
    if (end == std::string::npos) throw std::invalid_argument("shape must look like CxHxW, got '" + s + "'");
    const std::string part = s.substr(pos, end - pos);
    u128 v = 0;
    try {
      v = parse_u128(part);
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("shape must look like CxHxW, got '" + s + "'");
    }
    if (v == 0 || v > (u128(1) << 32)) throw std::invalid_argument("shape dimensions must lie in 1..2^32: '" + s + "'");
    dims[i] = static_cast<std::uint64_t>(v);
    pos = end + 1;
  }
  return {dims[0], dims[1], dims[2]};
}

std::vector<FootprintReport> footprint_table(const std::vector<ShapeCHW>& shapes, std::uint64_t elem_bytes) {
  if (shapes.empty()) throw std::invalid_argument("footprint_table: no shapes");
  std::vector<FootprintReport> rows;
  for (const auto& s : shapes)
    for (AttentionVariant v : kAllVariants)
      rows.push_back({v, s.C, s.H, s.W, attention_map_bytes(v, s.C, s.H, s.W, elem_bytes),
                      attention_matmul_flops(v, s.C, s.H, s.W), elem_bytes});
  return rows;
}

std::string footprint_text(const std::vector<FootprintReport>& rows) {
  std::vector<std::vector<std::string>> cells{{"model", "variant", "shape", "map_bytes", "matmul_flops"}};
  for (const auto& r : rows)
    cells.push_back({variant_label(r.variant), variant_name(r.variant),
                     std::to_string(r.C) + "x" + std::to_string(r.H) + "x" + std::to_string(r.W),
                     u128_to_string(r.map_bytes), u128_to_string(r.matmul_flops)});
  std::vector<std::size_t> width(5, 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < 5; ++i) width[i] = std::max(width[i], row[i].size());
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < 5; ++i) {
      const std::string& c = cells[r][i];
      const std::string pad(width[i] - c.size(), ' ');
      out += i < 3 ? c + pad : pad + c;
      out += i + 1 < 5 ? "  " : "\n";
    }
    if (r == 0) {
      std::size_t total = 8;
      for (auto w : width) total += w;
      out += std::string(total, '-') + "\n";
    }
  }
  return out;
}

std::string footprint_csv(const std::vector<FootprintReport>& rows) {
  std::string out = "variant,C,H,W,map_bytes,matmul_flops\n";
  for (const auto& r : rows)
    out += variant_name(r.variant) + "," + std::to_string(r.C) + "," + std::to_string(r.H) + "," +
           std::to_string(r.W) + "," + u128_to_string(r.map_bytes) + "," + u128_to_string(r.matmul_flops) + "\n";
  return out;
}

std::vector<FootprintReport> parse_footprint_csv(const std::string& text, std::uint64_t elem_bytes) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "variant,C,H,W,map_bytes,matmul_flops")
    throw std::invalid_argument("footprint CSV: unexpected header");
  std::vector<FootprintReport> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    if (f.size() != 6) throw std::invalid_argument("footprint CSV: expected 6 fields in '" + line + "'");
    FootprintReport r;
    r.variant = parse_variant(f[0]);
    r.C = static_cast<std::uint64_t>(parse_u128(f[1]));
    r.H = static_cast<std::uint64_t>(parse_u128(f[2]));
    r.W = static_cast<std::uint64_t>(parse_u128(f[3]));
    r.map_bytes = parse_u128(f[4]);
    r.matmul_flops = parse_u128(f[5]);
    r.elem_bytes = elem_bytes;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace ncanet
