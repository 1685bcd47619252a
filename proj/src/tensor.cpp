#include "ncanet/tensor.hpp"

namespace ncanet {

Shape::Shape(std::initializer_list<std::size_t> dims) {
  if (dims.size() == 0 || dims.size() > kMaxRank)
    throw ShapeError("shape rank must be 1.." + std::to_string(kMaxRank) + ", got " +
                     std::to_string(dims.size()));
  for (std::size_t d : dims) dims_[rank_++] = d;
}

std::size_t Shape::numel() const {
  if (rank_ == 0) return 0;
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

std::string Shape::str() const {
  std::string s = "(";
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) s += "x";
    s += std::to_string(dims_[i]);
  }
  return s + ")";
}

}  // namespace ncanet
