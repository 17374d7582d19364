#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sbnn {

// N images of D pixels in [0,1], row-major, with integer labels in [0, C).
struct Dataset {
  std::size_t rows = 0;  // image height
  std::size_t cols = 0;  // image width
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return rows * cols; }
  std::span<const double> image(std::size_t i) const noexcept {
    return {pixels.data() + i * dim(), dim()};
  }

  // First `n` samples (or all if n exceeds the size).
  Dataset head(std::size_t n) const;
  // Samples [first, first + n).
  Dataset slice(std::size_t first, std::size_t n) const;
};

}  // namespace sbnn
