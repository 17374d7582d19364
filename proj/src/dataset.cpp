#include "sbnn/dataset.hpp"

#include <algorithm>

namespace sbnn {

Dataset Dataset::slice(std::size_t first, std::size_t n) const {
  Dataset out;
  out.rows = rows;
  out.cols = cols;
  first = std::min(first, size());
  n = std::min(n, size() - first);
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(first),
                    labels.begin() + static_cast<std::ptrdiff_t>(first + n));
  out.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(first * dim()),
                    pixels.begin() + static_cast<std::ptrdiff_t>((first + n) * dim()));
  return out;
}

Dataset Dataset::head(std::size_t n) const { return slice(0, n); }

}  // namespace sbnn
