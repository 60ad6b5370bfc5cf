#include "cpn/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

namespace cpn {

std::size_t element_count(std::span<const std::size_t> shape) {
  if (shape.empty()) throw std::invalid_argument("tensor rank must be >= 1");
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("tensor extents must be >= 1");
    if (n > std::numeric_limits<std::size_t>::max() / e)
      throw std::invalid_argument("tensor element count overflows size_t");
    n *= e;
  }
  return n;
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_))
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape element count");
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

double iou(const BBox& a, const BBox& b) noexcept {
  const double ix1 = std::max<double>(a.x1, b.x1);
  const double iy1 = std::max<double>(a.y1, b.y1);
  const double ix2 = std::min<double>(a.x2, b.x2);
  const double iy2 = std::min<double>(a.y2, b.y2);
  const double iw = ix2 - ix1;
  const double ih = iy2 - iy1;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::min(1.0, inter / uni);
}

}  // namespace cpn
