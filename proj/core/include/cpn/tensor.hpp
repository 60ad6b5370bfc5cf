#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpn {

/// Raised when a CPNT stream or a JSON document does not conform to its
/// format. `offset()` is the byte offset at which decoding failed, or -1 when
/// the failure is not tied to a byte position.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::int64_t offset = -1)
      : std::runtime_error(offset >= 0 ? what + " (at byte " + std::to_string(offset) + ")" : what),
        message_(what),
        offset_(offset) {}

  std::int64_t offset() const noexcept { return offset_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::int64_t offset_;
};

/// File-system failure; the message carries the offending path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::string path)
      : std::runtime_error(what + ": " + path), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

using Shape = std::vector<std::size_t>;

/// Dense row-major float32 tensor. Rank >= 1, every extent >= 1.
class Tensor {
 public:
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  float& operator[](std::size_t flat) noexcept { return data_[flat]; }
  float operator[](std::size_t flat) const noexcept { return data_[flat]; }

  // Rank-3 accessors; the common layout here is [channels, rows, cols].
  float& at(std::size_t c, std::size_t i, std::size_t j) noexcept {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  float at(std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }

  /// Bitwise equality of shape and payload (so NaN payloads compare by bits).
  bool bit_equal(const Tensor& other) const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.bit_equal(b); }

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Number of elements implied by `shape`; throws std::invalid_argument on a
/// zero extent, an empty shape, or size_t overflow.
std::size_t element_count(std::span<const std::size_t> shape);

/// Axis-aligned box in continuous image-plane pixels; width is x2 - x1.
struct BBox {
  float x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const noexcept { return double(x2) - double(x1); }
  double height() const noexcept { return double(y2) - double(y1); }
  double area() const noexcept { return width() * height(); }
  bool valid() const noexcept { return x1 <= x2 && y1 <= y2; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Intersection over union, evaluated in double. Zero-area pairs give 0.
double iou(const BBox& a, const BBox& b) noexcept;

struct GroundTruth {
  BBox box;
  int class_id = 0;
};

}  // namespace cpn
