#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cpn/tensor.hpp"

namespace cpn {

inline constexpr int kStride = 4;
inline constexpr int kDefaultTopK = 70;

enum class CornerKind { kTopLeft, kBottomRight };

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct CornerKeypoint {
  CornerKind kind = CornerKind::kTopLeft;
  int class_id = 0;
  float x = 0;  // image pixels
  float y = 0;
  float score = 0;
  Cell cell;
};

/// Corner heatmaps [C,H,W] and offset planes [2,H,W] (x plane, then y plane).
struct HeatmapSet {
  Tensor tl_heat;
  Tensor br_heat;
  Tensor tl_off;
  Tensor br_off;

  HeatmapSet(Tensor tl_heat, Tensor br_heat, Tensor tl_off, Tensor br_off);

  std::size_t num_classes() const { return tl_heat.dim(0); }
  std::size_t height() const { return tl_heat.dim(1); }
  std::size_t width() const { return tl_heat.dim(2); }

  const Tensor& heat(CornerKind k) const { return k == CornerKind::kTopLeft ? tl_heat : br_heat; }
  const Tensor& offsets(CornerKind k) const { return k == CornerKind::kTopLeft ? tl_off : br_off; }
};

/// Keeps a cell when it equals the maximum of its window x window
/// neighbourhood (clipped at the border), zeroes it otherwise.
Tensor local_max_suppress(const Tensor& heat, int window);

/// Top-K corner keypoints over all C*H*W cells after 3x3 suppression. Output
/// is in descending score order with ties broken by (class, row, col).
std::vector<CornerKeypoint> decode_corners(const HeatmapSet& hm, CornerKind kind, std::size_t k,
                                           int stride = kStride);

/// Corner-size radius such that a corner displaced within it still gives a
/// box with IoU >= min_overlap against the original (heatmap units).
double gaussian_radius(double height, double width, double min_overlap = 0.7);

/// Training targets: unnormalised Gaussian splats (peak 1, sigma = radius/3,
/// element-wise max on overlap) and fractional offsets at the peak cells.
HeatmapSet gaussian_targets(std::span<const GroundTruth> gts, std::size_t num_classes,
                            std::size_t height, std::size_t width, int stride = kStride);

/// Cells holding a ground-truth corner (value exactly 1 on any channel).
std::vector<Cell> positive_cells(const Tensor& target_heat);

}  // namespace cpn
