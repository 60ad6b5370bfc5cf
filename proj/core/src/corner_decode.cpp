#include "cpn/corner_decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cpn {
namespace {

void require_chw(const Tensor& t, const char* name) {
  if (t.rank() != 3) throw std::invalid_argument(std::string(name) + " must be rank 3");
}

}  // namespace

HeatmapSet::HeatmapSet(Tensor tl_heat_, Tensor br_heat_, Tensor tl_off_, Tensor br_off_)
    : tl_heat(std::move(tl_heat_)),
      br_heat(std::move(br_heat_)),
      tl_off(std::move(tl_off_)),
      br_off(std::move(br_off_)) {
  require_chw(tl_heat, "tl_heat");
  require_chw(br_heat, "br_heat");
  require_chw(tl_off, "tl_off");
  require_chw(br_off, "br_off");
  if (tl_heat.shape() != br_heat.shape())
    throw std::invalid_argument("top-left and bottom-right heatmaps differ in shape");
  const Shape off_shape{2, tl_heat.dim(1), tl_heat.dim(2)};
  if (tl_off.shape() != off_shape || br_off.shape() != off_shape)
    throw std::invalid_argument("offset maps must be [2,H,W] matching the heatmaps");
}

Tensor local_max_suppress(const Tensor& heat, int window) {
  require_chw(heat, "heat");
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("local-max window must be a positive odd integer");
  const std::ptrdiff_t r = window / 2;
  const auto C = heat.dim(0);
  const auto H = static_cast<std::ptrdiff_t>(heat.dim(1));
  const auto W = static_cast<std::ptrdiff_t>(heat.dim(2));

  Tensor out(heat.shape());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::ptrdiff_t i = 0; i < H; ++i) {
      for (std::ptrdiff_t j = 0; j < W; ++j) {
        const float v = heat.at(c, i, j);
        float m = v;
        for (std::ptrdiff_t di = std::max<std::ptrdiff_t>(0, i - r); di <= std::min(H - 1, i + r); ++di)
          for (std::ptrdiff_t dj = std::max<std::ptrdiff_t>(0, j - r); dj <= std::min(W - 1, j + r); ++dj)
            m = std::max(m, heat.at(c, di, dj));
        out.at(c, i, j) = (v == m) ? v : 0.0f;
      }
    }
  }
  return out;
}

std::vector<CornerKeypoint> decode_corners(const HeatmapSet& hm, CornerKind kind, std::size_t k,
                                           int stride) {
  const Tensor& heat = hm.heat(kind);
  if (k > heat.size())
    throw std::invalid_argument("K = " + std::to_string(k) + " exceeds heatmap cell count " +
                                std::to_string(heat.size()));
  const Tensor peaks = local_max_suppress(heat, 3);

  // Flat index order is (class, row, col) ascending, so it doubles as the tie-break key.
  std::vector<std::size_t> order(peaks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (peaks[a] != peaks[b]) return peaks[a] > peaks[b];
                      return a < b;
                    });

  const std::size_t H = hm.height(), W = hm.width();
  const Tensor& off = hm.offsets(kind);
  std::vector<CornerKeypoint> out;
  out.reserve(k);
  for (std::size_t n = 0; n < k; ++n) {
    const std::size_t flat = order[n];
    const std::size_t c = flat / (H * W);
    const std::size_t row = (flat / W) % H;
    const std::size_t col = flat % W;
    CornerKeypoint kp;
    kp.kind = kind;
    kp.class_id = static_cast<int>(c);
    kp.cell = {row, col};
    kp.score = peaks[flat];
    kp.x = (static_cast<float>(col) + off.at(0, row, col)) * static_cast<float>(stride);
    kp.y = (static_cast<float>(row) + off.at(1, row, col)) * static_cast<float>(stride);
    out.push_back(kp);
  }
  return out;
}

double gaussian_radius(double height, double width, double min_overlap) {
  const double a1 = 1.0;
  const double b1 = height + width;
  const double c1 = width * height * (1 - min_overlap) / (1 + min_overlap);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4 * a1 * c1)) / 2;

  const double a2 = 4.0;
  const double b2 = 2 * (height + width);
  const double c2 = (1 - min_overlap) * width * height;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 4 * a2 * c2)) / 2;

  const double a3 = 4 * min_overlap;
  const double b3 = -2 * min_overlap * (height + width);
  const double c3 = (min_overlap - 1) * width * height;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / 2;

  return std::min({r1, r2, r3});
}

namespace {

struct GridPoint {
  std::size_t row, col;
  float frac_x, frac_y;
};

GridPoint to_grid(float x, float y, std::size_t H, std::size_t W, int stride, const char* which) {
  const float gx = x / static_cast<float>(stride);
  const float gy = y / static_cast<float>(stride);
  const float fx = std::floor(gx);
  const float fy = std::floor(gy);
  if (!(fx >= 0.0f && fy >= 0.0f && fx < static_cast<float>(W) && fy < static_cast<float>(H)))
    throw std::invalid_argument(std::string(which) + " corner (" + std::to_string(x) + ", " +
                                std::to_string(y) + ") falls outside the heatmap grid");
  return {static_cast<std::size_t>(fy), static_cast<std::size_t>(fx), gx - fx, gy - fy};
}

void splat(Tensor& heat, std::size_t c, std::size_t row, std::size_t col, int radius) {
  const auto H = static_cast<std::ptrdiff_t>(heat.dim(1));
  const auto W = static_cast<std::ptrdiff_t>(heat.dim(2));
  const double sigma = radius / 3.0;
  for (std::ptrdiff_t di = -radius; di <= radius; ++di) {
    for (std::ptrdiff_t dj = -radius; dj <= radius; ++dj) {
      const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(row) + di;
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(col) + dj;
      if (i < 0 || j < 0 || i >= H || j >= W) continue;
      const float g = (di == 0 && dj == 0)
                          ? 1.0f
                          : static_cast<float>(std::exp(-double(di * di + dj * dj) / (2 * sigma * sigma)));
      float& cell = heat.at(c, i, j);
      cell = std::max(cell, g);
    }
  }
}

}  // namespace

HeatmapSet gaussian_targets(std::span<const GroundTruth> gts, std::size_t num_classes,
                            std::size_t height, std::size_t width, int stride) {
  Tensor tl_heat({num_classes, height, width});
  Tensor br_heat({num_classes, height, width});
  Tensor tl_off({2, height, width});
  Tensor br_off({2, height, width});

  for (const auto& gt : gts) {
    if (gt.class_id < 0 || static_cast<std::size_t>(gt.class_id) >= num_classes)
      throw std::invalid_argument("ground-truth class id out of range");
    if (!gt.box.valid()) throw std::invalid_argument("ground-truth box is not valid");
    const auto tl = to_grid(gt.box.x1, gt.box.y1, height, width, stride, "top-left");
    const auto br = to_grid(gt.box.x2, gt.box.y2, height, width, stride, "bottom-right");

    const double h = std::ceil(gt.box.height() / stride);
    const double w = std::ceil(gt.box.width() / stride);
    const int radius = std::max(0, static_cast<int>(gaussian_radius(h, w)));
    const auto c = static_cast<std::size_t>(gt.class_id);

    splat(tl_heat, c, tl.row, tl.col, radius);
    splat(br_heat, c, br.row, br.col, radius);
    tl_off.at(0, tl.row, tl.col) = tl.frac_x;
    tl_off.at(1, tl.row, tl.col) = tl.frac_y;
    br_off.at(0, br.row, br.col) = br.frac_x;
    br_off.at(1, br.row, br.col) = br.frac_y;
  }
  return HeatmapSet(std::move(tl_heat), std::move(br_heat), std::move(tl_off), std::move(br_off));
}

std::vector<Cell> positive_cells(const Tensor& target_heat) {
  require_chw(target_heat, "target heat");
  const std::size_t C = target_heat.dim(0), H = target_heat.dim(1), W = target_heat.dim(2);
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t c = 0; c < C; ++c)
        if (target_heat.at(c, i, j) == 1.0f) {
          cells.push_back({i, j});
          break;
        }
  return cells;
}

}  // namespace cpn
