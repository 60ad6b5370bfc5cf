#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpn/tensor.hpp"

namespace cpn {

struct ImageInfo {
  int id = 0;
  double width = 0;
  double height = 0;
};

struct Category {
  int id = 0;
  std::string name;
};

struct Annotation {
  long long id = 0;
  int image_id = 0;
  int category_id = 0;
  BBox box;
};

/// One scored box of the detection dump (also used for class-agnostic proposals).
struct ImageDetection {
  int image_id = 0;
  int category_id = 0;
  BBox box;
  float score = 0;
};

struct GroundTruthSet {
  std::vector<ImageInfo> images;
  std::vector<Annotation> annotations;
  std::vector<Category> categories;
};

/// A metric value, or undefined when no eligible ground truth exists.
/// Undefined values are excluded from every average that would include them.
struct Metric {
  double value = 0.0;
  bool defined = false;

  static Metric of(double v) { return {v, true}; }
};

/// Half-open range (lo, hi] on ground-truth box area; lo = -1 admits area 0.
struct AreaRange {
  double lo = -1.0;
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double area) const noexcept { return area > lo && area <= hi; }
};

inline constexpr AreaRange kAreaAll{};
inline constexpr AreaRange kAreaSmall{-1.0, 32.0 * 32.0};
inline constexpr AreaRange kAreaMedium{32.0 * 32.0, 96.0 * 96.0};
inline constexpr AreaRange kAreaLarge{96.0 * 96.0, std::numeric_limits<double>::infinity()};

inline constexpr std::array<AreaRange, 4> kRecallAreaBuckets{{
    {96.0 * 96.0, 200.0 * 200.0},
    {200.0 * 200.0, 300.0 * 300.0},
    {300.0 * 300.0, 400.0 * 400.0},
    {400.0 * 400.0, std::numeric_limits<double>::infinity()},
}};
inline constexpr std::array<int, 4> kRecallAspectBuckets{5, 6, 7, 8};

/// 0.50:0.05:0.95 and 0.05:0.05:0.50.
std::array<double, 10> coco_iou_thresholds();
std::array<double, 10> low_iou_thresholds();

/// Per-detection matched ground-truth index and per-ground-truth coverage.
struct MatchResult {
  std::vector<std::optional<std::size_t>> det_to_gt;
  std::vector<bool> gt_covered;
};

/// Greedy matching of score-sorted detections against ground truths of one
/// class: each detection takes the unmatched ground truth of highest IoU
/// >= iou_thr, lowest index on ties.
MatchResult match_greedy(std::span<const BBox> dets_sorted, std::span<const BBox> gts,
                         double iou_thr);

/// Bucket r:1 of a box is round(max(w/h, h/w)); 0 for degenerate boxes.
int aspect_bucket(const BBox& box);

/// 101-point interpolated AP at one IoU threshold, averaged over categories
/// with at least one in-range ground truth. Ground truths outside `area`
/// are ignored together with detections matched to them and unmatched
/// detections whose own area is outside the range. Detections are capped at
/// `max_dets` per image by score before matching.
Metric average_precision(std::span<const ImageDetection> dets, const GroundTruthSet& gts,
                         double iou_thr, AreaRange area = kAreaAll,
                         std::size_t max_dets = 100);

struct RecallConfig {
  std::size_t max_dets = 1000;
  bool class_agnostic = true;
  AreaRange area = kAreaAll;
  std::optional<int> aspect;  // restrict to ground truths in bucket r:1
};

/// Fraction of in-range ground truths covered by at least one of the top
/// `max_dets` proposals of their image at IoU >= t, averaged over t in
/// 0.50:0.05:0.95. Pooled over all images.
Metric average_recall(std::span<const ImageDetection> proposals, const GroundTruthSet& gts,
                      const RecallConfig& cfg);

struct FalseDiscovery {
  Metric af, af5, af25, af50, af_small, af_medium, af_large;
  std::array<Metric, 10> low_iou_ap;  // AP at 0.05:0.05:0.50, all areas
};

/// AF = 1 - mean AP over IoU 0.05:0.05:0.50 (100 detections per image).
FalseDiscovery average_false_discovery(std::span<const ImageDetection> dets,
                                       const GroundTruthSet& gts);

struct EvalReport {
  Metric ap, ap50, ap75, ap_small, ap_medium, ap_large;
  Metric ar_100, ar_1000;
  std::array<Metric, 4> ar_area_buckets;
  std::array<Metric, 4> ar_aspect_buckets;
  Metric af, af5, af25, af50, af_small, af_medium, af_large;

  std::array<Metric, 10> ap_per_iou;      // 0.50:0.05:0.95
  std::array<Metric, 10> low_iou_ap;      // 0.05:0.05:0.50
  std::vector<std::string> undefined;     // names of undefined fields
};

/// Thrown when detection / proposal image ids are not in the ground truth.
class InconsistentIdsError : public std::runtime_error {
 public:
  InconsistentIdsError(const std::string& what, std::vector<int> offenders)
      : std::runtime_error(what), offenders_(std::move(offenders)) {}
  const std::vector<int>& offenders() const noexcept { return offenders_; }

 private:
  std::vector<int> offenders_;
};

EvalReport build_report(std::span<const ImageDetection> dets,
                        std::span<const ImageDetection> proposals, const GroundTruthSet& gts);

/// Aligned plain-text tables: AP summary, recall table (AR, area and aspect
/// buckets) and false-discovery table, values in percent.
std::string render_report_tables(const EvalReport& r);

}  // namespace cpn
