#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cpn/proposals.hpp"
#include "cpn/tensor.hpp"

namespace cpn {

inline constexpr float kObjectnessThreshold = 0.2f;
inline constexpr double kSoftNmsSigma = 0.5;
inline constexpr double kSoftNmsPrune = 0.001;
inline constexpr std::size_t kMaxDetections = 100;

enum class LabelSource { kCornerClass, kHeadClass };

struct Detection {
  BBox box;
  int class_id = 0;
  float score = 0;
  LabelSource source = LabelSource::kCornerClass;
};

/// Indices m with p[m] >= threshold, in input order.
std::vector<std::size_t> filter_by_objectness(std::span<const float> p, float threshold);

/// (s1 + 0.5)(s2 + 0.5) mapped affinely from (0.25, 2.25) onto [0,1].
float fuse_scores(float s1, float s2);

/// One detection for the corner class and, when different, one for the
/// class head's argmax (lowest index wins ties). Scores come from fuse_scores.
std::vector<Detection> assign_labels(const Proposal& proposal, std::span<const float> q);

/// Gaussian soft-NMS run independently per class. Classes are emitted in
/// ascending id; within a class, in selection order. The selected box is the
/// highest remaining score, ties to the lowest input index; every other
/// remaining score is multiplied by exp(-iou^2 / sigma) and dropped when it
/// falls below `prune`.
std::vector<Detection> soft_nms(std::span<const Detection> dets, double sigma = kSoftNmsSigma,
                                double prune = kSoftNmsPrune);

/// The k highest-scoring detections, descending, ties by input index.
std::vector<Detection> top_k_truncate(std::span<const Detection> dets, std::size_t k = kMaxDetections);

}  // namespace cpn
