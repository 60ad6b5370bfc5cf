#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cpn/corner_decode.hpp"
#include "cpn/tensor.hpp"

namespace cpn {

inline constexpr double kIouThreshold = 0.7;  // tau
inline constexpr double kFocalAlpha = 2.0;
inline constexpr double kFocalBeta = 2.0;
inline constexpr double kProbEpsilon = 1e-7;

struct LossBreakdown {
  double l_det_corner = 0;
  double l_offset_corner = 0;
  double l_prop = 0;
  double l_class = 0;
  double total = 0;
};

/// Max IoU of one proposal against all ground truths, overall and per class.
struct ProposalLabel {
  double iou_max = 0;
  std::vector<double> class_iou_max;
};

std::vector<ProposalLabel> label_proposals(std::span<const BBox> proposals,
                                           std::span<const GroundTruth> gts,
                                           std::size_t num_classes);

/// Loss value plus its gradient with respect to the predictions it consumed
/// (same flat layout as the prediction input).
struct LossGrad {
  double value = 0;
  std::vector<double> grad;
};

/// Binary focal objectness loss over M proposals, normalised by the number
/// of positives (IoU >= tau), clamped to 1 when there are none.
LossGrad loss_prop(std::span<const double> p, std::span<const ProposalLabel> labels,
                   double tau = kIouThreshold, double alpha = kFocalAlpha);

/// Per-class focal loss over an M x C row-major score matrix, normalised by the
/// number of proposals positive for at least one class (clamped to 1).
LossGrad loss_class(std::span<const double> q, std::size_t num_classes,
                    std::span<const ProposalLabel> labels, double tau = kIouThreshold,
                    double beta = kFocalBeta);

/// Penalty-reduced corner focal loss: positives where target == 1, negatives
/// down-weighted by (1 - target)^4; focusing power 2; normalised by #positives.
LossGrad loss_corner_det(std::span<const double> pred, std::span<const double> target);
double loss_corner_det(const Tensor& pred, const Tensor& target);

/// Smooth-L1 (transition at 1) over both offset planes at the masked cells,
/// normalised by the number of masked cells. Empty mask gives 0.
double loss_corner_offset(const Tensor& pred_off, const Tensor& target_off,
                          std::span<const Cell> mask);

/// Unweighted sum of the four terms; throws std::domain_error on non-finite input.
LossBreakdown loss_total(double l_det_corner, double l_offset_corner, double l_prop,
                         double l_class);

}  // namespace cpn
