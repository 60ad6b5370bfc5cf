#include "cpn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cpn {
namespace {

void require_open_unit(double v, const char* what) {
  if (!(v > 0.0 && v < 1.0))
    throw std::invalid_argument(std::string(what) + " must lie strictly inside (0,1)");
}

// Focal term and its derivative for one prediction.
//   positive: t = (1-p)^a log p
//   negative: t = p^a log(1-p)
// Loss contribution is -t; the clamp zeroes the derivative outside [eps, 1-eps].
struct Term {
  double value;
  double deriv;
};

Term focal_term(double p_raw, bool positive, double a) {
  const bool clamped = p_raw < kProbEpsilon || p_raw > 1.0 - kProbEpsilon;
  const double p = std::clamp(p_raw, kProbEpsilon, 1.0 - kProbEpsilon);
  double t, dt;
  if (positive) {
    const double w = std::pow(1.0 - p, a);
    t = w * std::log(p);
    dt = -a * std::pow(1.0 - p, a - 1.0) * std::log(p) + w / p;
  } else {
    const double w = std::pow(p, a);
    t = w * std::log(1.0 - p);
    dt = a * std::pow(p, a - 1.0) * std::log(1.0 - p) - w / (1.0 - p);
  }
  return {-t, clamped ? 0.0 : -dt};
}

}  // namespace

std::vector<ProposalLabel> label_proposals(std::span<const BBox> proposals,
                                           std::span<const GroundTruth> gts,
                                           std::size_t num_classes) {
  std::vector<ProposalLabel> labels(proposals.size());
  for (std::size_t m = 0; m < proposals.size(); ++m) {
    auto& l = labels[m];
    l.class_iou_max.assign(num_classes, 0.0);
    for (const auto& gt : gts) {
      if (gt.class_id < 0 || static_cast<std::size_t>(gt.class_id) >= num_classes)
        throw std::invalid_argument("ground-truth class id out of range");
      const double v = iou(proposals[m], gt.box);
      l.iou_max = std::max(l.iou_max, v);
      auto& cm = l.class_iou_max[static_cast<std::size_t>(gt.class_id)];
      cm = std::max(cm, v);
    }
  }
  return labels;
}

LossGrad loss_prop(std::span<const double> p, std::span<const ProposalLabel> labels, double tau,
                   double alpha) {
  if (p.empty()) throw std::invalid_argument("loss_prop needs at least one proposal");
  if (p.size() != labels.size()) throw std::invalid_argument("loss_prop: score/label length mismatch");
  std::size_t positives = 0;
  for (std::size_t m = 0; m < p.size(); ++m) {
    require_open_unit(p[m], "objectness score");
    if (labels[m].iou_max >= tau) ++positives;
  }
  const double norm = static_cast<double>(std::max<std::size_t>(positives, 1));

  LossGrad out;
  out.grad.resize(p.size());
  for (std::size_t m = 0; m < p.size(); ++m) {
    const Term t = focal_term(p[m], labels[m].iou_max >= tau, alpha);
    out.value += t.value;
    out.grad[m] = t.deriv / norm;
  }
  out.value /= norm;
  return out;
}

LossGrad loss_class(std::span<const double> q, std::size_t num_classes,
                    std::span<const ProposalLabel> labels, double tau, double beta) {
  if (num_classes == 0) throw std::invalid_argument("loss_class needs C >= 1");
  if (labels.empty()) throw std::invalid_argument("loss_class needs at least one proposal");
  if (q.size() != labels.size() * num_classes)
    throw std::invalid_argument("loss_class: score matrix must be M x C");
  std::size_t positives = 0;
  for (const auto& l : labels) {
    if (l.class_iou_max.size() != num_classes)
      throw std::invalid_argument("loss_class: label class count mismatch");
    if (std::any_of(l.class_iou_max.begin(), l.class_iou_max.end(),
                    [&](double v) { return v >= tau; }))
      ++positives;
  }
  for (double v : q) require_open_unit(v, "class score");
  const double norm = static_cast<double>(std::max<std::size_t>(positives, 1));

  LossGrad out;
  out.grad.resize(q.size());
  for (std::size_t m = 0; m < labels.size(); ++m) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      const std::size_t k = m * num_classes + c;
      const Term t = focal_term(q[k], labels[m].class_iou_max[c] >= tau, beta);
      out.value += t.value;
      out.grad[k] = t.deriv / norm;
    }
  }
  out.value /= norm;
  return out;
}

LossGrad loss_corner_det(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("corner loss: shape mismatch");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require_open_unit(pred[i], "corner heatmap prediction");
    if (!(target[i] >= 0.0 && target[i] <= 1.0))
      throw std::invalid_argument("corner heatmap target must lie in [0,1]");
    if (target[i] == 1.0) ++positives;
  }
  const double norm = static_cast<double>(std::max<std::size_t>(positives, 1));

  LossGrad out;
  out.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool pos = target[i] == 1.0;
    const Term t = focal_term(pred[i], pos, 2.0);
    const double penalty = pos ? 1.0 : std::pow(1.0 - target[i], 4.0);
    out.value += penalty * t.value;
    out.grad[i] = penalty * t.deriv / norm;
  }
  out.value /= norm;
  return out;
}

double loss_corner_det(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw std::invalid_argument("corner loss: shape mismatch");
  std::vector<double> p(pred.data().begin(), pred.data().end());
  std::vector<double> t(target.data().begin(), target.data().end());
  return loss_corner_det(p, t).value;
}

double loss_corner_offset(const Tensor& pred_off, const Tensor& target_off,
                          std::span<const Cell> mask) {
  if (pred_off.shape() != target_off.shape() || pred_off.rank() != 3 || pred_off.dim(0) != 2)
    throw std::invalid_argument("offset loss expects matching [2,H,W] maps");
  if (mask.empty()) return 0.0;
  double sum = 0.0;
  for (const Cell& cell : mask) {
    if (cell.row >= pred_off.dim(1) || cell.col >= pred_off.dim(2))
      throw std::invalid_argument("offset mask cell outside the map");
    for (std::size_t plane = 0; plane < 2; ++plane) {
      const double e = std::abs(double(pred_off.at(plane, cell.row, cell.col)) -
                                double(target_off.at(plane, cell.row, cell.col)));
      sum += e < 1.0 ? 0.5 * e * e : e - 0.5;
    }
  }
  return sum / static_cast<double>(mask.size());
}

LossBreakdown loss_total(double l_det_corner, double l_offset_corner, double l_prop,
                         double l_class) {
  for (double v : {l_det_corner, l_offset_corner, l_prop, l_class})
    if (!std::isfinite(v)) throw std::domain_error("loss term is not finite");
  return {l_det_corner, l_offset_corner, l_prop, l_class,
          l_det_corner + l_offset_corner + l_prop + l_class};
}

}  // namespace cpn
