#include "cpn/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace cpn {

std::vector<std::size_t> filter_by_objectness(std::span<const float> p, float threshold) {
  std::vector<std::size_t> keep;
  for (std::size_t m = 0; m < p.size(); ++m)
    if (p[m] >= threshold) keep.push_back(m);
  return keep;
}

float fuse_scores(float s1, float s2) {
  const double raw = (double(s1) + 0.5) * (double(s2) + 0.5);
  return static_cast<float>(std::clamp((raw - 0.25) / 2.0, 0.0, 1.0));
}

std::vector<Detection> assign_labels(const Proposal& proposal, std::span<const float> q) {
  if (proposal.class_id < 0 || static_cast<std::size_t>(proposal.class_id) >= q.size())
    throw std::invalid_argument("proposal class id outside the class-score vector");
  const auto head_class =
      static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());

  std::vector<Detection> out;
  const auto corner = static_cast<std::size_t>(proposal.class_id);
  out.push_back({proposal.box, proposal.class_id, fuse_scores(proposal.corner_score, q[corner]),
                 LabelSource::kCornerClass});
  if (head_class != proposal.class_id)
    out.push_back({proposal.box, head_class,
                   fuse_scores(proposal.corner_score, q[static_cast<std::size_t>(head_class)]),
                   LabelSource::kHeadClass});
  return out;
}

std::vector<Detection> soft_nms(std::span<const Detection> dets, double sigma, double prune) {
  if (!(sigma > 0.0)) throw std::invalid_argument("soft-NMS sigma must be positive");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dets.size(); ++i) by_class[dets[i].class_id].push_back(i);

  std::vector<Detection> out;
  out.reserve(dets.size());
  for (auto& [cls, remaining] : by_class) {
    std::vector<float> score(dets.size());
    for (std::size_t i : remaining) score[i] = dets[i].score;

    while (!remaining.empty()) {
      // `remaining` stays sorted by input index, so the first maximum is the tie winner.
      auto best_it = remaining.begin();
      for (auto it = remaining.begin() + 1; it != remaining.end(); ++it)
        if (score[*it] > score[*best_it]) best_it = it;
      const std::size_t best = *best_it;
      remaining.erase(best_it);

      Detection kept = dets[best];
      kept.score = score[best];
      out.push_back(kept);

      std::vector<std::size_t> next;
      next.reserve(remaining.size());
      for (std::size_t j : remaining) {
        const double ov = iou(dets[best].box, dets[j].box);
        score[j] = static_cast<float>(double(score[j]) * std::exp(-(ov * ov) / sigma));
        if (double(score[j]) >= prune) next.push_back(j);
      }
      remaining = std::move(next);
    }
  }
  return out;
}

std::vector<Detection> top_k_truncate(std::span<const Detection> dets, std::size_t k) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  order.resize(std::min(k, order.size()));
  std::vector<Detection> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(dets[i]);
  return out;
}

}  // namespace cpn
