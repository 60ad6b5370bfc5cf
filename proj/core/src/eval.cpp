#include "cpn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace cpn {

std::array<double, 10> coco_iou_thresholds() {
  std::array<double, 10> t{};
  for (int i = 0; i < 10; ++i) t[i] = (50 + 5 * i) / 100.0;
  return t;
}

std::array<double, 10> low_iou_thresholds() {
  std::array<double, 10> t{};
  for (int i = 0; i < 10; ++i) t[i] = (5 + 5 * i) / 100.0;
  return t;
}

MatchResult match_greedy(std::span<const BBox> dets_sorted, std::span<const BBox> gts,
                         double iou_thr) {
  MatchResult r;
  r.det_to_gt.assign(dets_sorted.size(), std::nullopt);
  r.gt_covered.assign(gts.size(), false);
  for (std::size_t d = 0; d < dets_sorted.size(); ++d) {
    std::optional<std::size_t> best;
    double best_iou = iou_thr;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (r.gt_covered[g]) continue;
      const double v = iou(dets_sorted[d], gts[g]);
      if (v < iou_thr) continue;
      if (!best || v > best_iou) {
        best = g;
        best_iou = v;
      }
    }
    if (best) {
      r.det_to_gt[d] = best;
      r.gt_covered[*best] = true;
    }
  }
  return r;
}

int aspect_bucket(const BBox& box) {
  const double w = box.width(), h = box.height();
  if (!(w > 0.0) || !(h > 0.0)) return 0;
  return static_cast<int>(std::lround(std::max(w / h, h / w)));
}

namespace {

using CategoryMap = std::map<int, std::vector<std::size_t>>;

// Ground truths grouped image -> category -> annotation index.
std::map<int, CategoryMap> group_ground_truth(const GroundTruthSet& gts) {
  std::map<int, CategoryMap> out;
  for (const auto& img : gts.images) out[img.id];
  for (std::size_t i = 0; i < gts.annotations.size(); ++i)
    out[gts.annotations[i].image_id][gts.annotations[i].category_id].push_back(i);
  return out;
}

// Detections grouped image -> ordered list, capped at max_dets per image by
// score (stable, so input order breaks ties).
std::map<int, std::vector<std::size_t>> top_per_image(std::span<const ImageDetection> dets,
                                                      std::size_t max_dets) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < dets.size(); ++i) out[dets[i].image_id].push_back(i);
  for (auto& [img, idx] : out) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    if (idx.size() > max_dets) idx.resize(max_dets);
  }
  return out;
}

struct RankedDet {
  float score;
  bool tp;
};

// 101-point interpolated precision from a score-ordered tp/fp sequence.
double interpolated_ap(const std::vector<RankedDet>& ranked, std::size_t num_gt) {
  const std::size_t n = ranked.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (ranked[k].tp) ++tp;
    precision[k] = double(tp) / double(k + 1);
    recall[k] = double(tp) / double(num_gt);
  }
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double sum = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

}  // namespace

Metric average_precision(std::span<const ImageDetection> dets, const GroundTruthSet& gts,
                         double iou_thr, AreaRange area, std::size_t max_dets) {
  const auto gt_groups = group_ground_truth(gts);
  const auto det_groups = top_per_image(dets, max_dets);

  std::set<int> categories;
  for (const auto& a : gts.annotations) categories.insert(a.category_id);
  std::set<int> images;
  for (const auto& [img, _] : gt_groups) images.insert(img);
  for (const auto& [img, _] : det_groups) images.insert(img);

  double sum = 0.0;
  std::size_t counted = 0;
  for (int cat : categories) {
    std::vector<RankedDet> ranked;
    std::size_t num_gt = 0;
    for (int img : images) {
      std::vector<std::size_t> g;
      if (auto it = gt_groups.find(img); it != gt_groups.end())
        if (auto jt = it->second.find(cat); jt != it->second.end()) g = jt->second;
      // In-range ground truths first; they are preferred during matching.
      std::stable_partition(g.begin(), g.end(), [&](std::size_t i) {
        return area.contains(gts.annotations[i].box.area());
      });
      std::vector<bool> ignored(g.size());
      for (std::size_t k = 0; k < g.size(); ++k) {
        ignored[k] = !area.contains(gts.annotations[g[k]].box.area());
        if (!ignored[k]) ++num_gt;
      }

      std::vector<std::size_t> d;
      if (auto it = det_groups.find(img); it != det_groups.end())
        for (std::size_t i : it->second)
          if (dets[i].category_id == cat) d.push_back(i);

      std::vector<bool> taken(g.size(), false);
      for (std::size_t i : d) {
        std::optional<std::size_t> best;
        double best_iou = iou_thr;
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (taken[k]) continue;
          // Once matched to an in-range ground truth, ignored ones cannot win.
          if (best && !ignored[*best] && ignored[k]) break;
          const double v = iou(dets[i].box, gts.annotations[g[k]].box);
          if (v < iou_thr) continue;
          if (!best || v > best_iou) {
            best = k;
            best_iou = v;
          }
        }
        bool skip;
        if (best) {
          if (taken[*best]) throw std::logic_error("ground truth matched twice");
          taken[*best] = true;
          skip = ignored[*best];
        } else {
          skip = !area.contains(dets[i].box.area());
        }
        if (!skip) ranked.push_back({dets[i].score, best.has_value()});
      }
    }
    if (num_gt == 0) continue;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedDet& a, const RankedDet& b) { return a.score > b.score; });
    sum += interpolated_ap(ranked, num_gt);
    ++counted;
  }
  if (counted == 0) return {};
  return Metric::of(sum / double(counted));
}

Metric average_recall(std::span<const ImageDetection> proposals, const GroundTruthSet& gts,
                      const RecallConfig& cfg) {
  const auto det_groups = top_per_image(proposals, cfg.max_dets);
  const auto thresholds = coco_iou_thresholds();
  std::array<std::size_t, 10> covered{};
  std::size_t eligible = 0;

  for (const auto& gt : gts.annotations) {
    if (!cfg.area.contains(gt.box.area())) continue;
    if (cfg.aspect && aspect_bucket(gt.box) != *cfg.aspect) continue;
    ++eligible;
    double best = 0.0;
    if (auto it = det_groups.find(gt.image_id); it != det_groups.end())
      for (std::size_t i : it->second)
        if (cfg.class_agnostic || proposals[i].category_id == gt.category_id)
          best = std::max(best, iou(proposals[i].box, gt.box));
    for (std::size_t t = 0; t < thresholds.size(); ++t)
      if (best >= thresholds[t]) ++covered[t];
  }
  if (eligible == 0) return {};
  double sum = 0.0;
  for (std::size_t c : covered) sum += double(c) / double(eligible);
  return Metric::of(sum / double(thresholds.size()));
}

namespace {

Metric mean_of(std::span<const Metric> ms) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& m : ms)
    if (m.defined) {
      s += m.value;
      ++n;
    }
  if (n == 0) return {};
  return Metric::of(s / double(n));
}

Metric complement(const Metric& m) { return m.defined ? Metric::of(1.0 - m.value) : Metric{}; }

std::array<Metric, 10> ap_grid(std::span<const ImageDetection> dets, const GroundTruthSet& gts,
                               const std::array<double, 10>& thresholds, AreaRange area) {
  std::array<Metric, 10> out;
  for (std::size_t t = 0; t < thresholds.size(); ++t)
    out[t] = average_precision(dets, gts, thresholds[t], area);
  return out;
}

}  // namespace

FalseDiscovery average_false_discovery(std::span<const ImageDetection> dets,
                                       const GroundTruthSet& gts) {
  const auto grid = low_iou_thresholds();
  FalseDiscovery f;
  f.low_iou_ap = ap_grid(dets, gts, grid, kAreaAll);
  f.af = complement(mean_of(f.low_iou_ap));
  f.af5 = complement(f.low_iou_ap[0]);
  f.af25 = complement(f.low_iou_ap[4]);
  f.af50 = complement(f.low_iou_ap[9]);
  f.af_small = complement(mean_of(ap_grid(dets, gts, grid, kAreaSmall)));
  f.af_medium = complement(mean_of(ap_grid(dets, gts, grid, kAreaMedium)));
  f.af_large = complement(mean_of(ap_grid(dets, gts, grid, kAreaLarge)));
  return f;
}

EvalReport build_report(std::span<const ImageDetection> dets,
                        std::span<const ImageDetection> proposals, const GroundTruthSet& gts) {
  std::set<int> known;
  for (const auto& img : gts.images) known.insert(img.id);
  std::set<int> offenders;
  for (const auto& d : dets)
    if (!known.count(d.image_id)) offenders.insert(d.image_id);
  for (const auto& p : proposals)
    if (!known.count(p.image_id)) offenders.insert(p.image_id);
  for (const auto& a : gts.annotations)
    if (!known.count(a.image_id)) offenders.insert(a.image_id);
  if (!offenders.empty()) {
    std::string msg = "image ids not present in the ground truth:";
    for (int id : offenders) msg += " " + std::to_string(id);
    throw InconsistentIdsError(msg, {offenders.begin(), offenders.end()});
  }

  EvalReport r;
  r.ap_per_iou = ap_grid(dets, gts, coco_iou_thresholds(), kAreaAll);
  r.ap = mean_of(r.ap_per_iou);
  r.ap50 = r.ap_per_iou[0];
  r.ap75 = r.ap_per_iou[5];
  r.ap_small = mean_of(ap_grid(dets, gts, coco_iou_thresholds(), kAreaSmall));
  r.ap_medium = mean_of(ap_grid(dets, gts, coco_iou_thresholds(), kAreaMedium));
  r.ap_large = mean_of(ap_grid(dets, gts, coco_iou_thresholds(), kAreaLarge));

  r.ar_100 = average_recall(dets, gts, {100, false, kAreaAll, std::nullopt});
  r.ar_1000 = average_recall(proposals, gts, {1000, true, kAreaAll, std::nullopt});
  for (std::size_t b = 0; b < 4; ++b) {
    r.ar_area_buckets[b] = average_recall(proposals, gts, {1000, true, kRecallAreaBuckets[b], std::nullopt});
    r.ar_aspect_buckets[b] = average_recall(proposals, gts, {1000, true, kAreaAll, kRecallAspectBuckets[b]});
  }

  const auto f = average_false_discovery(dets, gts);
  r.low_iou_ap = f.low_iou_ap;
  r.af = f.af;
  r.af5 = f.af5;
  r.af25 = f.af25;
  r.af50 = f.af50;
  r.af_small = f.af_small;
  r.af_medium = f.af_medium;
  r.af_large = f.af_large;

  const std::pair<const char*, const Metric*> named[] = {
      {"ap", &r.ap}, {"ap50", &r.ap50}, {"ap75", &r.ap75}, {"ap_small", &r.ap_small},
      {"ap_medium", &r.ap_medium}, {"ap_large", &r.ap_large}, {"ar_100", &r.ar_100},
      {"ar_1000", &r.ar_1000}, {"ar_area_1+", &r.ar_area_buckets[0]},
      {"ar_area_2+", &r.ar_area_buckets[1]}, {"ar_area_3+", &r.ar_area_buckets[2]},
      {"ar_area_4+", &r.ar_area_buckets[3]}, {"ar_5:1", &r.ar_aspect_buckets[0]},
      {"ar_6:1", &r.ar_aspect_buckets[1]}, {"ar_7:1", &r.ar_aspect_buckets[2]},
      {"ar_8:1", &r.ar_aspect_buckets[3]}, {"af", &r.af}, {"af5", &r.af5}, {"af25", &r.af25},
      {"af50", &r.af50}, {"af_small", &r.af_small}, {"af_medium", &r.af_medium},
      {"af_large", &r.af_large}};
  for (const auto& [name, m] : named)
    if (!m->defined) r.undefined.emplace_back(name);
  return r;
}

namespace {

std::string cell(const Metric& m) {
  if (!m.defined) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * m.value);
  return buf;
}

void table(std::ostringstream& os, const std::vector<std::string>& head,
           const std::vector<Metric>& row) {
  std::vector<std::size_t> width(head.size());
  std::vector<std::string> vals;
  for (std::size_t i = 0; i < head.size(); ++i) {
    vals.push_back(cell(row[i]));
    width[i] = std::max<std::size_t>({head[i].size(), vals[i].size(), 5});
  }
  auto line = [&](const std::vector<std::string>& cells) {
    os << '|';
    for (std::size_t i = 0; i < cells.size(); ++i) {
      os << ' ' << std::string(width[i] - cells[i].size(), ' ') << cells[i] << " |";
    }
    os << '\n';
  };
  line(head);
  os << '|';
  for (std::size_t w : width) os << std::string(w + 2, '-') << '|';
  os << '\n';
  line(vals);
}

}  // namespace

std::string render_report_tables(const EvalReport& r) {
  std::ostringstream os;
  os << "Detection (AP, %)\n";
  table(os, {"AP", "AP50", "AP75", "APS", "APM", "APL"},
        {r.ap, r.ap50, r.ap75, r.ap_small, r.ap_medium, r.ap_large});
  os << "\nRecall (class-agnostic, 1000 proposals, %)\n";
  table(os, {"AR", "AR1+", "AR2+", "AR3+", "AR4+", "AR5:1", "AR6:1", "AR7:1", "AR8:1"},
        {r.ar_1000, r.ar_area_buckets[0], r.ar_area_buckets[1], r.ar_area_buckets[2],
         r.ar_area_buckets[3], r.ar_aspect_buckets[0], r.ar_aspect_buckets[1],
         r.ar_aspect_buckets[2], r.ar_aspect_buckets[3]});
  os << "\nAR100 (class-aware): " << cell(r.ar_100) << "\n";
  os << "\nFalse discovery (AF, %)\n";
  table(os, {"AF", "AF5", "AF25", "AF50", "AFS", "AFM", "AFL"},
        {r.af, r.af5, r.af25, r.af50, r.af_small, r.af_medium, r.af_large});
  if (!r.undefined.empty()) {
    os << "\nundefined (no eligible ground truth):";
    for (const auto& n : r.undefined) os << ' ' << n;
    os << '\n';
  }
  return os.str();
}

}  // namespace cpn
