#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace cpn::oracle {

double tent_sample(const Tensor& feat, std::size_t c, double y, double x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < feat.dim(1); ++i) {
    const double wy = std::max(0.0, 1.0 - std::abs(y - double(i)));
    if (wy == 0.0) continue;
    for (std::size_t j = 0; j < feat.dim(2); ++j) {
      const double wx = std::max(0.0, 1.0 - std::abs(x - double(j)));
      acc += wy * wx * double(feat.at(c, i, j));
    }
  }
  return acc;
}

Tensor dense_roi_align(const Tensor& feat, const BBox& box, int stride, std::size_t out) {
  const std::size_t D = feat.dim(0);
  Tensor result({D, out, out});
  const double w = double(box.x2) - double(box.x1);
  const double h = double(box.y2) - double(box.y1);
  if (!(w > 0) || !(h > 0)) return result;
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t by = 0; by < out; ++by)
      for (std::size_t bx = 0; bx < out; ++bx) {
        double sum = 0.0;
        for (double fy : {0.25, 0.75})
          for (double fx : {0.25, 0.75}) {
            // Sample at fraction (by + fy) / out of the box, in feature units.
            const double y = (double(box.y1) + h * (double(by) + fy) / double(out)) / stride;
            const double x = (double(box.x1) + w * (double(bx) + fx) / double(out)) / stride;
            sum += tent_sample(feat, d, y, x);
          }
        result.at(d, by, bx) = static_cast<float>(sum / 4.0);
      }
  return result;
}

namespace {
double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace

double naive_binary_head(const Tensor& pooled, const HeadWeights& w) {
  double z = w.binary_bias;
  for (std::size_t d = 0; d < pooled.dim(0); ++d)
    for (std::size_t i = 0; i < pooled.dim(1); ++i)
      for (std::size_t j = 0; j < pooled.dim(2); ++j)
        z += double(w.binary_kernel[(d * 7 + i) * 7 + j]) * double(pooled.at(d, i, j));
  return logistic(z);
}

std::vector<double> naive_class_head(const Tensor& pooled, const HeadWeights& w) {
  std::vector<double> q;
  const std::size_t D = pooled.dim(0);
  for (std::size_t c = 0; c < w.num_classes(); ++c) {
    double z = w.class_bias[c];
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j)
          z += double(w.class_kernel[((c * D + d) * 7 + i) * 7 + j]) * double(pooled.at(d, i, j));
    q.push_back(logistic(z));
  }
  return q;
}

std::vector<Detection> naive_soft_nms(const std::vector<Detection>& dets, double sigma,
                                      double prune) {
  std::set<int> classes;
  for (const auto& d : dets) classes.insert(d.class_id);
  std::vector<Detection> out;
  for (int cls : classes) {
    std::vector<float> s(dets.size());
    std::vector<bool> alive(dets.size(), false);
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (dets[i].class_id == cls) {
        alive[i] = true;
        s[i] = dets[i].score;
      }
    for (;;) {
      long best = -1;
      for (std::size_t i = 0; i < dets.size(); ++i)
        if (alive[i] && (best < 0 || s[i] > s[std::size_t(best)])) best = long(i);
      if (best < 0) break;
      const auto b = std::size_t(best);
      alive[b] = false;
      Detection kept = dets[b];
      kept.score = s[b];
      out.push_back(kept);
      for (std::size_t i = 0; i < dets.size(); ++i) {
        if (!alive[i]) continue;
        const double o = iou(dets[b].box, dets[i].box);
        s[i] = static_cast<float>(double(s[i]) * std::exp(-(o * o) / sigma));
        if (double(s[i]) < prune) alive[i] = false;
      }
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> exhaustive_pairs(
    const std::vector<CornerKeypoint>& tls, const std::vector<CornerKeypoint>& brs) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < tls.size(); ++a)
    for (std::size_t b = 0; b < brs.size(); ++b)
      if (tls[a].class_id == brs[b].class_id && tls[a].x < brs[b].x && tls[a].y < brs[b].y)
        pairs.emplace_back(a, b);
  return pairs;
}

namespace {

double box_iou(const BBox& a, const BBox& b) {
  const double w = std::min<double>(a.x2, b.x2) - std::max<double>(a.x1, b.x1);
  const double h = std::min<double>(a.y2, b.y2) - std::max<double>(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  const double inter = w * h;
  const double u = a.area() + b.area() - inter;
  return u > 0 ? inter / u : 0.0;
}

bool in_area(double area, AreaRange r) { return area > r.lo && area <= r.hi; }

int aspect_of(const BBox& b) {
  const double w = b.width(), h = b.height();
  if (w <= 0 || h <= 0) return 0;
  return int(std::lround(w > h ? w / h : h / w));
}

// Per image, the indices of its `cap` best detections in (score desc, input
// order) order.
std::map<int, std::vector<std::size_t>> capped(const std::vector<ImageDetection>& dets,
                                               std::size_t cap) {
  std::map<int, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < dets.size(); ++i) by_image[dets[i].image_id].push_back(i);
  for (auto& [img, v] : by_image) {
    // Selection sort: pick the best remaining each time.
    std::vector<std::size_t> ordered;
    std::vector<bool> used(v.size(), false);
    for (std::size_t n = 0; n < std::min(cap, v.size()); ++n) {
      long best = -1;
      for (std::size_t k = 0; k < v.size(); ++k)
        if (!used[k] && (best < 0 || dets[v[k]].score > dets[v[std::size_t(best)]].score))
          best = long(k);
      used[std::size_t(best)] = true;
      ordered.push_back(v[std::size_t(best)]);
    }
    v = ordered;
  }
  return by_image;
}

Metric bf_ap(const std::vector<ImageDetection>& dets, const GroundTruthSet& gts, double thr,
             AreaRange area) {
  const auto top = capped(dets, 100);
  std::set<int> cats, images;
  for (const auto& a : gts.annotations) cats.insert(a.category_id);
  for (const auto& im : gts.images) images.insert(im.id);
  for (const auto& a : gts.annotations) images.insert(a.image_id);
  for (const auto& d : dets) images.insert(d.image_id);

  struct Rec {
    float score;
    int image;
    std::size_t pos;
    bool tp;
  };
  double total = 0;
  int counted = 0;
  for (int cat : cats) {
    std::vector<Rec> recs;
    int npos = 0;
    for (int img : images) {
      std::vector<std::size_t> g;
      for (std::size_t i = 0; i < gts.annotations.size(); ++i)
        if (gts.annotations[i].image_id == img && gts.annotations[i].category_id == cat)
          g.push_back(i);
      for (std::size_t i : g)
        if (in_area(gts.annotations[i].box.area(), area)) ++npos;
      std::vector<bool> used(g.size(), false);
      auto it = top.find(img);
      if (it == top.end()) continue;
      std::size_t pos = 0;
      for (std::size_t di : it->second) {
        if (dets[di].category_id != cat) continue;
        ++pos;
        // Best in-range candidate first, then best ignored one.
        long pick = -1;
        for (int pass = 0; pass < 2 && pick < 0; ++pass) {
          double best = -1;
          for (std::size_t k = 0; k < g.size(); ++k) {
            const bool ignored = !in_area(gts.annotations[g[k]].box.area(), area);
            if (used[k] || ignored != (pass == 1)) continue;
            const double v = box_iou(dets[di].box, gts.annotations[g[k]].box);
            if (v >= thr && v > best) {
              best = v;
              pick = long(k);
            }
          }
        }
        bool ignore_det;
        if (pick >= 0) {
          used[std::size_t(pick)] = true;
          ignore_det = !in_area(gts.annotations[g[std::size_t(pick)]].box.area(), area);
        } else {
          ignore_det = !in_area(dets[di].box.area(), area);
        }
        if (!ignore_det) recs.push_back({dets[di].score, img, pos, pick >= 0});
      }
    }
    if (npos == 0) continue;
    std::sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.image != b.image) return a.image < b.image;
      return a.pos < b.pos;
    });
    std::vector<double> prec, rec;
    int tp = 0;
    for (std::size_t k = 0; k < recs.size(); ++k) {
      tp += recs[k].tp ? 1 : 0;
      prec.push_back(double(tp) / double(k + 1));
      rec.push_back(double(tp) / double(npos));
    }
    double s = 0;
    for (int i = 0; i <= 100; ++i) {
      const double r = i / 100.0;
      double best = 0;
      for (std::size_t k = 0; k < recs.size(); ++k)
        if (rec[k] >= r) best = std::max(best, prec[k]);
      s += best;
    }
    total += s / 101.0;
    ++counted;
  }
  if (counted == 0) return {};
  return Metric::of(total / counted);
}

Metric bf_ar(const std::vector<ImageDetection>& props, const GroundTruthSet& gts,
             std::size_t cap, bool agnostic, AreaRange area, int aspect) {
  const auto top = capped(props, cap);
  double sum = 0;
  int eligible = 0;
  std::vector<int> hits(10, 0);
  for (const auto& g : gts.annotations) {
    if (!in_area(g.box.area(), area)) continue;
    if (aspect > 0 && aspect_of(g.box) != aspect) continue;
    ++eligible;
    double best = 0;
    if (auto it = top.find(g.image_id); it != top.end())
      for (std::size_t i : it->second)
        if (agnostic || props[i].category_id == g.category_id)
          best = std::max(best, box_iou(props[i].box, g.box));
    for (int t = 0; t < 10; ++t)
      if (best >= (50 + 5 * t) / 100.0) ++hits[std::size_t(t)];
  }
  if (eligible == 0) return {};
  for (int h : hits) sum += double(h) / eligible;
  return Metric::of(sum / 10.0);
}

Metric avg(const std::vector<Metric>& v) {
  double s = 0;
  int n = 0;
  for (const auto& m : v)
    if (m.defined) {
      s += m.value;
      ++n;
    }
  return n ? Metric::of(s / n) : Metric{};
}

Metric one_minus(const Metric& m) { return m.defined ? Metric::of(1.0 - m.value) : Metric{}; }

std::vector<Metric> grid(const std::vector<ImageDetection>& dets, const GroundTruthSet& gts,
                         int first, AreaRange area) {
  std::vector<Metric> out;
  for (int i = 0; i < 10; ++i) out.push_back(bf_ap(dets, gts, (first + 5 * i) / 100.0, area));
  return out;
}

}  // namespace

EvalReport brute_force_report(const std::vector<ImageDetection>& dets,
                              const std::vector<ImageDetection>& proposals,
                              const GroundTruthSet& gts) {
  const double inf = std::numeric_limits<double>::infinity();
  const AreaRange all{-1, inf}, small{-1, 1024}, medium{1024, 9216}, large{9216, inf};
  EvalReport r;
  const auto hi = grid(dets, gts, 50, all);
  std::copy(hi.begin(), hi.end(), r.ap_per_iou.begin());
  r.ap = avg(hi);
  r.ap50 = hi[0];
  r.ap75 = hi[5];
  r.ap_small = avg(grid(dets, gts, 50, small));
  r.ap_medium = avg(grid(dets, gts, 50, medium));
  r.ap_large = avg(grid(dets, gts, 50, large));
  r.ar_100 = bf_ar(dets, gts, 100, false, all, 0);
  r.ar_1000 = bf_ar(proposals, gts, 1000, true, all, 0);
  const double edges[] = {96, 200, 300, 400};
  for (int b = 0; b < 4; ++b) {
    const AreaRange range{edges[b] * edges[b], b < 3 ? edges[b + 1] * edges[b + 1] : inf};
    r.ar_area_buckets[std::size_t(b)] = bf_ar(proposals, gts, 1000, true, range, 0);
    r.ar_aspect_buckets[std::size_t(b)] = bf_ar(proposals, gts, 1000, true, all, 5 + b);
  }
  const auto lo = grid(dets, gts, 5, all);
  std::copy(lo.begin(), lo.end(), r.low_iou_ap.begin());
  r.af = one_minus(avg(lo));
  r.af5 = one_minus(lo[0]);
  r.af25 = one_minus(lo[4]);
  r.af50 = one_minus(lo[9]);
  r.af_small = one_minus(avg(grid(dets, gts, 5, small)));
  r.af_medium = one_minus(avg(grid(dets, gts, 5, medium)));
  r.af_large = one_minus(avg(grid(dets, gts, 5, large)));
  return r;
}

double central_difference(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2 * h);
}

double relative_inf_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return den > 0 ? num / den : num;
}

namespace {

BBox random_box(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 4);
  std::uniform_real_distribution<double> u(0, 1);
  double w, h;
  switch (kind(rng)) {
    case 0: w = 4 + 28 * u(rng), h = 4 + 28 * u(rng); break;           // small
    case 1: w = 32 + 70 * u(rng), h = 32 + 70 * u(rng); break;         // medium
    case 2: w = 100 + 400 * u(rng), h = 100 + 400 * u(rng); break;     // large
    case 3: h = 10 + 40 * u(rng), w = h * (4.5 + 4 * u(rng)); break;   // elongated
    default: w = 5 + 200 * u(rng), h = 5 + 200 * u(rng); break;
  }
  const double x = std::floor(600 * u(rng)), y = std::floor(600 * u(rng));
  return {float(x), float(y), float(x + std::round(w)), float(y + std::round(h))};
}

}  // namespace

EvalInstance random_eval_instance(std::mt19937_64& rng, std::size_t max_dets,
                                  std::size_t max_gts) {
  std::uniform_int_distribution<int> n_img(1, 3), n_cat(1, 3);
  const int images = n_img(rng), cats = n_cat(rng);
  std::uniform_int_distribution<int> pick_img(1, images), pick_cat(0, cats - 1);
  std::uniform_int_distribution<std::size_t> n_g(0, max_gts), n_d(0, max_dets);
  std::uniform_real_distribution<double> u(0, 1);

  EvalInstance inst;
  for (int i = 1; i <= images; ++i) inst.gts.images.push_back({i, 640, 640});
  for (int c = 0; c < cats; ++c) inst.gts.categories.push_back({c, "c" + std::to_string(c)});
  const std::size_t ng = n_g(rng), nd = n_d(rng);
  for (std::size_t k = 0; k < ng; ++k)
    inst.gts.annotations.push_back({(long long)k + 1, pick_img(rng), pick_cat(rng), random_box(rng)});
  for (std::size_t k = 0; k < nd; ++k) {
    ImageDetection d;
    if (!inst.gts.annotations.empty() && u(rng) < 0.7) {
      // Jittered copy of a ground truth, sometimes with the wrong class.
      std::uniform_int_distribution<std::size_t> pick(0, inst.gts.annotations.size() - 1);
      const auto& g = inst.gts.annotations[pick(rng)];
      d.image_id = g.image_id;
      d.category_id = u(rng) < 0.8 ? g.category_id : pick_cat(rng);
      const double jw = g.box.width() * 0.3, jh = g.box.height() * 0.3;
      auto j = [&](double s) { return std::round((u(rng) - 0.5) * s); };
      d.box = {float(g.box.x1 + j(jw)), float(g.box.y1 + j(jh)), float(g.box.x2 + j(jw)),
               float(g.box.y2 + j(jh))};
      if (!(d.box.x2 > d.box.x1)) d.box.x2 = d.box.x1 + 1;
      if (!(d.box.y2 > d.box.y1)) d.box.y2 = d.box.y1 + 1;
    } else {
      d.image_id = pick_img(rng);
      d.category_id = pick_cat(rng);
      d.box = random_box(rng);
    }
    d.score = float(std::round(u(rng) * 10) / 10);  // coarse, so ties happen
    inst.dets.push_back(d);
  }
  return inst;
}

Tensor random_feature(std::mt19937_64& rng, std::size_t D, std::size_t H, std::size_t W) {
  Tensor t({D, H, W});
  std::uniform_real_distribution<float> u(-1, 1);
  for (float& v : t.data()) v = u(rng);
  return t;
}

}  // namespace cpn::oracle
