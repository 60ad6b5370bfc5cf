#include "cpn/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "cpn/coco_json.hpp"
#include "cpn/cpnt.hpp"
#include "cpn/pipeline.hpp"

namespace cpn {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kElongatedAspect = 5.1;  // margin over 5:1 for coordinate rounding
constexpr double kLargeSide = 401.0;      // margin over 400^2
constexpr double kCoordQuantum = 8.0;     // coordinates are multiples of 1/8 px
constexpr int kDrawBudget = 1000;

double quantize(double v) { return std::round(v * kCoordQuantum) / kCoordQuantum; }

std::size_t grid_extent(double image_extent) {
  return static_cast<std::size_t>(std::ceil(image_extent / kStride));
}

enum class Regime { kGeneral, kElongated, kLarge };

struct AreaBounds {
  double lo, hi;
};

// Admissible area for aspect r when the long side runs along an extent of
// `along` and the short side along `across`.
AreaBounds area_bounds(const SynthConfig& cfg, double r, double along, double across,
                       double min_area) {
  const double lo = std::max(min_area, cfg.min_side * cfg.min_side * r);
  const double hi = std::min({cfg.max_area, along * along / r, across * across * r});
  return {lo, hi};
}

bool regime_feasible(const SynthConfig& cfg, Regime regime) {
  const double L = std::max(cfg.usable_width(), cfg.usable_height());
  const double S = std::min(cfg.usable_width(), cfg.usable_height());
  switch (regime) {
    case Regime::kGeneral: {
      const auto b = area_bounds(cfg, cfg.min_aspect, L, S, cfg.min_area);
      return b.lo <= b.hi;
    }
    case Regime::kElongated: {
      if (cfg.max_aspect < kElongatedAspect) return false;
      const double r = std::max(cfg.min_aspect, kElongatedAspect);
      const auto b = area_bounds(cfg, r, L, S, cfg.min_area);
      return b.lo <= b.hi;
    }
    case Regime::kLarge: {
      const auto b = area_bounds(cfg, cfg.min_aspect, L, S,
                                 std::max(cfg.min_area, kLargeSide * kLargeSide));
      return b.lo <= b.hi;
    }
  }
  return false;
}

BBox draw_box(const SynthConfig& cfg, Regime regime, std::mt19937_64& rng) {
  const double Lx = cfg.usable_width(), Ly = cfg.usable_height();
  double amin = cfg.min_aspect, amax = cfg.max_aspect, min_area = cfg.min_area;
  if (regime == Regime::kElongated) amin = std::max(amin, kElongatedAspect);
  if (regime == Regime::kLarge) {
    min_area = std::max(min_area, kLargeSide * kLargeSide);
    amax = std::max(amin, std::min(amax, std::max(Lx, Ly) * std::max(Lx, Ly) / min_area));
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int attempt = 0; attempt < kDrawBudget; ++attempt) {
    const double r = std::exp(std::log(amin) + unit(rng) * (std::log(amax) - std::log(amin)));
    const bool landscape = unit(rng) < 0.5;
    const double along = landscape ? Lx : Ly, across = landscape ? Ly : Lx;
    const auto b = area_bounds(cfg, r, along, across, min_area);
    if (b.lo > b.hi) continue;
    const double side = std::sqrt(b.lo) + unit(rng) * (std::sqrt(b.hi) - std::sqrt(b.lo));
    const double long_side = side * std::sqrt(r), short_side = side / std::sqrt(r);
    const double w = landscape ? long_side : short_side;
    const double h = landscape ? short_side : long_side;
    const double x1 = unit(rng) * std::max(0.0, Lx - w);
    const double y1 = unit(rng) * std::max(0.0, Ly - h);
    BBox box{static_cast<float>(std::max(0.0, quantize(x1))),
             static_cast<float>(std::max(0.0, quantize(y1))),
             static_cast<float>(std::min(Lx, quantize(x1 + w))),
             static_cast<float>(std::min(Ly, quantize(y1 + h)))};
    if (box.width() >= cfg.min_side - 1.0 / kCoordQuantum &&
        box.height() >= cfg.min_side - 1.0 / kCoordQuantum)
      return box;
  }
  throw SynthError("could not draw a box within the configured ranges");
}

Cell corner_cell(float x, float y) {
  return {static_cast<std::size_t>(std::floor(double(y) / kStride)),
          static_cast<std::size_t>(std::floor(double(x) / kStride))};
}

bool cells_apart(Cell a, Cell b) {
  const auto d = [](std::size_t u, std::size_t v) { return u > v ? u - v : v - u; };
  return std::max(d(a.row, b.row), d(a.col, b.col)) >= 2;
}

// Same-kind corners of distinct boxes must sit at Chebyshev distance >= 2 on
// the grid, which keeps peaks and offsets separate.
bool corners_clear(const BBox& box, std::span<const GroundTruth> placed) {
  for (const auto& g : placed) {
    if (!cells_apart(corner_cell(box.x1, box.y1), corner_cell(g.box.x1, g.box.y1))) return false;
    if (!cells_apart(corner_cell(box.x2, box.y2), corner_cell(g.box.x2, g.box.y2))) return false;
  }
  return true;
}

Scene crossed_scene(const SynthConfig& cfg, std::mt19937_64& rng, Scene s) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + unit(rng) * (b - a); };
  const double Lx = cfg.usable_width(), Ly = cfg.usable_height();
  const double wa = uniform(96, 200), ha = uniform(96, 200);
  const double wb = wa * uniform(0.8, 1.2), hb = ha * uniform(0.8, 1.2);
  const double dx = uniform(0.35, 0.65) * std::min(wa, wb);
  const double dy = uniform(0.35, 0.65) * std::min(ha, hb);
  const double span_x = std::max(wa, dx + wb), span_y = std::max(ha, dy + hb);
  const double x = uniform(0, Lx - span_x), y = uniform(0, Ly - span_y);
  const int cls = std::uniform_int_distribution<int>(0, int(cfg.num_classes) - 1)(rng);
  const BBox a{float(quantize(x)), float(quantize(y)), float(quantize(x + wa)),
               float(quantize(y + ha))};
  const BBox b{float(quantize(x + dx)), float(quantize(y + dy)), float(quantize(x + dx + wb)),
               float(quantize(y + dy + hb))};
  s.gts = {{a, cls}, {b, cls}};
  for (int k = 0; k < 2; ++k)
    s.strengths.push_back(static_cast<float>(uniform(cfg.min_strength, cfg.max_strength)));
  return s;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("synth config: " + msg);
}

}  // namespace

std::size_t SynthConfig::grid_height() const { return grid_extent(image_height); }
std::size_t SynthConfig::grid_width() const { return grid_extent(image_width); }
double SynthConfig::usable_height() const {
  return std::min(image_height, double(kStride) * double(grid_height() - 1));
}
double SynthConfig::usable_width() const {
  return std::min(image_width, double(kStride) * double(grid_width() - 1));
}

void SynthConfig::validate() const {
  require(image_height >= 2 * kStride && image_width >= 2 * kStride,
          "image must span at least two grid cells per side");
  require(num_classes >= 1 && num_classes <= kCategoryFeatureChannels,
          "num_classes must lie in [1, 256]");
  require(min_boxes <= max_boxes, "min_boxes exceeds max_boxes");
  require(max_boxes <= kMaxSceneBoxes, "max_boxes exceeds 16");
  require(min_aspect >= 1.0 && min_aspect <= max_aspect, "aspect range must satisfy 1 <= min <= max");
  require(min_area >= 0.0 && min_area <= max_area, "area range is empty");
  require(min_side > 0.0, "min_side must be positive");
  require(elongated_fraction >= 0.0 && large_fraction >= 0.0 &&
              elongated_fraction + large_fraction <= 1.0,
          "regime fractions must be non-negative and sum to at most 1");
  require(noise_amplitude >= 0.0 && noise_amplitude < 1.0, "noise_amplitude must lie in [0,1)");
  require(min_strength > 0.0 && min_strength <= max_strength && max_strength <= 1.0,
          "strength range must satisfy 0 < min <= max <= 1");
  require(binary_gain > 0.0 && class_gain > 0.0, "gains must be positive");
  require(verify_top_k >= 1, "verify_top_k must be >= 1");
  require(max_attempts >= 1, "max_attempts must be >= 1");
  if (layout == SceneLayout::kCrossed)
    require(usable_width() >= 400.0 && usable_height() >= 400.0,
            "crossed layout needs at least 400 usable pixels per side");
  else if (max_boxes > 0)
    require(regime_feasible(*this, Regime::kGeneral),
            "no box in the aspect / area ranges fits the image");
}

SynthConfig parse_synth_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("synth config is not valid JSON: ") + e.what(),
                      static_cast<std::int64_t>(e.byte));
  }
  if (!j.is_object()) throw FormatError("synth config must be a JSON object");
  SynthConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "image_height") c.image_height = v.get<double>();
      else if (k == "image_width") c.image_width = v.get<double>();
      else if (k == "num_classes") c.num_classes = v.get<std::size_t>();
      else if (k == "min_boxes") c.min_boxes = v.get<std::size_t>();
      else if (k == "max_boxes") c.max_boxes = v.get<std::size_t>();
      else if (k == "min_aspect") c.min_aspect = v.get<double>();
      else if (k == "max_aspect") c.max_aspect = v.get<double>();
      else if (k == "min_area") c.min_area = v.get<double>();
      else if (k == "max_area")
        c.max_area = v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
      else if (k == "min_side") c.min_side = v.get<double>();
      else if (k == "elongated_fraction") c.elongated_fraction = v.get<double>();
      else if (k == "large_fraction") c.large_fraction = v.get<double>();
      else if (k == "layout") {
        const auto s = v.get<std::string>();
        if (s == "random") c.layout = SceneLayout::kRandom;
        else if (s == "crossed") c.layout = SceneLayout::kCrossed;
        else throw FormatError("layout must be \"random\" or \"crossed\"");
      } else if (k == "noise_amplitude") c.noise_amplitude = v.get<double>();
      else if (k == "min_strength") c.min_strength = v.get<double>();
      else if (k == "max_strength") c.max_strength = v.get<double>();
      else if (k == "binary_gain") c.binary_gain = v.get<double>();
      else if (k == "class_gain") c.class_gain = v.get<double>();
      else if (k == "class_bias") c.class_bias = v.get<double>();
      else if (k == "verify_top_k") c.verify_top_k = v.get<std::size_t>();
      else if (k == "max_attempts") c.max_attempts = v.get<std::size_t>();
      else throw FormatError("unknown synth config key \"" + k + "\"");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("synth config field has the wrong type: ") + e.what());
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return c;
}

namespace {

ordered_json synth_config_json(const SynthConfig& c) {
  ordered_json j;
  j["image_height"] = c.image_height;
  j["image_width"] = c.image_width;
  j["num_classes"] = c.num_classes;
  j["min_boxes"] = c.min_boxes;
  j["max_boxes"] = c.max_boxes;
  j["min_aspect"] = c.min_aspect;
  j["max_aspect"] = c.max_aspect;
  j["min_area"] = c.min_area;
  j["max_area"] = std::isinf(c.max_area) ? ordered_json(nullptr) : ordered_json(c.max_area);
  j["min_side"] = c.min_side;
  j["elongated_fraction"] = c.elongated_fraction;
  j["large_fraction"] = c.large_fraction;
  j["layout"] = c.layout == SceneLayout::kCrossed ? "crossed" : "random";
  j["noise_amplitude"] = c.noise_amplitude;
  j["min_strength"] = c.min_strength;
  j["max_strength"] = c.max_strength;
  j["binary_gain"] = c.binary_gain;
  j["class_gain"] = c.class_gain;
  j["class_bias"] = c.class_bias;
  j["verify_top_k"] = c.verify_top_k;
  j["max_attempts"] = c.max_attempts;
  return j;
}

}  // namespace

std::string synth_config_to_json(const SynthConfig& cfg) { return synth_config_json(cfg).dump(2); }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

BBox sample_box(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  return draw_box(cfg, Regime::kGeneral, rng);
}

Scene generate_scene(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Scene s{cfg.image_height, cfg.image_width, cfg.num_classes, {}, {}, seed};
  if (cfg.layout == SceneLayout::kCrossed) return crossed_scene(cfg, rng, std::move(s));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count(cfg.min_boxes, cfg.max_boxes);
  std::uniform_int_distribution<int> cls(0, int(cfg.num_classes) - 1);
  const std::size_t n = count(rng);

  Regime first = Regime::kGeneral;
  const double u = unit(rng);
  if (u < cfg.elongated_fraction && regime_feasible(cfg, Regime::kElongated))
    first = Regime::kElongated;
  else if (u >= cfg.elongated_fraction && u < cfg.elongated_fraction + cfg.large_fraction &&
           regime_feasible(cfg, Regime::kLarge))
    first = Regime::kLarge;

  for (std::size_t k = 0; k < n; ++k) {
    const Regime regime = k == 0 ? first : Regime::kGeneral;
    bool placed = false;
    for (int attempt = 0; attempt < kDrawBudget && !placed; ++attempt) {
      const BBox box = draw_box(cfg, regime, rng);
      if (!corners_clear(box, s.gts)) continue;
      s.gts.push_back({box, cls(rng)});
      s.strengths.push_back(
          static_cast<float>(cfg.min_strength + unit(rng) * (cfg.max_strength - cfg.min_strength)));
      placed = true;
    }
    if (!placed) throw SynthError("could not place a box with separated corners");
  }
  return s;
}

HeadWeights planted_weights(const SynthConfig& cfg, std::size_t num_classes) {
  HeadWeights w = HeadWeights::prior(num_classes);
  const auto G = static_cast<float>(cfg.binary_gain);
  auto kernel = [&](std::size_t ch, std::size_t by, std::size_t bx) -> float& {
    return w.binary_kernel[(ch * kPoolSize + by) * kPoolSize + bx];
  };
  for (std::size_t k = 0; k < kMaxSceneBoxes; ++k) {
    kernel(2 * k, 0, kPoolSize - 1) = G;
    kernel(2 * k + 1, kPoolSize - 1, 0) = G;
  }
  w.binary_bias = -1.5f * G;

  const float per_cell = static_cast<float>(cfg.class_gain / double(kPoolSize * kPoolSize));
  const std::size_t plane = kPoolSize * kPoolSize;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto dst = w.class_kernel.data().subspan((c * kCategoryFeatureChannels + c) * plane, plane);
    std::fill(dst.begin(), dst.end(), per_cell);
    w.class_bias[c] = static_cast<float>(cfg.class_bias);
  }
  return w;
}

namespace {

// Marks, in channel `ch`, the grid taps of the four RoIAlign samples of bin
// (by, bx) of `box`. Sample positions follow roi_align exactly.
void paint_bin_marker(Tensor& feat, std::size_t ch, const BBox& box, std::size_t by,
                      std::size_t bx) {
  const auto H = static_cast<std::ptrdiff_t>(feat.dim(1));
  const auto W = static_cast<std::ptrdiff_t>(feat.dim(2));
  const double x1 = double(box.x1) / kStride, y1 = double(box.y1) / kStride;
  const double bin_w = (double(box.x2) / kStride - x1) / double(kPoolSize);
  const double bin_h = (double(box.y2) / kStride - y1) / double(kPoolSize);
  for (int sy = 0; sy < 2; ++sy) {
    for (int sx = 0; sx < 2; ++sx) {
      const double y = y1 + double(by) * bin_h + (sy + 0.5) * bin_h / 2.0;
      const double x = x1 + double(bx) * bin_w + (sx + 0.5) * bin_w / 2.0;
      const auto y0 = static_cast<std::ptrdiff_t>(std::floor(y));
      const auto x0 = static_cast<std::ptrdiff_t>(std::floor(x));
      for (std::ptrdiff_t i = y0; i <= y0 + 1; ++i)
        for (std::ptrdiff_t j = x0; j <= x0 + 1; ++j)
          if (i >= 0 && j >= 0 && i < H && j < W)
            feat.at(ch, std::size_t(i), std::size_t(j)) = 1.0f;
    }
  }
}

void paint_category(Tensor& feat, std::size_t ch, const BBox& box, float strength) {
  const auto H = static_cast<std::ptrdiff_t>(feat.dim(1));
  const auto W = static_cast<std::ptrdiff_t>(feat.dim(2));
  const auto i0 = std::max<std::ptrdiff_t>(0, std::ptrdiff_t(std::ceil(double(box.y1) / kStride)));
  const auto i1 = std::min<std::ptrdiff_t>(H - 1, std::ptrdiff_t(std::floor(double(box.y2) / kStride)));
  const auto j0 = std::max<std::ptrdiff_t>(0, std::ptrdiff_t(std::ceil(double(box.x1) / kStride)));
  const auto j1 = std::min<std::ptrdiff_t>(W - 1, std::ptrdiff_t(std::floor(double(box.x2) / kStride)));
  for (std::ptrdiff_t i = i0; i <= i1; ++i)
    for (std::ptrdiff_t j = j0; j <= j1; ++j) {
      float& v = feat.at(ch, std::size_t(i), std::size_t(j));
      v = std::max(v, strength);
    }
}

void add_background_noise(Tensor& heat, double amplitude, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (float& v : heat.data()) {
    const double u = unit(rng);  // drawn for every cell so the stream is layout-independent
    if (v == 0.0f) v = static_cast<float>(amplitude * u);
  }
}

void verify(const Scene& scene, const OracleBundle& b, std::size_t top_k) {
  const auto& hm = b.heatmaps;
  const std::size_t cells = hm.num_classes() * hm.height() * hm.width();
  const std::size_t K = std::min(top_k, cells);
  const auto tls = decode_corners(hm, CornerKind::kTopLeft, K);
  const auto brs = decode_corners(hm, CornerKind::kBottomRight, K);
  const auto proposals = enumerate_proposals(tls, brs);
  const auto p = score_objectness(proposals, b.features.box_feat, b.planted_head_weights);

  std::vector<bool> found(scene.gts.size(), false);
  for (std::size_t m = 0; m < proposals.size(); ++m) {
    const auto& prop = proposals[m];
    std::size_t k = 0;
    while (k < scene.gts.size() &&
           !(scene.gts[k].box == prop.box && scene.gts[k].class_id == prop.class_id))
      ++k;
    if (k == scene.gts.size()) {
      if (p[m] > 0.1f) throw OracleRejected("a false pairing scores above 0.1");
      continue;
    }
    if (p[m] < 0.9f) throw OracleRejected("a true pairing scores below 0.9");
    const auto q = class_head(roi_align(b.features.cat_feat, prop.box), b.planted_head_weights);
    const auto best = std::max_element(q.begin(), q.end()) - q.begin();
    if (best != scene.gts[k].class_id) throw OracleRejected("class head argmax is not the true class");
    found[k] = true;
  }
  if (std::find(found.begin(), found.end(), false) != found.end())
    throw OracleRejected("a ground-truth box is not among the enumerated proposals");
}

}  // namespace

OracleBundle render_oracle(const Scene& scene, const SynthConfig& cfg) {
  if (scene.num_classes == 0 || scene.num_classes > kCategoryFeatureChannels)
    throw std::invalid_argument("scene class count must lie in [1, 256]");
  if (scene.gts.size() > kMaxSceneBoxes)
    throw std::invalid_argument("scene holds more than 16 boxes");
  if (scene.strengths.size() != scene.gts.size())
    throw std::invalid_argument("scene needs one strength per box");
  const std::size_t H = grid_extent(scene.image_height), W = grid_extent(scene.image_width);
  const double max_x = std::min(scene.image_width, double(kStride) * double(W - 1));
  const double max_y = std::min(scene.image_height, double(kStride) * double(H - 1));
  for (const auto& g : scene.gts) {
    if (!(g.box.x1 >= 0.0f && g.box.y1 >= 0.0f && g.box.x2 <= max_x && g.box.y2 <= max_y &&
          g.box.width() > 0.0 && g.box.height() > 0.0))
      throw std::invalid_argument("scene box outside the usable image area");
  }
  for (std::size_t k = 0; k < scene.gts.size(); ++k)
    if (!corners_clear(scene.gts[k].box, std::span(scene.gts).first(k)))
      throw OracleRejected("corner cells of two boxes are adjacent");

  HeatmapSet hm = gaussian_targets(scene.gts, scene.num_classes, H, W);
  if (cfg.noise_amplitude > 0.0) {
    std::mt19937_64 rng(derive_seed(scene.seed, 0x6e6f697365ULL));
    add_background_noise(hm.tl_heat, cfg.noise_amplitude, rng);
    add_background_noise(hm.br_heat, cfg.noise_amplitude, rng);
  }

  Tensor box_feat({kBoxFeatureChannels, H, W});
  Tensor cat_feat({kCategoryFeatureChannels, H, W});
  for (std::size_t k = 0; k < scene.gts.size(); ++k) {
    const auto& g = scene.gts[k];
    paint_bin_marker(box_feat, 2 * k, g.box, 0, kPoolSize - 1);
    paint_bin_marker(box_feat, 2 * k + 1, g.box, kPoolSize - 1, 0);
    paint_category(cat_feat, static_cast<std::size_t>(g.class_id), g.box, scene.strengths[k]);
  }

  OracleBundle bundle{std::move(hm), {std::move(box_feat), std::move(cat_feat)},
                      planted_weights(cfg, scene.num_classes)};
  verify(scene, bundle, cfg.verify_top_k);
  return bundle;
}

SampledScene sample_scene(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  for (std::size_t a = 0; a < cfg.max_attempts; ++a) {
    Scene scene = generate_scene(cfg, a == 0 ? seed : derive_seed(seed, a));
    try {
      OracleBundle bundle = render_oracle(scene, cfg);
      return {std::move(scene), std::move(bundle), a + 1};
    } catch (const OracleRejected&) {
    }
  }
  throw SynthError("resampling budget of " + std::to_string(cfg.max_attempts) +
                   " attempts exhausted for seed " + std::to_string(seed));
}

std::string scene_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", index);
  return buf;
}

GroundTruthSet scene_ground_truth(const Scene& scene, int image_id) {
  GroundTruthSet g;
  g.images.push_back({image_id, scene.image_width, scene.image_height});
  for (std::size_t k = 0; k < scene.gts.size(); ++k)
    g.annotations.push_back({static_cast<long long>(image_id) * 100 + static_cast<long long>(k) + 1,
                             image_id, scene.gts[k].class_id, scene.gts[k].box});
  for (std::size_t c = 0; c < scene.num_classes; ++c)
    g.categories.push_back({static_cast<int>(c), "class_" + std::to_string(c)});
  return g;
}

void write_scene(const std::filesystem::path& scene_dir, const Scene& scene, int image_id,
                 const OracleBundle& bundle) {
  std::error_code ec;
  std::filesystem::create_directories(scene_dir / kWeightsDir, ec);
  if (ec) throw IoError("cannot create scene directory", scene_dir.string());
  const auto& hm = bundle.heatmaps;
  tensor_store(hm.tl_heat, scene_dir / "tl_heat.cpnt");
  tensor_store(hm.br_heat, scene_dir / "br_heat.cpnt");
  tensor_store(hm.tl_off, scene_dir / "tl_off.cpnt");
  tensor_store(hm.br_off, scene_dir / "br_off.cpnt");
  tensor_store(bundle.features.box_feat, scene_dir / "box_feat.cpnt");
  tensor_store(bundle.features.cat_feat, scene_dir / "cat_feat.cpnt");
  store_head_weights(bundle.planted_head_weights, scene_dir / kWeightsDir);
  write_text_file(scene_dir / kSceneGtFile, ground_truth_to_json(scene_ground_truth(scene, image_id)));
}

SceneInputs load_scene(const std::filesystem::path& scene_dir) {
  HeatmapSet hm(tensor_load(scene_dir / "tl_heat.cpnt"), tensor_load(scene_dir / "br_heat.cpnt"),
                tensor_load(scene_dir / "tl_off.cpnt"), tensor_load(scene_dir / "br_off.cpnt"));
  FeatureMaps f{tensor_load(scene_dir / "box_feat.cpnt"), tensor_load(scene_dir / "cat_feat.cpnt")};
  return {std::move(hm), std::move(f), load_head_weights(scene_dir / kWeightsDir)};
}

CorpusManifest write_corpus(const std::filesystem::path& dir, const SynthConfig& cfg,
                            std::size_t count, std::uint64_t seed, std::size_t workers) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory", dir.string());
  std::filesystem::remove(dir / kManifestFile, ec);

  CorpusManifest manifest{seed, cfg.num_classes, std::vector<CorpusEntry>(count)};
  std::vector<Scene> scenes(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        const std::uint64_t s = derive_seed(seed, i);
        SampledScene ss = sample_scene(cfg, s);
        const int image_id = static_cast<int>(i) + 1;
        write_scene(dir / scene_dir_name(i), ss.scene, image_id, ss.bundle);
        manifest.scenes[i] = {scene_dir_name(i), image_id, s, ss.attempts};
        scenes[i] = std::move(ss.scene);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  GroundTruthSet all;
  for (std::size_t c = 0; c < cfg.num_classes; ++c)
    all.categories.push_back({static_cast<int>(c), "class_" + std::to_string(c)});
  for (std::size_t i = 0; i < count; ++i) {
    const auto g = scene_ground_truth(scenes[i], manifest.scenes[i].image_id);
    all.images.insert(all.images.end(), g.images.begin(), g.images.end());
    all.annotations.insert(all.annotations.end(), g.annotations.begin(), g.annotations.end());
  }
  write_text_file(dir / kGroundTruthFile, ground_truth_to_json(all));

  ordered_json m;
  m["format"] = "cpn-synth-corpus";
  m["version"] = 1;
  m["seed"] = seed;
  m["num_classes"] = cfg.num_classes;
  m["config"] = synth_config_json(cfg);
  m["scenes"] = json::array();
  for (const auto& e : manifest.scenes)
    m["scenes"].push_back(ordered_json{
        {"name", e.name}, {"image_id", e.image_id}, {"seed", e.seed}, {"attempts", e.attempts}});
  write_text_file(dir / kManifestFile, m.dump(2) + "\n");
  return manifest;
}

CorpusManifest read_manifest(const std::filesystem::path& dir) {
  const std::string text = read_text_file(dir / kManifestFile);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError((dir / kManifestFile).string() + ": not valid JSON: " + e.what(),
                      static_cast<std::int64_t>(e.byte));
  }
  try {
    CorpusManifest m;
    m.seed = j.value("seed", std::uint64_t{0});
    m.num_classes = j.value("num_classes", std::size_t{0});
    for (const auto& s : j.at("scenes")) {
      CorpusEntry e;
      e.name = s.at("name").get<std::string>();
      e.image_id = s.at("image_id").get<int>();
      e.seed = s.value("seed", std::uint64_t{0});
      e.attempts = s.value("attempts", std::size_t{0});
      if (e.name.empty() || e.name.find('/') != std::string::npos || e.name == "..")
        throw FormatError("scene name must be a plain directory name");
      m.scenes.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError((dir / kManifestFile).string() + ": " + e.what());
  }
}

}  // namespace cpn
