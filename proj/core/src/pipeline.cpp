#include "cpn/pipeline.hpp"

#include <nlohmann/json.hpp>

namespace cpn {

using nlohmann::json;

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (top_k_corners == 0) fail("top_k_corners must be >= 1");
  if (!(objectness_threshold >= 0.0f && objectness_threshold < 1.0f))
    fail("objectness_threshold must lie in [0,1)");
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) fail("iou_threshold must lie in (0,1)");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) fail("alpha and beta must be non-negative");
  if (!(soft_nms_sigma > 0.0)) fail("soft_nms_sigma must be positive");
  if (!(soft_nms_prune >= 0.0 && soft_nms_prune < 1.0)) fail("soft_nms_prune must lie in [0,1)");
  if (stride <= 0) fail("stride must be positive");
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what(),
                      static_cast<std::int64_t>(e.byte));
  }
  if (!j.is_object()) throw FormatError("config must be a JSON object");

  PipelineConfig cfg;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "K") cfg.top_k_corners = v.get<std::size_t>();
      else if (k == "objectness_threshold") cfg.objectness_threshold = v.get<float>();
      else if (k == "iou_threshold") cfg.iou_threshold = v.get<double>();
      else if (k == "alpha") cfg.alpha = v.get<double>();
      else if (k == "beta") cfg.beta = v.get<double>();
      else if (k == "soft_nms_sigma") cfg.soft_nms_sigma = v.get<double>();
      else if (k == "soft_nms_prune") cfg.soft_nms_prune = v.get<double>();
      else if (k == "top_k") cfg.max_detections = v.get<std::size_t>();
      else if (k == "num_classes") cfg.num_classes = v.get<std::size_t>();
      else if (k == "stride") cfg.stride = v.get<int>();
      else throw FormatError("unknown config key \"" + k + "\"");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("config field has the wrong type: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return cfg;
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  json j = {{"K", cfg.top_k_corners},
            {"objectness_threshold", cfg.objectness_threshold},
            {"iou_threshold", cfg.iou_threshold},
            {"alpha", cfg.alpha},
            {"beta", cfg.beta},
            {"soft_nms_sigma", cfg.soft_nms_sigma},
            {"soft_nms_prune", cfg.soft_nms_prune},
            {"top_k", cfg.max_detections},
            {"num_classes", cfg.num_classes},
            {"stride", cfg.stride}};
  return j.dump(2);
}

std::vector<float> score_objectness(std::span<const Proposal> proposals, const Tensor& box_feat,
                                    const HeadWeights& weights, int stride) {
  std::vector<float> p(proposals.size());
  for (std::size_t m = 0; m < proposals.size(); ++m)
    p[m] = binary_head(roi_align(box_feat, proposals[m].box, stride), weights);
  return p;
}

DetectResult detect(const HeatmapSet& heatmaps, const FeatureMaps& features,
                    const HeadWeights& weights, const PipelineConfig& cfg,
                    const DetectOptions& opts) {
  cfg.validate();
  weights.validate();
  const std::size_t C = cfg.num_classes == 0 ? heatmaps.num_classes() : cfg.num_classes;
  if (heatmaps.num_classes() != C || weights.num_classes() != C)
    throw std::invalid_argument("heatmap / head class counts do not match config num_classes");
  const Shape spatial{heatmaps.height(), heatmaps.width()};
  for (const Tensor* f : {&features.box_feat, &features.cat_feat}) {
    if (f->rank() != 3 || Shape{f->dim(1), f->dim(2)} != spatial)
      throw std::invalid_argument("feature maps must share the heatmap spatial extents");
  }
  if (features.box_feat.dim(0) != kBoxFeatureChannels ||
      features.cat_feat.dim(0) != kCategoryFeatureChannels)
    throw std::invalid_argument("feature maps must have 32 box and 256 category channels");

  const auto tls = decode_corners(heatmaps, CornerKind::kTopLeft, cfg.top_k_corners, cfg.stride);
  const auto brs = decode_corners(heatmaps, CornerKind::kBottomRight, cfg.top_k_corners, cfg.stride);
  const auto proposals = enumerate_proposals(tls, brs);

  DetectResult result;
  result.stats.proposals = proposals.size();

  std::vector<std::size_t> survivors;
  if (opts.bypass_objectness) {
    survivors.resize(proposals.size());
    for (std::size_t m = 0; m < survivors.size(); ++m) survivors[m] = m;
  } else {
    const auto p = score_objectness(proposals, features.box_feat, weights, cfg.stride);
    survivors = filter_by_objectness(p, cfg.objectness_threshold);
  }
  result.stats.survivors = survivors.size();

  std::vector<Detection> candidates;
  for (std::size_t m : survivors) {
    const auto q = class_head(roi_align(features.cat_feat, proposals[m].box, cfg.stride), weights);
    for (auto& d : assign_labels(proposals[m], q)) candidates.push_back(d);
  }
  result.stats.before_nms = candidates.size();

  const auto kept = soft_nms(candidates, cfg.soft_nms_sigma, cfg.soft_nms_prune);
  result.detections = top_k_truncate(kept, cfg.max_detections);
  return result;
}

}  // namespace cpn
