#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cpn/corner_decode.hpp"
#include "cpn/losses.hpp"
#include "cpn/postprocess.hpp"
#include "cpn/proposals.hpp"

namespace cpn {

/// Operating constants of the detector. Defaults are the standard operating point.
struct PipelineConfig {
  std::size_t top_k_corners = kDefaultTopK;  // K
  float objectness_threshold = kObjectnessThreshold;
  double iou_threshold = kIouThreshold;  // tau, used by the losses
  double alpha = kFocalAlpha;
  double beta = kFocalBeta;
  double soft_nms_sigma = kSoftNmsSigma;
  double soft_nms_prune = kSoftNmsPrune;
  std::size_t max_detections = kMaxDetections;
  std::size_t num_classes = 0;  // C; 0 means take it from the inputs
  int stride = kStride;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

/// Parses a JSON config; every field optional, unknown keys rejected
/// (FormatError).
PipelineConfig parse_pipeline_config(const std::string& json_text);
std::string pipeline_config_to_json(const PipelineConfig& cfg);

struct DetectOptions {
  /// Skip the objectness filter so every enumerated pair reaches the class head.
  bool bypass_objectness = false;
};

/// Intermediate counts of one run, for reporting.
struct DetectStats {
  std::size_t proposals = 0;
  std::size_t survivors = 0;
  std::size_t before_nms = 0;
};

struct DetectResult {
  std::vector<Detection> detections;
  DetectStats stats;
};

/// Full inference on one image: decode -> enumerate -> RoIAlign + binary head
/// -> filter -> RoIAlign + class head -> label assignment -> soft-NMS -> top-k.
DetectResult detect(const HeatmapSet& heatmaps, const FeatureMaps& features,
                    const HeadWeights& weights, const PipelineConfig& cfg,
                    const DetectOptions& opts = {});

/// Binary-head scores for a list of proposals (enumeration order).
std::vector<float> score_objectness(std::span<const Proposal> proposals, const Tensor& box_feat,
                                    const HeadWeights& weights, int stride = kStride);

}  // namespace cpn
