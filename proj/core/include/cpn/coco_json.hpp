#pragma once

// JSON interchange: the detection dump, the ground-truth file and the
// evaluation report. Boxes travel as [x, y, width, height].

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cpn/eval.hpp"
#include "cpn/postprocess.hpp"

namespace cpn {

std::vector<ImageDetection> parse_detections(const std::string& text);
std::string detections_to_json(std::span<const ImageDetection> dets);

/// Tags pipeline detections with their image id for the dump.
std::vector<ImageDetection> to_image_detections(int image_id, std::span<const Detection> dets);

GroundTruthSet parse_ground_truth(const std::string& text);
std::string ground_truth_to_json(const GroundTruthSet& gts);

std::string report_to_json(const EvalReport& report);

std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cpn
