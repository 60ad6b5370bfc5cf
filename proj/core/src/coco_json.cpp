#include "cpn/coco_json.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cpn {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json parse_document(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string(what) + " is not valid JSON: " + e.what(),
                      static_cast<std::int64_t>(e.byte));
  }
}

BBox xywh_to_box(const json& b) {
  if (!b.is_array() || b.size() != 4) throw FormatError("bbox must be [x, y, width, height]");
  const double x = b[0].get<double>(), y = b[1].get<double>();
  const double w = b[2].get<double>(), h = b[3].get<double>();
  if (!(w >= 0.0) || !(h >= 0.0)) throw FormatError("bbox width/height must be non-negative");
  return {static_cast<float>(x), static_cast<float>(y), static_cast<float>(x + w),
          static_cast<float>(y + h)};
}

ordered_json box_to_xywh(const BBox& b) {
  return ordered_json::array({double(b.x1), double(b.y1), b.width(), b.height()});
}

template <typename Fn>
auto with_schema_errors(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

ordered_json metric_json(const Metric& m) { return m.defined ? ordered_json(m.value) : ordered_json(nullptr); }

}  // namespace

std::vector<ImageDetection> parse_detections(const std::string& text) {
  const json j = parse_document(text, "detection dump");
  if (!j.is_array()) throw FormatError("detection dump must be a JSON array");
  return with_schema_errors("detection dump", [&] {
    std::vector<ImageDetection> out;
    out.reserve(j.size());
    for (const auto& r : j) {
      ImageDetection d;
      d.image_id = r.at("image_id").get<int>();
      d.category_id = r.at("category_id").get<int>();
      d.box = xywh_to_box(r.at("bbox"));
      d.score = static_cast<float>(r.at("score").get<double>());
      out.push_back(d);
    }
    return out;
  });
}

std::string detections_to_json(std::span<const ImageDetection> dets) {
  ordered_json j = ordered_json::array();
  for (const auto& d : dets) {
    ordered_json r;
    r["image_id"] = d.image_id;
    r["category_id"] = d.category_id;
    r["bbox"] = box_to_xywh(d.box);
    r["score"] = double(d.score);
    j.push_back(r);
  }
  return j.dump(1) + "\n";
}

std::vector<ImageDetection> to_image_detections(int image_id, std::span<const Detection> dets) {
  std::vector<ImageDetection> out;
  out.reserve(dets.size());
  for (const auto& d : dets) out.push_back({image_id, d.class_id, d.box, d.score});
  return out;
}

GroundTruthSet parse_ground_truth(const std::string& text) {
  const json j = parse_document(text, "ground truth");
  if (!j.is_object()) throw FormatError("ground truth must be a JSON object");
  return with_schema_errors("ground truth", [&] {
    GroundTruthSet g;
    for (const auto& im : j.at("images"))
      g.images.push_back({im.at("id").get<int>(), im.value("width", 0.0), im.value("height", 0.0)});
    for (const auto& a : j.at("annotations"))
      g.annotations.push_back({a.at("id").get<long long>(), a.at("image_id").get<int>(),
                               a.at("category_id").get<int>(), xywh_to_box(a.at("bbox"))});
    if (j.contains("categories"))
      for (const auto& c : j.at("categories"))
        g.categories.push_back({c.at("id").get<int>(), c.value("name", std::string{})});
    return g;
  });
}

std::string ground_truth_to_json(const GroundTruthSet& gts) {
  ordered_json j;
  j["images"] = ordered_json::array();
  for (const auto& im : gts.images)
    j["images"].push_back(ordered_json{{"id", im.id}, {"width", im.width}, {"height", im.height}});
  j["annotations"] = ordered_json::array();
  for (const auto& a : gts.annotations)
    j["annotations"].push_back(ordered_json{{"id", a.id},
                                            {"image_id", a.image_id},
                                            {"category_id", a.category_id},
                                            {"bbox", box_to_xywh(a.box)}});
  j["categories"] = ordered_json::array();
  for (const auto& c : gts.categories)
    j["categories"].push_back(ordered_json{{"id", c.id}, {"name", c.name}});
  return j.dump(1) + "\n";
}

std::string report_to_json(const EvalReport& r) {
  ordered_json j;
  j["ap"] = metric_json(r.ap);
  j["ap50"] = metric_json(r.ap50);
  j["ap75"] = metric_json(r.ap75);
  j["ap_small"] = metric_json(r.ap_small);
  j["ap_medium"] = metric_json(r.ap_medium);
  j["ap_large"] = metric_json(r.ap_large);
  j["ar_100"] = metric_json(r.ar_100);
  j["ar_1000"] = metric_json(r.ar_1000);
  j["ar_area_buckets"] = ordered_json::array();
  for (const auto& m : r.ar_area_buckets) j["ar_area_buckets"].push_back(metric_json(m));
  j["ar_aspect_buckets"] = ordered_json::array();
  for (const auto& m : r.ar_aspect_buckets) j["ar_aspect_buckets"].push_back(metric_json(m));
  j["af"] = metric_json(r.af);
  j["af5"] = metric_json(r.af5);
  j["af25"] = metric_json(r.af25);
  j["af50"] = metric_json(r.af50);
  j["af_small"] = metric_json(r.af_small);
  j["af_medium"] = metric_json(r.af_medium);
  j["af_large"] = metric_json(r.af_large);
  j["ap_per_iou"] = ordered_json::array();
  for (const auto& m : r.ap_per_iou) j["ap_per_iou"].push_back(metric_json(m));
  j["low_iou_ap"] = ordered_json::array();
  for (const auto& m : r.low_iou_ap) j["low_iou_ap"].push_back(metric_json(m));
  j["undefined"] = r.undefined;
  return j.dump(2) + "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure", path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing", tmp.string());
    out << text;
    if (!out) throw IoError("write failure", tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into place", path.string());
}

}  // namespace cpn
