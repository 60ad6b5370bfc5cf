#pragma once

// Synthetic scenes and the idealised pipeline inputs that go with them.
//
// Heatmaps are the Gaussian training targets of the scene plus optional
// uniform noise on empty cells. Feature maps carry per-box indicator
// patterns that the planted head weights read out:
//   box_feat  channel 2k   marks the sample taps of bin (0,6) of box k,
//             channel 2k+1 marks the sample taps of bin (6,0);
//   cat_feat  channel c holds the box strength on grid points inside
//             class-c boxes.
// The binary kernel weighs bin (0,6) of the even channels and bin (6,0) of
// the odd ones, so only a pair whose two far corners both land on markers
// scores high.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpn/corner_decode.hpp"
#include "cpn/eval.hpp"
#include "cpn/proposals.hpp"

namespace cpn {

/// Upper bound on boxes per scene: each box owns two of the 32 box channels.
inline constexpr std::size_t kMaxSceneBoxes = kBoxFeatureChannels / 2;

enum class SceneLayout { kRandom, kCrossed };

struct SynthConfig {
  double image_height = 511;
  double image_width = 511;
  std::size_t num_classes = 2;
  std::size_t min_boxes = 1;
  std::size_t max_boxes = 6;
  double min_aspect = 1.0;  // long side / short side
  double max_aspect = 8.0;
  double min_area = 16.0 * 16.0;
  double max_area = std::numeric_limits<double>::infinity();
  double min_side = 8.0;
  /// Probability that a scene's first box is forced into the elongated
  /// regime (aspect >= 5) or the large regime (area > 400^2).
  double elongated_fraction = 0.2;
  double large_fraction = 0.2;
  SceneLayout layout = SceneLayout::kRandom;

  double noise_amplitude = 0.05;
  double min_strength = 0.6;
  double max_strength = 1.0;
  double binary_gain = 10.0;
  double class_gain = 8.0;
  double class_bias = -3.0;
  std::size_t verify_top_k = kDefaultTopK;
  std::size_t max_attempts = 64;

  std::size_t grid_height() const;
  std::size_t grid_width() const;
  /// Boxes are kept inside [0, 4 (grid - 1)] so every RoIAlign sample of a
  /// true box has all four taps on the grid.
  double usable_height() const;
  double usable_width() const;

  /// Throws std::invalid_argument on empty or infeasible ranges.
  void validate() const;
};

/// Every field optional; unknown keys are a FormatError.
SynthConfig parse_synth_config(const std::string& json_text);
std::string synth_config_to_json(const SynthConfig& cfg);

struct Scene {
  double image_height = 0;
  double image_width = 0;
  std::size_t num_classes = 0;
  std::vector<GroundTruth> gts;
  std::vector<float> strengths;  // per box, drives the category features
  std::uint64_t seed = 0;
};

struct OracleBundle {
  HeatmapSet heatmaps;
  FeatureMaps features;
  HeadWeights planted_head_weights;
};

/// Rendering rejected the scene (adjacent corners or a planted score out of
/// its band). The caller resamples.
class OracleRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Resampling budget exhausted.
class SynthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SplitMix64 step of (base, index); used for per-scene and per-attempt seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

Scene generate_scene(const SynthConfig& cfg, std::uint64_t seed);

/// Aspect ratio, area and placement of one box, drawn the way generate_scene
/// draws a box of the general regime. Exposed for distribution tests.
BBox sample_box(const SynthConfig& cfg, std::uint64_t seed);

/// Renders and verifies the scene: at top-K = cfg.verify_top_k every true
/// pair must score >= 0.9 on the binary head, every other pair <= 0.1, and
/// the class head argmax on each true box must be its class.
OracleBundle render_oracle(const Scene& scene, const SynthConfig& cfg);

/// The planted weights alone; they depend only on the gains and C.
HeadWeights planted_weights(const SynthConfig& cfg, std::size_t num_classes);

struct SampledScene {
  Scene scene;
  OracleBundle bundle;
  std::size_t attempts = 0;
};

/// generate_scene + render_oracle, retrying with derived seeds on rejection.
SampledScene sample_scene(const SynthConfig& cfg, std::uint64_t seed);

// Corpus on disk:
//   <dir>/manifest.json         written last
//   <dir>/ground_truth.json     all scenes
//   <dir>/scene_NNNN/{tl_heat,br_heat,tl_off,br_off,box_feat,cat_feat}.cpnt
//   <dir>/scene_NNNN/weights/   head-weight bundle
//   <dir>/scene_NNNN/gt.json    this scene only
struct CorpusEntry {
  std::string name;
  int image_id = 0;
  std::uint64_t seed = 0;
  std::size_t attempts = 0;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  std::size_t num_classes = 0;
  std::vector<CorpusEntry> scenes;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kGroundTruthFile = "ground_truth.json";
inline constexpr const char* kSceneGtFile = "gt.json";
inline constexpr const char* kWeightsDir = "weights";

std::string scene_dir_name(std::size_t index);

/// Generates `count` scenes from `seed`; scene i uses derive_seed(seed, i).
/// Output bytes do not depend on `workers`.
CorpusManifest write_corpus(const std::filesystem::path& dir, const SynthConfig& cfg,
                            std::size_t count, std::uint64_t seed, std::size_t workers = 1);

void write_scene(const std::filesystem::path& scene_dir, const Scene& scene, int image_id,
                 const OracleBundle& bundle);

CorpusManifest read_manifest(const std::filesystem::path& dir);

struct SceneInputs {
  HeatmapSet heatmaps;
  FeatureMaps features;
  HeadWeights weights;
};

SceneInputs load_scene(const std::filesystem::path& scene_dir);

/// Ground truth of a scene in evaluator form (category id = class id).
GroundTruthSet scene_ground_truth(const Scene& scene, int image_id);

}  // namespace cpn
