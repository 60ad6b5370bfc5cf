#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "cpn/corner_decode.hpp"
#include "cpn/tensor.hpp"

namespace cpn {

inline constexpr std::size_t kPoolSize = 7;
inline constexpr std::size_t kBoxFeatureChannels = 32;
inline constexpr std::size_t kCategoryFeatureChannels = 256;
/// Prior probability 0.1 expressed as a logit.
inline constexpr float kPriorBias = -2.19f;

/// A valid same-class corner pair. `tl_index` / `br_index` refer into the
/// keypoint lists it was enumerated from.
struct Proposal {
  BBox box;
  int class_id = 0;
  float corner_score = 0;  // mean of the two corner scores
  std::size_t tl_index = 0;
  std::size_t br_index = 0;
  CornerKeypoint tl;
  CornerKeypoint br;
};

struct FeatureMaps {
  Tensor box_feat;  // [32,H,W]
  Tensor cat_feat;  // [256,H,W]
};

struct HeadWeights {
  Tensor binary_kernel;             // [1,32,7,7]
  float binary_bias = kPriorBias;
  Tensor class_kernel;              // [C,256,7,7]
  std::vector<float> class_bias;    // C

  std::size_t num_classes() const { return class_kernel.dim(0); }

  /// Zero kernels and prior biases; the untrained starting point.
  static HeadWeights prior(std::size_t num_classes);
  /// Gaussian kernels (std `scale`) with prior biases, deterministic in `seed`.
  static HeadWeights random(std::size_t num_classes, unsigned long long seed, float scale = 0.01f);

  void validate() const;
};

/// Pairs every top-left with every bottom-right keypoint of the same class
/// whose coordinates are strictly smaller. Output order is (tl, br) index.
std::vector<Proposal> enumerate_proposals(std::span<const CornerKeypoint> tls,
                                          std::span<const CornerKeypoint> brs);

/// Zero-padded bilinear read of channel `c` at feature coordinates (y, x):
/// grid values live on integer coordinates, everything outside reads 0.
float bilinear_zero_pad(const Tensor& feat, std::size_t c, double y, double x);

/// RoIAlign into [D,7,7]. The box is in image pixels and is divided by
/// `stride`; each bin averages a 2x2 grid of samples at its quarter points.
Tensor roi_align(const Tensor& feat, const BBox& box, int stride = kStride,
                 std::size_t out_size = kPoolSize);

/// sigmoid(<kernel, pooled> + bias) over a [32,7,7] pooled box feature.
float binary_head(const Tensor& pooled, const HeadWeights& w);

/// Per-class independent sigmoid scores over a [256,7,7] pooled category feature.
std::vector<float> class_head(const Tensor& pooled, const HeadWeights& w);

// Head-weights bundle: a directory of CPNT files with fixed names.
inline constexpr const char* kBinaryKernelFile = "binary_kernel.cpnt";
inline constexpr const char* kBinaryBiasFile = "binary_bias.cpnt";
inline constexpr const char* kClassKernelFile = "class_kernel.cpnt";
inline constexpr const char* kClassBiasFile = "class_bias.cpnt";

HeadWeights load_head_weights(const std::filesystem::path& dir);
void store_head_weights(const HeadWeights& w, const std::filesystem::path& dir);

}  // namespace cpn
