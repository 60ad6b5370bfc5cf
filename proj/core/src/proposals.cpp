#include "cpn/proposals.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "cpn/cpnt.hpp"

namespace cpn {

HeadWeights HeadWeights::prior(std::size_t num_classes) {
  if (num_classes == 0) throw std::invalid_argument("class count must be >= 1");
  HeadWeights w{Tensor({1, kBoxFeatureChannels, kPoolSize, kPoolSize}), kPriorBias,
                Tensor({num_classes, kCategoryFeatureChannels, kPoolSize, kPoolSize}),
                std::vector<float>(num_classes, kPriorBias)};
  return w;
}

HeadWeights HeadWeights::random(std::size_t num_classes, unsigned long long seed, float scale) {
  HeadWeights w = prior(num_classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, scale);
  for (float& v : w.binary_kernel.data()) v = normal(rng);
  for (float& v : w.class_kernel.data()) v = normal(rng);
  return w;
}

void HeadWeights::validate() const {
  if (binary_kernel.shape() != Shape{1, kBoxFeatureChannels, kPoolSize, kPoolSize})
    throw std::invalid_argument("binary kernel must be [1,32,7,7]");
  if (class_kernel.rank() != 4 || class_kernel.dim(1) != kCategoryFeatureChannels ||
      class_kernel.dim(2) != kPoolSize || class_kernel.dim(3) != kPoolSize)
    throw std::invalid_argument("class kernel must be [C,256,7,7]");
  if (class_bias.size() != class_kernel.dim(0))
    throw std::invalid_argument("class bias length must equal the class count");
}

std::vector<Proposal> enumerate_proposals(std::span<const CornerKeypoint> tls,
                                          std::span<const CornerKeypoint> brs) {
  std::vector<Proposal> out;
  for (std::size_t a = 0; a < tls.size(); ++a) {
    const auto& tl = tls[a];
    for (std::size_t b = 0; b < brs.size(); ++b) {
      const auto& br = brs[b];
      if (tl.class_id != br.class_id || !(tl.x < br.x) || !(tl.y < br.y)) continue;
      Proposal p;
      p.box = {tl.x, tl.y, br.x, br.y};
      p.class_id = tl.class_id;
      p.corner_score = (tl.score + br.score) / 2.0f;
      p.tl_index = a;
      p.br_index = b;
      p.tl = tl;
      p.br = br;
      out.push_back(p);
    }
  }
  return out;
}

float bilinear_zero_pad(const Tensor& feat, std::size_t c, double y, double x) {
  const auto H = static_cast<std::ptrdiff_t>(feat.dim(1));
  const auto W = static_cast<std::ptrdiff_t>(feat.dim(2));
  if (!(y > -1.0 && x > -1.0 && y < double(H) && x < double(W))) return 0.0f;
  const double fy = std::floor(y), fx = std::floor(x);
  const auto y0 = static_cast<std::ptrdiff_t>(fy), x0 = static_cast<std::ptrdiff_t>(fx);
  const double ly = y - fy, lx = x - fx;
  double acc = 0.0;
  auto tap = [&](std::ptrdiff_t i, std::ptrdiff_t j, double wgt) {
    if (i >= 0 && j >= 0 && i < H && j < W && wgt != 0.0) acc += wgt * feat.at(c, i, j);
  };
  tap(y0, x0, (1 - ly) * (1 - lx));
  tap(y0, x0 + 1, (1 - ly) * lx);
  tap(y0 + 1, x0, ly * (1 - lx));
  tap(y0 + 1, x0 + 1, ly * lx);
  return static_cast<float>(acc);
}

namespace {

// The four grid taps of one sample; flat offsets are within a channel plane.
struct SampleTaps {
  std::array<std::size_t, 4> offset{};
  std::array<double, 4> weight{};
  int count = 0;
};

SampleTaps taps_for(double y, double x, std::ptrdiff_t H, std::ptrdiff_t W) {
  SampleTaps s;
  if (!(y > -1.0 && x > -1.0 && y < double(H) && x < double(W))) return s;
  const double fy = std::floor(y), fx = std::floor(x);
  const auto y0 = static_cast<std::ptrdiff_t>(fy), x0 = static_cast<std::ptrdiff_t>(fx);
  const double ly = y - fy, lx = x - fx;
  const std::ptrdiff_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
  const std::ptrdiff_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const double ws[4] = {(1 - ly) * (1 - lx), (1 - ly) * lx, ly * (1 - lx), ly * lx};
  for (int t = 0; t < 4; ++t) {
    if (ys[t] < 0 || xs[t] < 0 || ys[t] >= H || xs[t] >= W || ws[t] == 0.0) continue;
    s.offset[s.count] = static_cast<std::size_t>(ys[t] * W + xs[t]);
    s.weight[s.count] = ws[t];
    ++s.count;
  }
  return s;
}

}  // namespace

Tensor roi_align(const Tensor& feat, const BBox& box, int stride, std::size_t out_size) {
  if (feat.rank() != 3) throw std::invalid_argument("roi_align expects a [D,H,W] feature map");
  if (out_size == 0) throw std::invalid_argument("roi_align output size must be >= 1");
  const std::size_t D = feat.dim(0);
  const auto H = static_cast<std::ptrdiff_t>(feat.dim(1));
  const auto W = static_cast<std::ptrdiff_t>(feat.dim(2));
  Tensor out({D, out_size, out_size});
  if (!(box.width() > 0.0) || !(box.height() > 0.0)) return out;

  const double x1 = double(box.x1) / stride, y1 = double(box.y1) / stride;
  const double bin_w = (double(box.x2) / stride - x1) / double(out_size);
  const double bin_h = (double(box.y2) / stride - y1) / double(out_size);

  const std::size_t bins = out_size * out_size;
  std::vector<SampleTaps> taps(bins * 4);
  for (std::size_t by = 0; by < out_size; ++by) {
    for (std::size_t bx = 0; bx < out_size; ++bx) {
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double y = y1 + double(by) * bin_h + (sy + 0.5) * bin_h / 2.0;
          const double x = x1 + double(bx) * bin_w + (sx + 0.5) * bin_w / 2.0;
          taps[(by * out_size + bx) * 4 + std::size_t(sy * 2 + sx)] = taps_for(y, x, H, W);
        }
      }
    }
  }

  const std::size_t plane = static_cast<std::size_t>(H * W);
  const auto src = feat.data();
  auto dst = out.data();
  for (std::size_t d = 0; d < D; ++d) {
    const float* base = src.data() + d * plane;
    for (std::size_t b = 0; b < bins; ++b) {
      double acc = 0.0;
      for (std::size_t s = 0; s < 4; ++s) {
        const auto& t = taps[b * 4 + s];
        double v = 0.0;
        for (int k = 0; k < t.count; ++k) v += t.weight[k] * base[t.offset[k]];
        acc += v;
      }
      dst[d * bins + b] = static_cast<float>(acc / 4.0);
    }
  }
  return out;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Clamp keeps outputs strictly inside (0,1) in float.
float open_unit(double p) {
  constexpr float lo = 1e-7f, hi = 1.0f - 1e-7f;
  return std::clamp(static_cast<float>(p), lo, hi);
}

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

}  // namespace

float binary_head(const Tensor& pooled, const HeadWeights& w) {
  if (pooled.shape() != Shape{kBoxFeatureChannels, kPoolSize, kPoolSize})
    throw std::invalid_argument("binary head expects pooled [32,7,7]");
  if (w.binary_kernel.size() != pooled.size())
    throw std::invalid_argument("binary kernel does not match pooled feature size");
  return open_unit(sigmoid(dot(w.binary_kernel.data(), pooled.data()) + w.binary_bias));
}

std::vector<float> class_head(const Tensor& pooled, const HeadWeights& w) {
  if (pooled.shape() != Shape{kCategoryFeatureChannels, kPoolSize, kPoolSize})
    throw std::invalid_argument("class head expects pooled [256,7,7]");
  const std::size_t C = w.num_classes();
  const std::size_t per = pooled.size();
  if (w.class_kernel.size() != C * per || w.class_bias.size() != C)
    throw std::invalid_argument("class kernel does not match pooled feature size");
  std::vector<float> q(C);
  const auto kernel = w.class_kernel.data();
  for (std::size_t c = 0; c < C; ++c)
    q[c] = open_unit(sigmoid(dot(kernel.subspan(c * per, per), pooled.data()) + w.class_bias[c]));
  return q;
}

HeadWeights load_head_weights(const std::filesystem::path& dir) {
  HeadWeights w{tensor_load(dir / kBinaryKernelFile), 0.0f, tensor_load(dir / kClassKernelFile), {}};
  const Tensor bb = tensor_load(dir / kBinaryBiasFile);
  const Tensor cb = tensor_load(dir / kClassBiasFile);
  if (bb.size() != 1) throw FormatError("binary bias must hold exactly one value: " + dir.string());
  w.binary_bias = bb[0];
  w.class_bias.assign(cb.data().begin(), cb.data().end());
  try {
    w.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
  return w;
}

void store_head_weights(const HeadWeights& w, const std::filesystem::path& dir) {
  w.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create weights directory", dir.string());
  tensor_store(w.binary_kernel, dir / kBinaryKernelFile);
  tensor_store(Tensor({1}, std::vector<float>{w.binary_bias}), dir / kBinaryBiasFile);
  tensor_store(w.class_kernel, dir / kClassKernelFile);
  tensor_store(Tensor({w.class_bias.size()}, w.class_bias), dir / kClassBiasFile);
}

}  // namespace cpn
