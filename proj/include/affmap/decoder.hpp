#pragma once

// Adaptive Heatmap Decoder and the three content-agnostic baselines.
//
// The AHD has two heads over a C x h x w feature map:
//   * CAP: 1x1 conv C -> 1, logistic sigmoid, giving a coarse map in (0, 1).
//   * AKG: 1x1 conv C -> C_m, then 3x3 conv (zero padded) C_m -> s*s*k*k,
//     rearranged so every output pixel owns k*k logits, softmax-normalized.
// Each of the (s*h) x (s*w) output pixels is the convex combination of the
// k x k coarse neighborhood around its source cell (floor(y/s), floor(x/s)),
// with out-of-range cells clamped to the border.
//
// Expander channel layout: channel o = (sy * s + sx) * k*k + tap, where
// (sy, sx) is the sub-pixel position inside the source cell and
// tap = (dy + r) * k + (dx + r), r = (k - 1) / 2.

#include <span>
#include <vector>

#include "affmap/grid.hpp"
#include "affmap/params.hpp"

namespace affmap {

// Low-resolution sigmoid output of the CAP head; values in (0, 1).
struct CoarseAffordance {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  GridView view() const noexcept { return {width, height, values}; }
};

// Per-output-pixel k x k reassembly weights, row-major over pixels with k*k
// contiguous weights each.
struct KernelField {
  int out_width = 0;
  int out_height = 0;
  int k = 0;
  std::vector<double> weights;

  std::span<const double> at(int x, int y) const {
    const auto kk = static_cast<std::size_t>(k) * k;
    return {weights.data() + (static_cast<std::size_t>(y) * out_width + x) * kk, kk};
  }
};

// Tolerance for the unit-sum check on kernel weights.
inline constexpr double kKernelSumTolerance = 1e-6;

double sigmoid(double z);

// Numerically stable softmax (max subtracted before exponentiation).
// Throws ParameterError on non-finite input.
std::vector<double> softmax_normalize(std::span<const double> logits);

CoarseAffordance cap_forward(const FeatureMap& f, const DecoderParams& p);
KernelField akg_forward(const FeatureMap& f, const DecoderParams& p);

// Throws DimensionError when the field is not (s*w) x (s*h) and
// ParameterError when a kernel is negative or does not sum to 1.
Heatmap convex_upsample(const CoarseAffordance& m, const KernelField& kf, int s);

Heatmap ahd_forward(const FeatureMap& f, const DecoderParams& p);

// Align-corners-false bilinear resampling, source coordinates clamped at 0.
Heatmap bilinear_upsample(const CoarseAffordance& m, int s);

// Transposed convolution with a 2s x 2s kernel at stride s, followed by a
// sigmoid. The leading floor(s/2) rows/columns of the full output are dropped
// (padding s/2 for even s) and the output is cropped to (s*w) x (s*h).
Heatmap deconv_upsample(const CoarseAffordance& m, std::span<const double> kernel, double bias, int s);

// 1x1 conv C -> s*s, depth-to-space (channel sy*s + sx lands at
// (y*s + sy, x*s + sx)), sigmoid.
Heatmap pixelshuffle_upsample(const FeatureMap& f, std::span<const double> weights,
                              std::span<const double> bias, int s);

// Runs whichever decoder `p.config.kind` names.
Heatmap decoder_forward(const FeatureMap& f, const DecoderParams& p);

// Throws DimensionError when `f` does not match the configured channel count.
void check_features(const FeatureMap& f, const DecoderParams& p);

}  // namespace affmap
