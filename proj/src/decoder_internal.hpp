#pragma once

// Matrix-level building blocks shared by the forward, backward and inference
// paths. Everything here works on a single feature map.

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "affmap/decoder.hpp"

namespace affmap::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMatrix = Eigen::MatrixXd;
using ConstRowMap = Eigen::Map<const RowMatrix>;

// Eigen picks vectorized code paths by buffer alignment, so products only see
// Eigen-owned (aligned) copies. Results are then bitwise independent of where
// the std::vector storage happens to live.

// C x (h*w) copy of the feature values.
inline RowMatrix features_matrix(const FeatureMap& f) {
  return ConstRowMap(f.values().data(), f.channels(), f.cells());
}

inline RowMatrix tensor_matrix(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
  return ConstRowMap(t.values.data(), rows, cols);
}

inline void store(Tensor& t, const RowMatrix& m) {
  std::copy(m.data(), m.data() + m.size(), t.values.begin());
}

// CAP pre-activation, one entry per cell.
Eigen::RowVectorXd cap_logits(const FeatureMap& f, const Tensor& weight, const Tensor& bias);

// AKG compressor output, C_m x (h*w).
RowMatrix compress(const FeatureMap& f, const DecoderParams& p);

// 3x3 zero-padded patches: row m*9 + (dy+1)*3 + (dx+1), column = cell.
RowMatrix im2col3x3(const RowMatrix& g, int w, int h);
// Adjoint of im2col3x3.
RowMatrix col2im3x3(const RowMatrix& cols, int channels, int w, int h);

// Expander logits, (s*s*k*k) x (h*w), column-major so each cell's logits
// are contiguous.
ColMatrix expand_logits(const RowMatrix& cols, const DecoderParams& p);

// In-place softmax over each consecutive group of `group` entries.
void softmax_groups(double* data, std::size_t n, int group);

// Softmax over each pixel's logits and reorder from (cell, sub-pixel) layout
// to the row-major KernelField layout.
KernelField kernel_field_from_logits(const ColMatrix& logits, int k, int s, int w, int h);

// Inverse reordering of `kernel_field_from_logits` for per-pixel gradients.
ColMatrix to_logit_layout(std::span<const double> per_pixel, int k, int s, int w, int h);

// Clamped source index of neighborhood offset `d` around cell `c`.
inline int clamp_index(int c, int d, int n) {
  const int i = c + d;
  return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

struct LinearTap {
  int i0 = 0;
  int i1 = 0;
  double w0 = 1.0;
  double w1 = 0.0;
};

// Align-corners-false source taps for output index `dst` when upsampling a
// length-`n` axis by `s`.
LinearTap bilinear_tap(int dst, int s, int n);

// Leading rows/columns of the full transposed-convolution output that are
// cropped away.
inline int deconv_crop(int s) { return s / 2; }

// Pre-sigmoid transposed convolution output, row-major (s*h) x (s*w).
std::vector<double> deconv_logits(const CoarseAffordance& m, std::span<const double> kernel,
                                  double bias, int s);

// Pre-sigmoid pixel-shuffle output, row-major (s*h) x (s*w).
std::vector<double> pixelshuffle_logits(const FeatureMap& f, std::span<const double> weights,
                                        std::span<const double> bias, int s);

}  // namespace affmap::detail
