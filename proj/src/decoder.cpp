#include "affmap/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "affmap/error.hpp"
#include "decoder_internal.hpp"

namespace affmap {
namespace detail {

Eigen::RowVectorXd cap_logits(const FeatureMap& f, const Tensor& weight, const Tensor& bias) {
  const auto w = tensor_matrix(weight, 1, f.channels());
  Eigen::RowVectorXd z = w * features_matrix(f);
  z.array() += bias.values[0];
  return z;
}

RowMatrix compress(const FeatureMap& f, const DecoderParams& p) {
  const auto& cfg = p.config;
  const auto wc = tensor_matrix(p.tensors[tensor::kCompressWeight], cfg.compressed, cfg.channels);
  const Eigen::Map<const Eigen::VectorXd> bc(p.tensors[tensor::kCompressBias].values.data(),
                                             cfg.compressed);
  RowMatrix g = wc * features_matrix(f);
  g.colwise() += bc;
  return g;
}

RowMatrix im2col3x3(const RowMatrix& g, int w, int h) {
  const auto channels = g.rows();
  RowMatrix cols = RowMatrix::Zero(channels * 9, static_cast<Eigen::Index>(w) * h);
  for (Eigen::Index m = 0; m < channels; ++m) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const Eigen::Index row = m * 9 + (dy + 1) * 3 + (dx + 1);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + dx;
            if (sx < 0 || sx >= w) continue;
            cols(row, y * w + x) = g(m, sy * w + sx);
          }
        }
      }
    }
  }
  return cols;
}

RowMatrix col2im3x3(const RowMatrix& cols, int channels, int w, int h) {
  RowMatrix g = RowMatrix::Zero(channels, static_cast<Eigen::Index>(w) * h);
  for (Eigen::Index m = 0; m < channels; ++m) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const Eigen::Index row = m * 9 + (dy + 1) * 3 + (dx + 1);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + dx;
            if (sx < 0 || sx >= w) continue;
            g(m, sy * w + sx) += cols(row, y * w + x);
          }
        }
      }
    }
  }
  return g;
}

ColMatrix expand_logits(const RowMatrix& cols, const DecoderParams& p) {
  const auto& we = p.tensors[tensor::kExpandWeight];
  const auto out = static_cast<Eigen::Index>(we.shape[0]);
  const auto wmat = tensor_matrix(we, out, cols.rows());
  const Eigen::Map<const Eigen::VectorXd> be(p.tensors[tensor::kExpandBias].values.data(), out);
  ColMatrix e = wmat * cols;
  e.colwise() += be;
  return e;
}

void softmax_groups(double* data, std::size_t n, int group) {
  for (std::size_t base = 0; base < n; base += static_cast<std::size_t>(group)) {
    double* g = data + base;
    const double mx = *std::max_element(g, g + group);
    double sum = 0.0;
    for (int t = 0; t < group; ++t) {
      g[t] = std::exp(g[t] - mx);
      sum += g[t];
    }
    const double inv = 1.0 / sum;
    for (int t = 0; t < group; ++t) g[t] *= inv;
  }
}

KernelField kernel_field_from_logits(const ColMatrix& logits, int k, int s, int w, int h) {
  const int kk = k * k;
  const int out_w = w * s;
  KernelField kf{out_w, h * s, k, std::vector<double>(static_cast<std::size_t>(out_w) * h * s * kk)};
  for (int cy = 0; cy < h; ++cy) {
    for (int cx = 0; cx < w; ++cx) {
      const double* col = logits.col(cy * w + cx).data();
      for (int sy = 0; sy < s; ++sy) {
        for (int sx = 0; sx < s; ++sx) {
          const double* src = col + static_cast<std::size_t>(sy * s + sx) * kk;
          const std::size_t pix = static_cast<std::size_t>(cy * s + sy) * out_w + (cx * s + sx);
          std::copy(src, src + kk, kf.weights.begin() + static_cast<std::ptrdiff_t>(pix * kk));
        }
      }
    }
  }
  softmax_groups(kf.weights.data(), kf.weights.size(), kk);
  return kf;
}

ColMatrix to_logit_layout(std::span<const double> per_pixel, int k, int s, int w, int h) {
  const int kk = k * k;
  const int out_w = w * s;
  ColMatrix e(static_cast<Eigen::Index>(s) * s * kk, static_cast<Eigen::Index>(w) * h);
  for (int cy = 0; cy < h; ++cy) {
    for (int cx = 0; cx < w; ++cx) {
      double* col = e.col(cy * w + cx).data();
      for (int sy = 0; sy < s; ++sy) {
        for (int sx = 0; sx < s; ++sx) {
          const std::size_t pix = static_cast<std::size_t>(cy * s + sy) * out_w + (cx * s + sx);
          std::copy_n(per_pixel.begin() + static_cast<std::ptrdiff_t>(pix * kk), kk,
                      col + static_cast<std::size_t>(sy * s + sx) * kk);
        }
      }
    }
  }
  return e;
}

LinearTap bilinear_tap(int dst, int s, int n) {
  double src = (dst + 0.5) / s - 0.5;
  if (src < 0.0) src = 0.0;
  int i0 = static_cast<int>(std::floor(src));
  if (i0 > n - 1) i0 = n - 1;
  const int i1 = std::min(i0 + 1, n - 1);
  const double l1 = src - i0;
  return {i0, i1, 1.0 - l1, l1};
}

std::vector<double> deconv_logits(const CoarseAffordance& m, std::span<const double> kernel,
                                  double bias, int s) {
  const int ks = 2 * s;
  const int out_w = m.width * s;
  const int out_h = m.height * s;
  const int crop = deconv_crop(s);
  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h, bias);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const double v = m.at(x, y);
      for (int ky = 0; ky < ks; ++ky) {
        const int oy = y * s + ky - crop;
        if (oy < 0 || oy >= out_h) continue;
        for (int kx = 0; kx < ks; ++kx) {
          const int ox = x * s + kx - crop;
          if (ox < 0 || ox >= out_w) continue;
          out[static_cast<std::size_t>(oy) * out_w + ox] += v * kernel[static_cast<std::size_t>(ky) * ks + kx];
        }
      }
    }
  }
  return out;
}

std::vector<double> pixelshuffle_logits(const FeatureMap& f, std::span<const double> weights,
                                        std::span<const double> bias, int s) {
  const int w = f.width();
  const int h = f.height();
  const int ss = s * s;
  const RowMatrix wmat = ConstRowMap(weights.data(), ss, f.channels());
  RowMatrix a = wmat * features_matrix(f);
  const int out_w = w * s;
  std::vector<double> out(static_cast<std::size_t>(out_w) * h * s);
  for (int sub = 0; sub < ss; ++sub) {
    const int sy = sub / s;
    const int sx = sub % s;
    for (int cy = 0; cy < h; ++cy) {
      for (int cx = 0; cx < w; ++cx) {
        out[static_cast<std::size_t>(cy * s + sy) * out_w + (cx * s + sx)] =
            a(sub, cy * w + cx) + bias[static_cast<std::size_t>(sub)];
      }
    }
  }
  return out;
}

}  // namespace detail

namespace {

Heatmap sigmoid_heatmap(int w, int h, std::vector<double> logits) {
  for (auto& v : logits) v = sigmoid(v);
  return Heatmap(w, h, std::move(logits));
}

void require_kind(const DecoderParams& p, DecoderKind kind, const char* op) {
  if (p.config.kind != kind) {
    throw ParameterError(std::string(op) + ": parameters are for decoder '" +
                         std::string(to_string(p.config.kind)) + "'");
  }
}

void require_scale(int s, const char* op) {
  if (s < 1) throw ParameterError(std::string(op) + ": scale must be >= 1");
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> softmax_normalize(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax_normalize: empty input");
  for (double v : logits) {
    if (!std::isfinite(v)) throw ParameterError("softmax_normalize: non-finite logit");
  }
  std::vector<double> out(logits.begin(), logits.end());
  detail::softmax_groups(out.data(), out.size(), static_cast<int>(out.size()));
  return out;
}

void check_features(const FeatureMap& f, const DecoderParams& p) {
  if (f.channels() != p.config.channels) {
    throw DimensionError("feature map has " + std::to_string(f.channels()) +
                         " channels, decoder expects " + std::to_string(p.config.channels));
  }
}

CoarseAffordance cap_forward(const FeatureMap& f, const DecoderParams& p) {
  check_features(f, p);
  if (p.config.kind == DecoderKind::kPixelShuffle) {
    throw ParameterError("cap_forward: pixelshuffle decoder has no CAP head");
  }
  const auto z = detail::cap_logits(f, p.tensors[tensor::kCapWeight], p.tensors[tensor::kCapBias]);
  CoarseAffordance m{f.width(), f.height(), std::vector<double>(static_cast<std::size_t>(z.size()))};
  for (Eigen::Index i = 0; i < z.size(); ++i) m.values[static_cast<std::size_t>(i)] = sigmoid(z[i]);
  return m;
}

KernelField akg_forward(const FeatureMap& f, const DecoderParams& p) {
  check_features(f, p);
  require_kind(p, DecoderKind::kAhd, "akg_forward");
  const auto& cfg = p.config;
  const auto g = detail::compress(f, p);
  const auto cols = detail::im2col3x3(g, f.width(), f.height());
  const auto e = detail::expand_logits(cols, p);
  return detail::kernel_field_from_logits(e, cfg.kernel, cfg.scale, f.width(), f.height());
}

Heatmap convex_upsample(const CoarseAffordance& m, const KernelField& kf, int s) {
  require_scale(s, "convex_upsample");
  if (m.width < 1 || m.height < 1 ||
      m.values.size() != static_cast<std::size_t>(m.width) * m.height) {
    throw DimensionError("convex_upsample: malformed coarse map");
  }
  if (kf.out_width != m.width * s || kf.out_height != m.height * s) {
    throw DimensionError("convex_upsample: kernel field is " + std::to_string(kf.out_width) + "x" +
                         std::to_string(kf.out_height) + ", expected " +
                         std::to_string(m.width * s) + "x" + std::to_string(m.height * s));
  }
  if (kf.k < 1 || kf.k % 2 == 0) throw ParameterError("convex_upsample: kernel size must be odd");
  const int kk = kf.k * kf.k;
  if (kf.weights.size() != static_cast<std::size_t>(kf.out_width) * kf.out_height * kk) {
    throw DimensionError("convex_upsample: kernel field weight count mismatch");
  }

  const int r = (kf.k - 1) / 2;
  std::vector<double> out(static_cast<std::size_t>(kf.out_width) * kf.out_height);
  for (int y = 0; y < kf.out_height; ++y) {
    const int cy = y / s;
    for (int x = 0; x < kf.out_width; ++x) {
      const int cx = x / s;
      const auto w = kf.at(x, y);
      double sum_w = 0.0;
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int sy = detail::clamp_index(cy, dy, m.height);
        for (int dx = -r; dx <= r; ++dx) {
          const double wt = w[static_cast<std::size_t>((dy + r) * kf.k + (dx + r))];
          if (!(wt >= 0.0)) {
            throw ParameterError("convex_upsample: negative kernel weight at (" + std::to_string(x) +
                                 ", " + std::to_string(y) + ")");
          }
          sum_w += wt;
          acc += wt * m.at(detail::clamp_index(cx, dx, m.width), sy);
        }
      }
      if (std::abs(sum_w - 1.0) > kKernelSumTolerance) {
        throw ParameterError("convex_upsample: kernel at (" + std::to_string(x) + ", " +
                             std::to_string(y) + ") sums to " + std::to_string(sum_w));
      }
      out[static_cast<std::size_t>(y) * kf.out_width + x] = std::clamp(acc, 0.0, 1.0);
    }
  }
  return Heatmap(kf.out_width, kf.out_height, std::move(out));
}

Heatmap ahd_forward(const FeatureMap& f, const DecoderParams& p) {
  require_kind(p, DecoderKind::kAhd, "ahd_forward");
  return convex_upsample(cap_forward(f, p), akg_forward(f, p), p.config.scale);
}

Heatmap bilinear_upsample(const CoarseAffordance& m, int s) {
  require_scale(s, "bilinear_upsample");
  const int out_w = m.width * s;
  const int out_h = m.height * s;
  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h);
  for (int y = 0; y < out_h; ++y) {
    const auto ty = detail::bilinear_tap(y, s, m.height);
    for (int x = 0; x < out_w; ++x) {
      const auto tx = detail::bilinear_tap(x, s, m.width);
      const double v = ty.w0 * (tx.w0 * m.at(tx.i0, ty.i0) + tx.w1 * m.at(tx.i1, ty.i0)) +
                       ty.w1 * (tx.w0 * m.at(tx.i0, ty.i1) + tx.w1 * m.at(tx.i1, ty.i1));
      out[static_cast<std::size_t>(y) * out_w + x] = std::clamp(v, 0.0, 1.0);
    }
  }
  return Heatmap(out_w, out_h, std::move(out));
}

Heatmap deconv_upsample(const CoarseAffordance& m, std::span<const double> kernel, double bias, int s) {
  require_scale(s, "deconv_upsample");
  if (kernel.size() != static_cast<std::size_t>(4 * s * s)) {
    throw DimensionError("deconv_upsample: kernel must be 2s x 2s = " + std::to_string(4 * s * s) +
                         " values, got " + std::to_string(kernel.size()));
  }
  return sigmoid_heatmap(m.width * s, m.height * s, detail::deconv_logits(m, kernel, bias, s));
}

Heatmap pixelshuffle_upsample(const FeatureMap& f, std::span<const double> weights,
                              std::span<const double> bias, int s) {
  require_scale(s, "pixelshuffle_upsample");
  const auto ss = static_cast<std::size_t>(s) * s;
  if (weights.size() != ss * static_cast<std::size_t>(f.channels()) || bias.size() != ss) {
    throw DimensionError("pixelshuffle_upsample: weights must be s*s x C = " +
                         std::to_string(ss * f.channels()) + " values and bias s*s");
  }
  return sigmoid_heatmap(f.width() * s, f.height() * s, detail::pixelshuffle_logits(f, weights, bias, s));
}

Heatmap decoder_forward(const FeatureMap& f, const DecoderParams& p) {
  check_features(f, p);
  const int s = p.config.scale;
  switch (p.config.kind) {
    case DecoderKind::kAhd:
      return ahd_forward(f, p);
    case DecoderKind::kBilinear:
      return bilinear_upsample(cap_forward(f, p), s);
    case DecoderKind::kDeconv:
      return deconv_upsample(cap_forward(f, p), p.tensors[tensor::kDeconvWeight].values,
                             p.tensors[tensor::kDeconvBias].values[0], s);
    case DecoderKind::kPixelShuffle:
      return pixelshuffle_upsample(f, p.tensors[tensor::kShuffleWeight].values,
                                   p.tensors[tensor::kShuffleBias].values, s);
  }
  throw ParameterError("decoder_forward: unknown decoder kind");
}

}  // namespace affmap
