#include "affmap/inference.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "affmap/decoder.hpp"
#include "decoder_internal.hpp"

namespace affmap {

namespace {
using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMatrixF = Eigen::MatrixXf;
}  // namespace

struct InferenceSession::Impl {
  DecoderParams params;

  // Single-precision AHD weights.
  Eigen::RowVectorXf cap_w;
  float cap_b = 0.0f;
  RowMatrixF compress_w;
  Eigen::VectorXf compress_b;
  RowMatrixF expand_w;
  Eigen::VectorXf expand_b;

  // Workspaces, resized on demand.
  RowMatrixF features;
  Eigen::RowVectorXf coarse;
  RowMatrixF compressed;
  RowMatrixF cols;
  ColMatrixF logits;
  std::vector<float> neighborhood;

  explicit Impl(const DecoderParams& p) : params(p) {
    check_features(FeatureMap(p.config.channels, 1, 1), p);
    if (p.config.kind != DecoderKind::kAhd) return;
    const auto& cfg = p.config;
    const auto kk = cfg.kernel * cfg.kernel;
    const auto out = cfg.scale * cfg.scale * kk;
    cap_w = detail::tensor_matrix(p.tensors[tensor::kCapWeight], 1, cfg.channels).cast<float>();
    cap_b = static_cast<float>(p.tensors[tensor::kCapBias].values[0]);
    compress_w =
        detail::tensor_matrix(p.tensors[tensor::kCompressWeight], cfg.compressed, cfg.channels).cast<float>();
    compress_b = Eigen::Map<const Eigen::VectorXd>(p.tensors[tensor::kCompressBias].values.data(),
                                                   cfg.compressed)
                     .cast<float>();
    expand_w = detail::tensor_matrix(p.tensors[tensor::kExpandWeight], out, cfg.compressed * 9).cast<float>();
    expand_b =
        Eigen::Map<const Eigen::VectorXd>(p.tensors[tensor::kExpandBias].values.data(), out).cast<float>();
    neighborhood.resize(static_cast<std::size_t>(kk));
  }

  Heatmap run_ahd(const FeatureMap& f) {
    const auto& cfg = params.config;
    const int w = f.width();
    const int h = f.height();
    const int s = cfg.scale;
    const int k = cfg.kernel;
    const int r = (k - 1) / 2;
    const int kk = k * k;
    const Eigen::Index cells = f.cells();

    features = detail::features_matrix(f).cast<float>();
    coarse.noalias() = cap_w * features;
    for (Eigen::Index i = 0; i < cells; ++i) {
      coarse[i] = static_cast<float>(sigmoid(static_cast<double>(coarse[i] + cap_b)));
    }

    compressed.noalias() = compress_w * features;
    compressed.colwise() += compress_b;

    cols.setZero(cfg.compressed * 9, cells);
    for (int m = 0; m < cfg.compressed; ++m) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          float* dst = cols.row(m * 9 + (dy + 1) * 3 + (dx + 1)).data();
          const float* src = compressed.row(m).data();
          for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
            for (int x = std::max(0, -dx); x < std::min(w, w - dx); ++x) {
              dst[y * w + x] = src[(y + dy) * w + (x + dx)];
            }
          }
        }
      }
    }

    logits.resize(expand_w.rows(), cells);
    logits.noalias() = expand_w * cols;
    logits.colwise() += expand_b;

    // Subtract each pixel's max logit, exponentiate everything in one
    // vectorized pass, then normalize inside the reassembly sum.
    float* data = logits.data();
    const auto total = static_cast<std::size_t>(logits.size());
    for (std::size_t base = 0; base < total; base += static_cast<std::size_t>(kk)) {
      float* g = data + base;
      const float mx = *std::max_element(g, g + kk);
      for (int t = 0; t < kk; ++t) g[t] -= mx;
    }
    logits.array() = logits.array().exp();

    const int out_w = w * s;
    std::vector<double> out(static_cast<std::size_t>(out_w) * h * s);
    for (int cy = 0; cy < h; ++cy) {
      for (int cx = 0; cx < w; ++cx) {
        for (int dy = -r; dy <= r; ++dy) {
          const int sy = detail::clamp_index(cy, dy, h);
          for (int dx = -r; dx <= r; ++dx) {
            neighborhood[static_cast<std::size_t>((dy + r) * k + (dx + r))] =
                coarse[sy * w + detail::clamp_index(cx, dx, w)];
          }
        }
        const float* col = logits.col(cy * w + cx).data();
        for (int sy = 0; sy < s; ++sy) {
          for (int sx = 0; sx < s; ++sx) {
            const float* e = col + static_cast<std::size_t>(sy * s + sx) * kk;
            float num = 0.0f;
            float den = 0.0f;
            for (int t = 0; t < kk; ++t) {
              num += e[t] * neighborhood[static_cast<std::size_t>(t)];
              den += e[t];
            }
            out[static_cast<std::size_t>(cy * s + sy) * out_w + (cx * s + sx)] =
                std::clamp(static_cast<double>(num / den), 0.0, 1.0);
          }
        }
      }
    }
    return Heatmap(out_w, h * s, std::move(out));
  }
};

InferenceSession::InferenceSession(const DecoderParams& params) : impl_(std::make_unique<Impl>(params)) {}
InferenceSession::~InferenceSession() = default;
InferenceSession::InferenceSession(InferenceSession&&) noexcept = default;
InferenceSession& InferenceSession::operator=(InferenceSession&&) noexcept = default;

const DecoderConfig& InferenceSession::config() const noexcept { return impl_->params.config; }

Heatmap InferenceSession::run(const FeatureMap& f) {
  check_features(f, impl_->params);
  if (impl_->params.config.kind == DecoderKind::kAhd) return impl_->run_ahd(f);
  return decoder_forward(f, impl_->params);
}

}  // namespace affmap
