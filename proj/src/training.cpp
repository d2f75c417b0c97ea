#include "affmap/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "affmap/decoder.hpp"
#include "affmap/error.hpp"
#include "affmap/random.hpp"
#include "decoder_internal.hpp"

namespace affmap {
namespace {

using detail::ColMatrix;
using detail::RowMatrix;

void require_same_dims(const Heatmap& a, const Heatmap& b, const char* op) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError(std::string(op) + ": prediction is " + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + ", target is " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()));
  }
}

// dL/dp of the mean clamped BCE; zero where the clamp is active.
std::vector<double> bce_grad(const Heatmap& pred, const Heatmap& target) {
  const auto p = pred.values();
  const auto t = target.values();
  const double inv_n = 1.0 / static_cast<double>(p.size());
  std::vector<double> g(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < kBceEpsilon || p[i] > 1.0 - kBceEpsilon) continue;
    g[i] = (p[i] - t[i]) / (p[i] * (1.0 - p[i])) * inv_n;
  }
  return g;
}

// Backward through CAP given dL/dM_low; writes cap.weight/cap.bias grads.
void cap_backward(const FeatureMap& f, const std::vector<double>& coarse, const std::vector<double>& d_coarse,
                  Tensor& d_weight, Tensor& d_bias) {
  Eigen::RowVectorXd dz(static_cast<Eigen::Index>(coarse.size()));
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    dz[static_cast<Eigen::Index>(i)] = d_coarse[i] * coarse[i] * (1.0 - coarse[i]);
  }
  detail::store(d_weight, RowMatrix(dz * detail::features_matrix(f).transpose()));
  d_bias.values[0] = dz.sum();
}

std::vector<double> sigmoid_output_grad(const Heatmap& out, const std::vector<double>& d_out) {
  std::vector<double> d(d_out.size());
  const auto o = out.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = d_out[i] * o[i] * (1.0 - o[i]);
  return d;
}

LossAndGrad ahd_loss_and_grad(const FeatureMap& f, const DecoderParams& p, const Heatmap& target) {
  const auto& cfg = p.config;
  const int w = f.width();
  const int h = f.height();
  const int s = cfg.scale;
  const int k = cfg.kernel;
  const int kk = k * k;
  const int r = (k - 1) / 2;

  // Forward with tape.
  const CoarseAffordance coarse = cap_forward(f, p);
  const RowMatrix g = detail::compress(f, p);
  const RowMatrix cols = detail::im2col3x3(g, w, h);
  const KernelField kf = detail::kernel_field_from_logits(detail::expand_logits(cols, p), k, s, w, h);
  const Heatmap out = convex_upsample(coarse, kf, s);
  require_same_dims(out, target, "ahd_backward");

  LossAndGrad res{bce_loss(out, target), zeros_like(p)};
  const auto d_out = bce_grad(out, target);

  // Reassembly: out(P) = sum_t W(P, t) * M_low(nb(P, t)).
  std::vector<double> d_coarse(coarse.values.size(), 0.0);
  std::vector<double> d_logit(kf.weights.size());
  std::vector<double> d_w(static_cast<std::size_t>(kk));
  const int out_w = w * s;
  for (int y = 0; y < h * s; ++y) {
    const int cy = y / s;
    for (int x = 0; x < out_w; ++x) {
      const int cx = x / s;
      const std::size_t pix = static_cast<std::size_t>(y) * out_w + x;
      const double go = d_out[pix];
      const double* wt = kf.weights.data() + pix * kk;
      double dot = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int sy = detail::clamp_index(cy, dy, h);
        for (int dx = -r; dx <= r; ++dx) {
          const int t = (dy + r) * k + (dx + r);
          const std::size_t src = static_cast<std::size_t>(sy) * w + detail::clamp_index(cx, dx, w);
          d_w[static_cast<std::size_t>(t)] = go * coarse.values[src];
          d_coarse[src] += go * wt[t];
          dot += wt[t] * d_w[static_cast<std::size_t>(t)];
        }
      }
      // Softmax Jacobian-vector product.
      for (int t = 0; t < kk; ++t) d_logit[pix * kk + t] = wt[t] * (d_w[static_cast<std::size_t>(t)] - dot);
    }
  }

  // Expander: logits = We * cols + be.
  const ColMatrix d_e = detail::to_logit_layout(d_logit, k, s, w, h);
  const auto out_ch = static_cast<Eigen::Index>(s) * s * kk;
  auto& dwe = res.grad.tensors[tensor::kExpandWeight];
  detail::store(dwe, RowMatrix(d_e * cols.transpose()));
  detail::store(res.grad.tensors[tensor::kExpandBias], RowMatrix(d_e.rowwise().sum()));

  const auto we = detail::tensor_matrix(p.tensors[tensor::kExpandWeight], out_ch, cols.rows());
  const RowMatrix d_cols = we.transpose() * d_e;
  const RowMatrix d_g = detail::col2im3x3(d_cols, cfg.compressed, w, h);

  // Compressor: g = Wc * F + bc.
  detail::store(res.grad.tensors[tensor::kCompressWeight], RowMatrix(d_g * detail::features_matrix(f).transpose()));
  detail::store(res.grad.tensors[tensor::kCompressBias], RowMatrix(d_g.rowwise().sum()));

  cap_backward(f, coarse.values, d_coarse, res.grad.tensors[tensor::kCapWeight],
               res.grad.tensors[tensor::kCapBias]);
  return res;
}

LossAndGrad bilinear_loss_and_grad(const FeatureMap& f, const DecoderParams& p, const Heatmap& target) {
  const int s = p.config.scale;
  const CoarseAffordance coarse = cap_forward(f, p);
  const Heatmap out = bilinear_upsample(coarse, s);
  require_same_dims(out, target, "decoder_backward");
  LossAndGrad res{bce_loss(out, target), zeros_like(p)};
  const auto d_out = bce_grad(out, target);

  std::vector<double> d_coarse(coarse.values.size(), 0.0);
  const int w = coarse.width;
  for (int y = 0; y < out.height(); ++y) {
    const auto ty = detail::bilinear_tap(y, s, coarse.height);
    for (int x = 0; x < out.width(); ++x) {
      const auto tx = detail::bilinear_tap(x, s, w);
      const double go = d_out[static_cast<std::size_t>(y) * out.width() + x];
      d_coarse[static_cast<std::size_t>(ty.i0) * w + tx.i0] += go * ty.w0 * tx.w0;
      d_coarse[static_cast<std::size_t>(ty.i0) * w + tx.i1] += go * ty.w0 * tx.w1;
      d_coarse[static_cast<std::size_t>(ty.i1) * w + tx.i0] += go * ty.w1 * tx.w0;
      d_coarse[static_cast<std::size_t>(ty.i1) * w + tx.i1] += go * ty.w1 * tx.w1;
    }
  }
  cap_backward(f, coarse.values, d_coarse, res.grad.tensors[tensor::kCapWeight],
               res.grad.tensors[tensor::kCapBias]);
  return res;
}

LossAndGrad deconv_loss_and_grad(const FeatureMap& f, const DecoderParams& p, const Heatmap& target) {
  const int s = p.config.scale;
  const auto& kernel = p.tensors[tensor::kDeconvWeight].values;
  const CoarseAffordance coarse = cap_forward(f, p);
  const Heatmap out = deconv_upsample(coarse, kernel, p.tensors[tensor::kDeconvBias].values[0], s);
  require_same_dims(out, target, "decoder_backward");
  LossAndGrad res{bce_loss(out, target), zeros_like(p)};
  const auto d_a = sigmoid_output_grad(out, bce_grad(out, target));

  auto& dk = res.grad.tensors[tensor::kDeconvWeight].values;
  std::vector<double> d_coarse(coarse.values.size(), 0.0);
  const int ks = 2 * s;
  const int crop = detail::deconv_crop(s);
  const int out_w = out.width();
  const int out_h = out.height();
  for (int y = 0; y < coarse.height; ++y) {
    for (int x = 0; x < coarse.width; ++x) {
      const double v = coarse.at(x, y);
      double acc = 0.0;
      for (int ky = 0; ky < ks; ++ky) {
        const int oy = y * s + ky - crop;
        if (oy < 0 || oy >= out_h) continue;
        for (int kx = 0; kx < ks; ++kx) {
          const int ox = x * s + kx - crop;
          if (ox < 0 || ox >= out_w) continue;
          const double ga = d_a[static_cast<std::size_t>(oy) * out_w + ox];
          dk[static_cast<std::size_t>(ky) * ks + kx] += v * ga;
          acc += kernel[static_cast<std::size_t>(ky) * ks + kx] * ga;
        }
      }
      d_coarse[static_cast<std::size_t>(y) * coarse.width + x] = acc;
    }
  }
  res.grad.tensors[tensor::kDeconvBias].values[0] = std::accumulate(d_a.begin(), d_a.end(), 0.0);
  cap_backward(f, coarse.values, d_coarse, res.grad.tensors[tensor::kCapWeight],
               res.grad.tensors[tensor::kCapBias]);
  return res;
}

LossAndGrad pixelshuffle_loss_and_grad(const FeatureMap& f, const DecoderParams& p, const Heatmap& target) {
  const int s = p.config.scale;
  const int ss = s * s;
  const Heatmap out = decoder_forward(f, p);
  require_same_dims(out, target, "decoder_backward");
  LossAndGrad res{bce_loss(out, target), zeros_like(p)};
  const auto d_a = sigmoid_output_grad(out, bce_grad(out, target));

  const int w = f.width();
  RowMatrix d_sub(ss, f.cells());
  for (int sub = 0; sub < ss; ++sub) {
    for (int cy = 0; cy < f.height(); ++cy) {
      for (int cx = 0; cx < w; ++cx) {
        d_sub(sub, cy * w + cx) = d_a[static_cast<std::size_t>(cy * s + sub / s) * out.width() + (cx * s + sub % s)];
      }
    }
  }
  detail::store(res.grad.tensors[tensor::kShuffleWeight], RowMatrix(d_sub * detail::features_matrix(f).transpose()));
  detail::store(res.grad.tensors[tensor::kShuffleBias], RowMatrix(d_sub.rowwise().sum()));
  return res;
}

long steps_per_epoch(const TrainConfig& cfg, std::size_t n) {
  return static_cast<long>((n + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size));
}

}  // namespace

double bce_loss(const Heatmap& pred, const Heatmap& target) {
  require_same_dims(pred, target, "bce_loss");
  const auto p = pred.values();
  const auto t = target.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kBceEpsilon, 1.0 - kBceEpsilon);
    sum -= t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
  }
  return sum / static_cast<double>(p.size());
}

LossAndGrad decoder_backward(const FeatureMap& f, const DecoderParams& p, const Heatmap& target) {
  check_features(f, p);
  switch (p.config.kind) {
    case DecoderKind::kAhd: return ahd_loss_and_grad(f, p, target);
    case DecoderKind::kBilinear: return bilinear_loss_and_grad(f, p, target);
    case DecoderKind::kDeconv: return deconv_loss_and_grad(f, p, target);
    case DecoderKind::kPixelShuffle: return pixelshuffle_loss_and_grad(f, p, target);
  }
  throw ParameterError("decoder_backward: unknown decoder kind");
}

LossAndGrad ahd_backward(const FeatureMap& f, const DecoderParams& p, const Heatmap& target) {
  if (p.config.kind != DecoderKind::kAhd) throw ParameterError("ahd_backward: parameters are not AHD");
  return decoder_backward(f, p, target);
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.beta1 > 0 && cfg.beta1 < 1) || !(cfg.beta2 > 0 && cfg.beta2 < 1)) {
    throw ParameterError("train config: betas must lie in (0, 1)");
  }
  if (!(cfg.lr_peak >= 0) || !(cfg.weight_decay >= 0) || !(cfg.eps > 0)) {
    throw ParameterError("train config: lr_peak and weight_decay must be >= 0, eps > 0");
  }
  if (cfg.warmup_steps < 0 || cfg.total_steps < 0) throw ParameterError("train config: step counts must be >= 0");
  if (cfg.total_steps > 0 && cfg.warmup_steps > cfg.total_steps) {
    throw ParameterError("train config: warmup_steps exceeds total_steps");
  }
  if (cfg.batch_size < 1) throw ParameterError("train config: batch_size must be >= 1");
  if (cfg.total_steps == 0 && cfg.epochs < 1) throw ParameterError("train config: epochs must be >= 1");
  if (cfg.eval_interval < 0) throw ParameterError("train config: eval_interval must be >= 0");
}

OptimState init_optim_state(const DecoderParams& like) { return {0, zeros_like(like), zeros_like(like)}; }

void adamw_step(DecoderParams& p, const DecoderParams& g, OptimState& st, const TrainConfig& cfg, double lr) {
  if (p.tensors.size() != g.tensors.size() || p.tensors.size() != st.m.tensors.size()) {
    throw DimensionError("adamw_step: parameter, gradient and state layouts differ");
  }
  const long step = st.step + 1;
  for (std::size_t i = 0; i < g.tensors.size(); ++i) {
    if (g.tensors[i].numel() != p.tensors[i].numel()) {
      throw DimensionError("adamw_step: gradient shape mismatch for " + p.tensors[i].name);
    }
    for (double v : g.tensors[i].values) {
      if (!std::isfinite(v)) {
        throw TrainingError("non-finite gradient in " + p.tensors[i].name + " at step " + std::to_string(step), step);
      }
    }
  }
  st.step = step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    auto& w = p.tensors[i].values;
    auto& m = st.m.tensors[i].values;
    auto& v = st.v.tensors[i].values;
    const auto& gr = g.tensors[i].values;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gr[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gr[j] * gr[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] *= decay;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double lr_schedule(long step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) {
    throw ParameterError("lr_schedule: step " + std::to_string(step) + " outside [0, " +
                         std::to_string(cfg.total_steps) + "]");
  }
  if (step <= cfg.warmup_steps) {
    if (cfg.warmup_steps == 0) return cfg.lr_peak;
    return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double mean_bce(const DecoderParams& p, std::span<const SyntheticScene> scenes) {
  if (scenes.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& sc : scenes) sum += bce_loss(decoder_forward(sc.features, p), sc.target);
  return sum / static_cast<double>(scenes.size());
}

TrainResult train(const TrainConfig& cfg_in, const DecoderConfig& decoder, const Dataset& data) {
  if (data.train.empty()) throw ParameterError("train: dataset has no training scenes");
  TrainConfig cfg = cfg_in;
  validate(cfg);
  const long per_epoch = steps_per_epoch(cfg, data.train.size());
  if (cfg.total_steps == 0) cfg.total_steps = per_epoch * cfg.epochs;
  if (cfg.warmup_steps > cfg.total_steps) throw ParameterError("train: warmup_steps exceeds total_steps");

  TrainResult res{init_params(mix_seed(cfg.seed, 1), decoder), {}};
  OptimState state = init_optim_state(res.params);

  auto record = [&](long step) {
    const double train_bce = mean_bce(res.params, data.train);
    const double eval_bce = mean_bce(res.params, data.held_out);
    if (!std::isfinite(train_bce)) {
      throw TrainingError("non-finite training loss at step " + std::to_string(step), step);
    }
    res.curve.push_back({step, lr_schedule(step, cfg), train_bce, eval_bce});
  };
  record(0);

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (long step = 1; step <= cfg.total_steps; ++step) {
    const long in_epoch = (step - 1) % per_epoch;
    if (in_epoch == 0) {
      const long epoch = (step - 1) / per_epoch;
      Rng rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.next_u64() % i]);
      }
    }
    const std::size_t begin = static_cast<std::size_t>(in_epoch) * batch;
    const std::size_t end = std::min(begin + batch, order.size());

    DecoderParams grad = zeros_like(res.params);
    double batch_loss = 0.0;
    for (std::size_t b = begin; b < end; ++b) {
      const auto& sc = data.train[order[b]];
      auto lg = decoder_backward(sc.features, res.params, sc.target);
      batch_loss += lg.loss;
      for (std::size_t t = 0; t < grad.tensors.size(); ++t) {
        auto& dst = grad.tensors[t].values;
        const auto& src = lg.grad.tensors[t].values;
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
    if (!std::isfinite(batch_loss)) {
      throw TrainingError("non-finite batch loss at step " + std::to_string(step), step);
    }
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (auto& t : grad.tensors) {
      for (auto& v : t.values) v *= inv;
    }
    adamw_step(res.params, grad, state, cfg, lr_schedule(step, cfg));

    if (step == cfg.total_steps || (cfg.eval_interval > 0 && step % cfg.eval_interval == 0)) record(step);
  }
  return res;
}

}  // namespace affmap
