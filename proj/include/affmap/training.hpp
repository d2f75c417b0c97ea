#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "affmap/grid.hpp"
#include "affmap/params.hpp"
#include "affmap/scene.hpp"

namespace affmap {

// Predictions are clamped into [eps, 1 - eps] before the log.
inline constexpr double kBceEpsilon = 1e-7;

// Mean over pixels of -[t ln p + (1 - t) ln(1 - p)].
double bce_loss(const Heatmap& pred, const Heatmap& target);

struct LossAndGrad {
  double loss = 0.0;
  DecoderParams grad;
};

// Exact reverse-mode gradient of bce_loss(decoder_forward(f, p), target)
// with respect to every tensor in `p`. Works for all decoder kinds.
LossAndGrad decoder_backward(const FeatureMap& f, const DecoderParams& p, const Heatmap& target);

// Same as decoder_backward; rejects non-AHD parameters.
LossAndGrad ahd_backward(const FeatureMap& f, const DecoderParams& p, const Heatmap& target);

struct TrainConfig {
  double lr_peak = 3e-5;
  long warmup_steps = 400;
  long total_steps = 0;  // 0: derived as epochs * ceil(train size / batch size)
  int epochs = 2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.1;
  double eps = 1e-8;
  int batch_size = 16;
  std::uint64_t seed = 0;
  long eval_interval = 0;  // 0: record only the first and last step

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Throws ParameterError for out-of-range fields.
void validate(const TrainConfig& cfg);

struct OptimState {
  long step = 0;
  DecoderParams m;
  DecoderParams v;
};

OptimState init_optim_state(const DecoderParams& like);

// One AdamW update with bias correction and decoupled weight decay. Throws
// TrainingError carrying the step index when a gradient is not finite.
void adamw_step(DecoderParams& p, const DecoderParams& g, OptimState& st, const TrainConfig& cfg, double lr);

// Linear warmup from 0 to lr_peak over warmup_steps, then cosine decay to 0 at
// total_steps.
double lr_schedule(long step, const TrainConfig& cfg);

struct LossPoint {
  long step = 0;
  double lr = 0.0;
  double train_bce = 0.0;
  double eval_bce = 0.0;  // NaN when the dataset has no held-out split
};

struct TrainResult {
  DecoderParams params;
  std::vector<LossPoint> curve;
};

// Mean BCE of the decoder over `scenes`.
double mean_bce(const DecoderParams& p, std::span<const SyntheticScene> scenes);

// Deterministic single-threaded training. Parameters come from
// init_params(mix_seed(cfg.seed, 1), decoder); each epoch uses a seeded
// shuffle. Throws TrainingError on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const DecoderConfig& decoder, const Dataset& data);

}  // namespace affmap
