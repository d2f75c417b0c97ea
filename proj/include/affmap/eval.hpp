#pragma once

// Peak-in-region evaluation with a confidence threshold, the decoder ablation
// harness, and latency measurement.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "affmap/grid.hpp"
#include "affmap/params.hpp"
#include "affmap/scene.hpp"
#include "affmap/training.hpp"

namespace affmap {

enum class Outcome { kHit, kMiss, kRefused };

std::string_view to_string(Outcome o);

// Refused when the peak value is below tau (a peak equal to tau acts);
// otherwise a hit iff the peak pixel lies in `region`.
Outcome evaluate_case(const Heatmap& m, const BinaryMask& region, double tau);

struct EvalCase {
  FeatureMap features;
  BinaryMask success_region;
  std::string instruction_id;
};

std::vector<EvalCase> eval_cases_from(std::span<const SyntheticScene> scenes);

struct LatencyStats {
  std::vector<double> samples_us;
  double mean_us = 0.0;
  double median_us = 0.0;
  double p95_us = 0.0;  // nearest rank
};

LatencyStats summarize_latency(std::vector<double> samples_us);

struct CaseRecord {
  std::string id;
  Peak peak;
  Outcome outcome = Outcome::kMiss;
  double latency_us = 0.0;
};

struct EvalReport {
  std::size_t n_cases = 0;
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t refusals = 0;
  double threshold = 0.0;
  double accuracy = 0.0;              // hits / n_cases
  double accuracy_non_refused = 0.0;  // hits / (n_cases - refusals), 0 if all refused
  std::vector<CaseRecord> cases;
  LatencyStats latency;
};

// Runs the decoder on each case in order; latency covers the forward pass only.
EvalReport run_eval(const DecoderParams& params, std::span<const EvalCase> cases, double tau);

// Times `repeats` decoder forwards on a seeded random feature map after
// `warmup` discarded passes. Requires repeats >= 10 and warmup >= 3.
LatencyStats time_inference(const DecoderParams& params, int feature_width, int feature_height, int repeats,
                            int warmup = 3, std::uint64_t seed = 0);

// Everything needed to reproduce one train + evaluate run.
struct ExperimentConfig {
  TrainConfig train;
  SceneConfig scene;
  int train_scenes = 512;
  int held_out_scenes = 128;
  int compressed = 16;  // AKG C_m
  int kernel = 5;       // AKG k
  double threshold = 0.0;

  DecoderConfig decoder(DecoderKind kind) const;
};

struct ExperimentResult {
  TrainResult training;
  EvalReport report;
  double eval_bce = 0.0;
  std::uint64_t train_hash = 0;
  std::uint64_t eval_hash = 0;
};

// Dataset and initialization are both derived from `seed`.
ExperimentResult run_experiment(const ExperimentConfig& cfg, DecoderKind kind, std::uint64_t seed);

struct AblationRow {
  DecoderKind kind = DecoderKind::kAhd;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double eval_bce = 0.0;
  double median_latency_us = 0.0;
  std::uint64_t train_hash = 0;
  std::uint64_t eval_hash = 0;
};

struct AblationSummary {
  DecoderKind kind = DecoderKind::kAhd;
  std::size_t runs = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // sample standard deviation
  double eval_bce_mean = 0.0;
  double eval_bce_std = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // seed-major, kinds in the order given
  std::vector<AblationSummary> summary;
};

// Trains and evaluates every kind on identical data for every seed. Throws
// ParameterError with fewer than two kinds or no seeds.
AblationTable ablate(std::span<const DecoderKind> kinds, const ExperimentConfig& cfg,
                     std::span<const std::uint64_t> seeds);

}  // namespace affmap
