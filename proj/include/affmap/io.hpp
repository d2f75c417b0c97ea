#pragma once

// File formats.
//
// AFHM heatmap (little-endian):
//   bytes 0-3   "AFHM"
//   u32         version (1)
//   u32 u32     width, height
//   f32 x w*h   values, row-major, each in [0, 1]
//
// AHDP decoder checkpoint (little-endian):
//   bytes 0-3   "AHDP"
//   u32         version (1)
//   u32 x 4     C, C_m, k, s   (C_m = k = 0 for the baselines)
//   per tensor, in DecoderParams order until end of file:
//     u32 rank, u32 x rank dims, f32 x prod(dims) values
//   The decoder kind is recovered from the tensor count and shapes.
//
// Annotation JSON: an array of records
//   {"id": str, "instruction": str, "width": int, "height": int, "type": "points"|"box"|"mask", ...}
//   points: "points": [[x, y], ...], optional "sigma"
//   box:    "center": [cx, cy], "box_width": w, "box_height": h, optional "alpha"
//   mask:   "rle": [start, length, start, length, ...] over the row-major pixel index,
//           optional "sigma"
//
// PGM export: binary P5, maxval 65535, big-endian samples, round(v * 65535)
// with halves rounded up.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "affmap/eval.hpp"
#include "affmap/grid.hpp"
#include "affmap/params.hpp"
#include "affmap/synthesis.hpp"
#include "affmap/training.hpp"

namespace affmap {

struct AnnotationDefaults {
  double sigma = 0.0;  // <= 0: default_sigma(width, height) of each record
  double alpha = kDefaultBoxAlpha;
};

std::vector<AnnotationRecord> parse_annotations(const std::filesystem::path& path,
                                                const AnnotationDefaults& defaults = {});
std::vector<AnnotationRecord> parse_annotations_json(std::string_view text, const AnnotationDefaults& defaults = {});

// Canonical run-length encoding: maximal foreground runs in ascending order,
// flattened as start, length pairs.
std::vector<std::uint32_t> encode_rle(const BinaryMask& mask);
// Rejects overlapping, unordered, empty or out-of-range runs with FormatError.
BinaryMask decode_rle(std::span<const std::uint32_t> runs, int width, int height);

void write_heatmap(std::ostream& out, const Heatmap& m);
Heatmap read_heatmap(std::istream& in);
void write_heatmap(const std::filesystem::path& path, const Heatmap& m);
Heatmap read_heatmap(const std::filesystem::path& path);

void export_pgm(std::ostream& out, const Heatmap& m);
void export_pgm(const std::filesystem::path& path, const Heatmap& m);
std::uint16_t pgm_sample(double v);

void write_checkpoint(std::ostream& out, const DecoderParams& p);
DecoderParams read_checkpoint(std::istream& in);
void write_checkpoint(const std::filesystem::path& path, const DecoderParams& p);
DecoderParams read_checkpoint(const std::filesystem::path& path);

// Experiment configuration JSON: {"train": {...}, "scene": {...},
// "train_scenes", "held_out_scenes", "decoder": {"compressed", "kernel"},
// "threshold"}. Missing keys keep their defaults; unknown keys are errors.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// CSV: step,lr,train_bce,eval_bce with round-trip precision.
std::string loss_curve_csv(std::span<const LossPoint> curve);
// CSV: kind,seed,accuracy,eval_bce,median_latency_us.
std::string ablation_csv(std::span<const AblationRow> rows);
// JSON report; timing fields are omitted when include_timing is false.
std::string eval_report_json(const EvalReport& rep, bool include_timing = true);

// Either {"cases": [{"id", "features": {channels, width, height, values},
// "region": {width, height, rle}}]} or {"synthetic": {"seed", "count",
// "scene": {...}}}.
std::vector<EvalCase> parse_eval_cases(std::string_view text);
std::vector<EvalCase> load_eval_cases(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace affmap
