#pragma once

// Procedural scenes for desk-scale training: a handful of axis-aligned
// "objects" on an (s*h) x (s*w) canvas, a language-conditioned feature grid
// that stands in for backbone output, and the synthesized ground truth.
//
// Feature channels:
//   0  coverage of the queried target (object footprint or free-space region)
//   1  coverage of all object footprints
//   2  x offset of the target locus inside its cell, in cell units (locus cell only)
//   3  y offset, same convention
//   4  query is "point at object"      (broadcast)
//   5  query is "box around object"    (broadcast)
//   6  query is "free space between"   (broadcast)
//   7  logit of the cell maximum of the target heatmap, clamped to
//      [kCellPeakClamp, 1 - kCellPeakClamp]
//   8+ zero-mean Gaussian noise

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "affmap/grid.hpp"
#include "affmap/synthesis.hpp"

namespace affmap {

inline constexpr int kSceneFixedChannels = 8;
inline constexpr double kCellPeakClamp = 0.01;

enum class SceneKind { kPoint, kBox, kFreeSpace };

struct SceneConfig {
  int feature_width = 16;
  int feature_height = 16;
  int scale = 4;
  int channels = 10;
  int min_objects = 1;
  int max_objects = 4;
  // Relative frequencies of the three query kinds.
  double point_weight = 0.4;
  double box_weight = 0.3;
  double free_space_weight = 0.3;
  double sigma = 0.0;  // <= 0: default_sigma of the output grid
  double alpha = kDefaultBoxAlpha;
  double noise = 0.1;
  // Object extents as fractions of the shorter output side.
  double min_extent = 0.10;
  double max_extent = 0.25;

  int out_width() const noexcept { return feature_width * scale; }
  int out_height() const noexcept { return feature_height * scale; }

  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

// Throws ParameterError for invalid configurations.
void validate(const SceneConfig& cfg);

struct SceneObject {
  Point2 center;
  double width = 0.0;
  double height = 0.0;

  bool covers(double x, double y) const {
    return std::abs(x - center.x) <= 0.5 * width && std::abs(y - center.y) <= 0.5 * height;
  }
};

struct SyntheticScene {
  SceneKind kind = SceneKind::kPoint;
  FeatureMap features;
  AnnotationRecord annotation;
  Heatmap target;
  // Pixels where a predicted peak counts as a hit.
  BinaryMask success_region;
  std::vector<SceneObject> objects;
};

SyntheticScene generate_synthetic_scene(std::uint64_t seed, const SceneConfig& cfg);

// Output-resolution footprint of one object.
BinaryMask footprint_mask(const SceneObject& obj, int width, int height);

struct Dataset {
  SceneConfig scene;
  std::vector<SyntheticScene> train;
  std::vector<SyntheticScene> held_out;
};

// Scene i of the training split uses mix_seed(seed, i); held-out scenes use a
// disjoint stream.
Dataset generate_dataset(std::uint64_t seed, int n_train, int n_held_out, const SceneConfig& cfg);

// FNV-1a over features, targets and success regions.
std::uint64_t dataset_hash(std::span<const SyntheticScene> scenes);

}  // namespace affmap
