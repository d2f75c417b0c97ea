#pragma once

// Ground-truth heatmap synthesis from sparse supervision: Gaussian bumps around
// points (max-aggregated), axis-aligned elliptical Gaussians for boxes, and a
// Gaussian of the exact Euclidean distance to a goal mask.

#include <string>
#include <variant>
#include <vector>

#include "affmap/grid.hpp"

namespace affmap {

// Reference output resolution that the default sigma is expressed at.
inline constexpr int kReferenceResolution = 224;
inline constexpr double kReferenceSigma = 5.0;
// sigma_x = alpha * box_width puts the box edge three sigmas out.
inline constexpr double kDefaultBoxAlpha = 1.0 / 6.0;

// 5 px at 224x224, scaled with the shorter side.
double default_sigma(int width, int height);

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct PointSupervision {
  std::vector<Point2> points;
  double sigma = kReferenceSigma;

  friend bool operator==(const PointSupervision&, const PointSupervision&) = default;
};

struct BoxSupervision {
  Point2 center;
  double box_width = 0.0;
  double box_height = 0.0;
  double alpha = kDefaultBoxAlpha;

  friend bool operator==(const BoxSupervision&, const BoxSupervision&) = default;
};

struct MaskSupervision {
  BinaryMask mask;
  double sigma = kReferenceSigma;

  friend bool operator==(const MaskSupervision&, const MaskSupervision&) = default;
};

using Supervision = std::variant<PointSupervision, BoxSupervision, MaskSupervision>;

struct AnnotationRecord {
  std::string id;
  std::string instruction;
  int width = 0;
  int height = 0;
  Supervision supervision;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

class DistanceField {
 public:
  DistanceField(int width, int height, std::vector<double> distances)
      : width_(width), height_(height), distances_(std::move(distances)) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  double at(int x, int y) const { return distances_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const double> values() const noexcept { return distances_; }

 private:
  int width_;
  int height_;
  std::vector<double> distances_;
};

Heatmap point_heatmap(const PointSupervision& s, int width, int height);
Heatmap box_heatmap(const BoxSupervision& s, int width, int height);

// Exact squared Euclidean distance to the nearest foreground pixel, computed
// with two separable lower-envelope passes (columns, then rows). Values are
// exact integers. Throws SupervisionError when the mask has no foreground.
std::vector<double> squared_distance_transform(const BinaryMask& mask);
DistanceField euclidean_distance_transform(const BinaryMask& mask);

Heatmap mask_heatmap(const MaskSupervision& s, int width, int height);

// Dispatches on the supervision payload. The record's width/height are not
// used; the caller picks the output grid.
Heatmap synthesize(const AnnotationRecord& a, int width, int height);
inline Heatmap synthesize(const AnnotationRecord& a) { return synthesize(a, a.width, a.height); }

}  // namespace affmap
