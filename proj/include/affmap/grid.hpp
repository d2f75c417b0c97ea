#pragma once

// Grid types shared by every module.
//
// Coordinates: x is the column (left to right), y is the row (top to bottom),
// origin at the top-left pixel. Pixel centers sit on integer coordinates.
// All flat arrays are row-major: index = y * width + x.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace affmap {

struct PixelCoord {
  int x = 0;
  int y = 0;

  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

// Read-only view over a dense scalar grid. Values are not range-checked, so
// peak extraction also works on unnormalized scores.
struct GridView {
  int width = 0;
  int height = 0;
  std::span<const double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Dense affordance map with every value in [0, 1].
class Heatmap {
 public:
  Heatmap() = default;
  // Filled with `fill`.
  Heatmap(int width, int height, double fill = 0.0);
  // Takes ownership of `values`; throws DimensionError on size mismatch and
  // ParameterError if any value falls outside [0, 1] or is not finite.
  Heatmap(int width, int height, std::vector<double> values);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double at(int x, int y) const { return values_[index(x, y)]; }
  void set(int x, int y, double v);

  std::span<const double> values() const noexcept { return values_; }
  GridView view() const noexcept { return {width_, height_, values_}; }

  friend bool operator==(const Heatmap&, const Heatmap&) = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool on) { bits_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0; }
  bool contains(PixelCoord p) const {
    return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_ && at(p.x, p.y);
  }

  std::size_t count() const noexcept;
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// C x h x w feature grid, channel-major then row-major.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int width, int height);
  FeatureMap(int channels, int width, int height, std::vector<double> values);

  int channels() const noexcept { return channels_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int cells() const noexcept { return width_ * height_; }

  double at(int c, int x, int y) const { return values_[index(c, x, y)]; }
  double& at(int c, int x, int y) { return values_[index(c, x, y)]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t index(int c, int x, int y) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

struct Peak {
  PixelCoord coord;
  double value = 0.0;

  friend bool operator==(const Peak&, const Peak&) = default;
};

// Highest value; ties go to the lowest row-major index.
Peak argmax_peak(const GridView& grid);
inline Peak argmax_peak(const Heatmap& m) { return argmax_peak(m.view()); }

// Greedy peak picking: take the argmax, zero every pixel within Euclidean
// distance `suppression_radius` of it, repeat. Stops after k picks or once the
// residual maximum is <= 0.
std::vector<Peak> topk_peaks(const GridView& grid, int k, double suppression_radius);
inline std::vector<Peak> topk_peaks(const Heatmap& m, int k, double suppression_radius) {
  return topk_peaks(m.view(), k, suppression_radius);
}

}  // namespace affmap
