#include "affmap/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "affmap/error.hpp"

namespace affmap {
namespace {

void require_positive_dims(int width, int height, const char* what) {
  if (width < 1 || height < 1) {
    throw DimensionError(std::string(what) + ": dimensions must be positive, got " +
                         std::to_string(width) + "x" + std::to_string(height));
  }
}

void require_unit_interval(double v, std::size_t i) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ParameterError("heatmap value at index " + std::to_string(i) + " is outside [0, 1]: " +
                         std::to_string(v));
  }
}

}  // namespace

Heatmap::Heatmap(int width, int height, double fill) : width_(width), height_(height) {
  require_positive_dims(width, height, "heatmap");
  require_unit_interval(fill, 0);
  values_.assign(static_cast<std::size_t>(width) * height, fill);
}

Heatmap::Heatmap(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  require_positive_dims(width, height, "heatmap");
  if (values_.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionError("heatmap: expected " + std::to_string(width * height) + " values, got " +
                         std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) require_unit_interval(values_[i], i);
}

void Heatmap::set(int x, int y, double v) {
  require_unit_interval(v, index(x, y));
  values_[index(x, y)] = v;
}

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
  require_positive_dims(width, height, "mask");
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  require_positive_dims(width, height, "mask");
  if (bits_.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionError("mask: expected " + std::to_string(width * height) + " bits, got " +
                         std::to_string(bits_.size()));
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

FeatureMap::FeatureMap(int channels, int width, int height)
    : channels_(channels), width_(width), height_(height) {
  if (channels < 1) throw DimensionError("feature map: channel count must be positive");
  require_positive_dims(width, height, "feature map");
  values_.assign(static_cast<std::size_t>(channels) * width * height, 0.0);
}

FeatureMap::FeatureMap(int channels, int width, int height, std::vector<double> values)
    : channels_(channels), width_(width), height_(height), values_(std::move(values)) {
  if (channels < 1) throw DimensionError("feature map: channel count must be positive");
  require_positive_dims(width, height, "feature map");
  if (values_.size() != static_cast<std::size_t>(channels) * width * height) {
    throw DimensionError("feature map: expected " + std::to_string(channels * width * height) +
                         " values, got " + std::to_string(values_.size()));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw ParameterError("feature map: non-finite value");
  }
}

Peak argmax_peak(const GridView& grid) {
  if (grid.width < 1 || grid.height < 1 || grid.values.empty()) {
    throw DimensionError("argmax_peak: empty grid");
  }
  if (grid.values.size() != static_cast<std::size_t>(grid.width) * grid.height) {
    throw DimensionError("argmax_peak: value count does not match grid shape");
  }
  // max_element keeps the first maximum, which is the lowest linear index.
  auto it = std::max_element(grid.values.begin(), grid.values.end());
  const auto idx = static_cast<int>(it - grid.values.begin());
  return {{idx % grid.width, idx / grid.width}, *it};
}

std::vector<Peak> topk_peaks(const GridView& grid, int k, double suppression_radius) {
  if (k < 1) throw ParameterError("topk_peaks: k must be >= 1");
  if (!(suppression_radius >= 0.0)) throw ParameterError("topk_peaks: radius must be >= 0");

  std::vector<double> residual(grid.values.begin(), grid.values.end());
  const GridView work{grid.width, grid.height, residual};
  const double r2 = suppression_radius * suppression_radius;
  const int reach = static_cast<int>(std::floor(suppression_radius));

  std::vector<Peak> picks;
  while (static_cast<int>(picks.size()) < k) {
    const Peak p = argmax_peak(work);
    if (p.value <= 0.0) break;
    picks.push_back(p);
    for (int y = std::max(0, p.coord.y - reach); y <= std::min(grid.height - 1, p.coord.y + reach); ++y) {
      for (int x = std::max(0, p.coord.x - reach); x <= std::min(grid.width - 1, p.coord.x + reach); ++x) {
        const double dx = x - p.coord.x;
        const double dy = y - p.coord.y;
        if (dx * dx + dy * dy <= r2) residual[static_cast<std::size_t>(y) * grid.width + x] = 0.0;
      }
    }
  }
  std::stable_sort(picks.begin(), picks.end(), [&](const Peak& a, const Peak& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.coord.y * grid.width + a.coord.x < b.coord.y * grid.width + b.coord.x;
  });
  return picks;
}

}  // namespace affmap
