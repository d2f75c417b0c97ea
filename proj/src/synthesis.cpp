#include "affmap/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "affmap/error.hpp"

namespace affmap {
namespace {

void require_grid(int width, int height) {
  if (width < 1 || height < 1) {
    throw DimensionError("synthesis: output grid must be at least 1x1, got " +
                         std::to_string(width) + "x" + std::to_string(height));
  }
}

void require_sigma(double sigma, const char* what) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ParameterError(std::string(what) + ": sigma must be positive and finite, got " +
                         std::to_string(sigma));
  }
}

// Stand-in for +infinity that keeps the envelope arithmetic finite.
constexpr double kFar = 1e20;

// One-dimensional squared distance transform of a sampled function
// (lower envelope of parabolas rooted at each sample).
void envelope_1d(const double* f, double* out, int n, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = 0.0;
    while (true) {
      const int r = v[k];
      s = ((f[q] + double(q) * q) - (f[r] + double(r) * r)) / (2.0 * q - 2.0 * r);
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double d = q - v[k];
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace

double default_sigma(int width, int height) {
  return kReferenceSigma * std::min(width, height) / static_cast<double>(kReferenceResolution);
}

Heatmap point_heatmap(const PointSupervision& s, int width, int height) {
  require_grid(width, height);
  require_sigma(s.sigma, "point_heatmap");
  if (s.points.empty()) throw SupervisionError("point_heatmap: at least one point is required");

  const double inv = 1.0 / (2.0 * s.sigma * s.sigma);
  std::vector<double> values(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      // max_i exp(-d_i^2 / 2s^2) == exp(-min_i d_i^2 / 2s^2)
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : s.points) {
        const double dx = x - p.x;
        const double dy = y - p.y;
        best = std::min(best, dx * dx + dy * dy);
      }
      values[static_cast<std::size_t>(y) * width + x] = std::exp(-best * inv);
    }
  }
  return Heatmap(width, height, std::move(values));
}

Heatmap box_heatmap(const BoxSupervision& s, int width, int height) {
  require_grid(width, height);
  if (!(s.box_width > 0.0) || !(s.box_height > 0.0)) {
    throw ParameterError("box_heatmap: box extent must be positive");
  }
  if (!(s.alpha > 0.0) || !std::isfinite(s.alpha)) {
    throw ParameterError("box_heatmap: alpha must be positive and finite");
  }
  const double sx = s.alpha * s.box_width;
  const double sy = s.alpha * s.box_height;
  const double inv_x = 1.0 / (2.0 * sx * sx);
  const double inv_y = 1.0 / (2.0 * sy * sy);

  std::vector<double> values(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const double dy = y - s.center.y;
    for (int x = 0; x < width; ++x) {
      const double dx = x - s.center.x;
      values[static_cast<std::size_t>(y) * width + x] = std::exp(-(dx * dx * inv_x + dy * dy * inv_y));
    }
  }
  return Heatmap(width, height, std::move(values));
}

std::vector<double> squared_distance_transform(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  if (w < 1 || h < 1) throw DimensionError("distance transform: empty mask");
  if (mask.count() == 0) throw SupervisionError("distance transform: mask has no foreground pixels");

  const int n = std::max(w, h);
  std::vector<double> f(n), out(n), z(n + 1);
  std::vector<int> v(n);
  std::vector<double> grid(static_cast<std::size_t>(w) * h);

  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = mask.at(x, y) ? 0.0 : kFar;
    envelope_1d(f.data(), out.data(), h, v.data(), z.data());
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = out[y];
  }
  for (int y = 0; y < h; ++y) {
    double* row = grid.data() + static_cast<std::size_t>(y) * w;
    std::copy(row, row + w, f.begin());
    envelope_1d(f.data(), row, w, v.data(), z.data());
  }
  return grid;
}

DistanceField euclidean_distance_transform(const BinaryMask& mask) {
  auto d = squared_distance_transform(mask);
  for (auto& v : d) v = std::sqrt(v);
  return DistanceField(mask.width(), mask.height(), std::move(d));
}

Heatmap mask_heatmap(const MaskSupervision& s, int width, int height) {
  require_grid(width, height);
  require_sigma(s.sigma, "mask_heatmap");
  if (s.mask.width() != width || s.mask.height() != height) {
    throw DimensionError("mask_heatmap: mask is " + std::to_string(s.mask.width()) + "x" +
                         std::to_string(s.mask.height()) + ", output grid is " +
                         std::to_string(width) + "x" + std::to_string(height));
  }
  auto values = squared_distance_transform(s.mask);
  const double inv = 1.0 / (2.0 * s.sigma * s.sigma);
  for (auto& v : values) v = std::exp(-v * inv);
  return Heatmap(width, height, std::move(values));
}

Heatmap synthesize(const AnnotationRecord& a, int width, int height) {
  return std::visit(
      [&](const auto& s) -> Heatmap {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointSupervision>) {
          return point_heatmap(s, width, height);
        } else if constexpr (std::is_same_v<T, BoxSupervision>) {
          return box_heatmap(s, width, height);
        } else {
          return mask_heatmap(s, width, height);
        }
      },
      a.supervision);
}

}  // namespace affmap
