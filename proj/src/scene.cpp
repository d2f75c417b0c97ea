#include "affmap/scene.hpp"

#include <algorithm>
#include <cstring>
#include <optional>

#include "affmap/error.hpp"
#include "affmap/random.hpp"

namespace affmap {
namespace {

constexpr double kObjectGap = 2.0;
constexpr int kMaxPlacementAttempts = 2000;

struct Layout {
  std::vector<SceneObject> objects;
  BinaryMask region;  // free-space scenes only
  Point2 locus;
};

bool separated(const SceneObject& a, const SceneObject& b) {
  return std::abs(a.center.x - b.center.x) >= 0.5 * (a.width + b.width) + kObjectGap ||
         std::abs(a.center.y - b.center.y) >= 0.5 * (a.height + b.height) + kObjectGap;
}

std::optional<std::vector<SceneObject>> place_objects(Rng& rng, int n, const SceneConfig& cfg) {
  const int w = cfg.out_width();
  const int h = cfg.out_height();
  const double shorter = std::min(w, h);
  std::vector<SceneObject> objs;
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.width = rng.uniform(cfg.min_extent, cfg.max_extent) * shorter;
    o.height = rng.uniform(cfg.min_extent, cfg.max_extent) * shorter;
    o.center.x = rng.uniform(0.5 * o.width, (w - 1) - 0.5 * o.width);
    o.center.y = rng.uniform(0.5 * o.height, (h - 1) - 0.5 * o.height);
    for (const auto& other : objs) {
      if (!separated(o, other)) return std::nullopt;
    }
    objs.push_back(o);
  }
  return objs;
}

// Disk around the midpoint of the first two objects, minus every footprint
// grown by one pixel. Layouts where the footprints remove more than half of
// the disk are rejected.
std::optional<BinaryMask> free_space_region(const std::vector<SceneObject>& objs, int w, int h) {
  const auto& a = objs[0];
  const auto& b = objs[1];
  const Point2 mid{0.5 * (a.center.x + b.center.x), 0.5 * (a.center.y + b.center.y)};
  const double dist = std::hypot(a.center.x - b.center.x, a.center.y - b.center.y);
  if (dist < 0.25 * std::min(w, h)) return std::nullopt;
  const double radius = std::max(1.5, 0.15 * dist);

  BinaryMask region(w, h);
  int disk = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (std::hypot(x - mid.x, y - mid.y) > radius) continue;
      ++disk;
      bool blocked = false;
      for (const auto& o : objs) {
        SceneObject grown = o;
        grown.width += 2.0;
        grown.height += 2.0;
        blocked = blocked || grown.covers(x, y);
      }
      if (!blocked) region.set(x, y, true);
    }
  }
  const int mx = static_cast<int>(std::lround(mid.x));
  const int my = static_cast<int>(std::lround(mid.y));
  const int kept = static_cast<int>(region.count());
  if (kept < 5 || 2 * kept < disk || !region.contains({mx, my})) return std::nullopt;
  return region;
}

Layout make_layout(Rng& rng, SceneKind kind, const SceneConfig& cfg) {
  const int min_n = kind == SceneKind::kFreeSpace ? std::max(2, cfg.min_objects) : cfg.min_objects;
  const int max_n = std::max(min_n, cfg.max_objects);
  int n = rng.uniform_int(min_n, max_n);
  while (true) {
    for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
      auto objs = place_objects(rng, n, cfg);
      if (!objs) continue;
      if (kind != SceneKind::kFreeSpace) {
        const Point2 locus = (*objs)[0].center;
        return {std::move(*objs), BinaryMask(cfg.out_width(), cfg.out_height()), locus};
      }
      auto region = free_space_region(*objs, cfg.out_width(), cfg.out_height());
      if (!region) continue;
      const auto& a = (*objs)[0];
      const auto& b = (*objs)[1];
      const Point2 mid{0.5 * (a.center.x + b.center.x), 0.5 * (a.center.y + b.center.y)};
      return {std::move(*objs), std::move(*region), mid};
    }
    if (n <= min_n) throw ParameterError("scene generator: objects do not fit on the canvas");
    --n;
  }
}

double cell_coverage(const BinaryMask& mask, int cx, int cy, int s) {
  int hits = 0;
  for (int y = cy * s; y < (cy + 1) * s; ++y) {
    for (int x = cx * s; x < (cx + 1) * s; ++x) hits += mask.at(x, y) ? 1 : 0;
  }
  return static_cast<double>(hits) / (s * s);
}

BinaryMask superlevel(const Heatmap& m, double level) {
  BinaryMask out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) out.set(x, y, m.at(x, y) >= level);
  }
  return out;
}

template <typename T>
void fnv_bytes(std::uint64_t& h, const T* data, std::size_t n) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n * sizeof(T); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

void validate(const SceneConfig& cfg) {
  if (cfg.feature_width < 1 || cfg.feature_height < 1 || cfg.scale < 1) {
    throw ParameterError("scene config: feature dims and scale must be positive");
  }
  if (cfg.channels < kSceneFixedChannels) {
    throw ParameterError("scene config: at least " + std::to_string(kSceneFixedChannels) +
                         " channels are required");
  }
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects) {
    throw ParameterError("scene config: object count range is invalid");
  }
  if (cfg.point_weight < 0 || cfg.box_weight < 0 || cfg.free_space_weight < 0 ||
      cfg.point_weight + cfg.box_weight + cfg.free_space_weight <= 0) {
    throw ParameterError("scene config: supervision mix weights must be non-negative with a positive sum");
  }
  if (cfg.free_space_weight > 0 && cfg.max_objects < 2) {
    throw ParameterError("scene config: free-space queries need at least two objects");
  }
  if (!(cfg.alpha > 0) || cfg.noise < 0) throw ParameterError("scene config: alpha must be > 0, noise >= 0");
  if (!(cfg.min_extent > 0) || cfg.max_extent < cfg.min_extent || cfg.max_extent > 0.9) {
    throw ParameterError("scene config: extents must satisfy 0 < min <= max <= 0.9");
  }
}

BinaryMask footprint_mask(const SceneObject& obj, int width, int height) {
  BinaryMask m(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) m.set(x, y, obj.covers(x, y));
  }
  return m;
}

SyntheticScene generate_synthetic_scene(std::uint64_t seed, const SceneConfig& cfg) {
  validate(cfg);
  Rng rng(seed);
  const int w = cfg.out_width();
  const int h = cfg.out_height();
  const int s = cfg.scale;
  const double sigma = cfg.sigma > 0 ? cfg.sigma : default_sigma(w, h);

  const double total = cfg.point_weight + cfg.box_weight + cfg.free_space_weight;
  const double pick = rng.uniform() * total;
  const SceneKind kind = pick < cfg.point_weight                     ? SceneKind::kPoint
                         : pick < cfg.point_weight + cfg.box_weight ? SceneKind::kBox
                                                                     : SceneKind::kFreeSpace;

  Layout layout = make_layout(rng, kind, cfg);
  const auto& target_obj = layout.objects[0];

  SyntheticScene scene;
  scene.kind = kind;
  scene.objects = layout.objects;
  scene.annotation.id = "scene-" + std::to_string(seed);
  scene.annotation.width = w;
  scene.annotation.height = h;
  switch (kind) {
    case SceneKind::kPoint:
      scene.annotation.instruction = "point at object 0";
      scene.annotation.supervision = PointSupervision{{target_obj.center}, sigma};
      break;
    case SceneKind::kBox:
      scene.annotation.instruction = "locate object 0";
      scene.annotation.supervision =
          BoxSupervision{target_obj.center, target_obj.width, target_obj.height, cfg.alpha};
      break;
    case SceneKind::kFreeSpace:
      scene.annotation.instruction = "free space between object 0 and object 1";
      scene.annotation.supervision = MaskSupervision{layout.region, sigma};
      break;
  }
  scene.target = synthesize(scene.annotation, w, h);
  switch (kind) {
    case SceneKind::kPoint: scene.success_region = superlevel(scene.target, 0.5); break;
    case SceneKind::kBox: scene.success_region = footprint_mask(target_obj, w, h); break;
    case SceneKind::kFreeSpace: scene.success_region = layout.region; break;
  }

  const BinaryMask target_cover =
      kind == SceneKind::kFreeSpace ? layout.region : footprint_mask(target_obj, w, h);
  BinaryMask all_objects(w, h);
  for (const auto& o : layout.objects) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (o.covers(x, y)) all_objects.set(x, y, true);
      }
    }
  }

  FeatureMap f(cfg.channels, cfg.feature_width, cfg.feature_height);
  const int lcx = std::clamp(static_cast<int>(std::floor((layout.locus.x + 0.5) / s)), 0, cfg.feature_width - 1);
  const int lcy = std::clamp(static_cast<int>(std::floor((layout.locus.y + 0.5) / s)), 0, cfg.feature_height - 1);
  const int query_channel = 4 + static_cast<int>(kind);
  for (int cy = 0; cy < cfg.feature_height; ++cy) {
    for (int cx = 0; cx < cfg.feature_width; ++cx) {
      f.at(0, cx, cy) = cell_coverage(target_cover, cx, cy, s);
      f.at(1, cx, cy) = cell_coverage(all_objects, cx, cy, s);
      f.at(query_channel, cx, cy) = 1.0;
    }
  }
  for (int cy = 0; cy < cfg.feature_height; ++cy) {
    for (int cx = 0; cx < cfg.feature_width; ++cx) {
      double peak = 0.0;
      for (int y = cy * s; y < (cy + 1) * s; ++y) {
        for (int x = cx * s; x < (cx + 1) * s; ++x) peak = std::max(peak, scene.target.at(x, y));
      }
      peak = std::clamp(peak, kCellPeakClamp, 1.0 - kCellPeakClamp);
      f.at(7, cx, cy) = std::log(peak / (1.0 - peak));
    }
  }
  f.at(2, lcx, lcy) = (layout.locus.x - (lcx * s + 0.5 * (s - 1))) / s;
  f.at(3, lcx, lcy) = (layout.locus.y - (lcy * s + 0.5 * (s - 1))) / s;
  for (int c = kSceneFixedChannels; c < cfg.channels; ++c) {
    for (int cy = 0; cy < cfg.feature_height; ++cy) {
      for (int cx = 0; cx < cfg.feature_width; ++cx) f.at(c, cx, cy) = cfg.noise * rng.normal();
    }
  }
  scene.features = std::move(f);
  return scene;
}

Dataset generate_dataset(std::uint64_t seed, int n_train, int n_held_out, const SceneConfig& cfg) {
  validate(cfg);
  if (n_train < 0 || n_held_out < 0) throw ParameterError("dataset: scene counts must be >= 0");
  Dataset d{cfg, {}, {}};
  d.train.reserve(static_cast<std::size_t>(n_train));
  d.held_out.reserve(static_cast<std::size_t>(n_held_out));
  for (int i = 0; i < n_train; ++i) {
    d.train.push_back(generate_synthetic_scene(mix_seed(seed, static_cast<std::uint64_t>(i)), cfg));
  }
  for (int i = 0; i < n_held_out; ++i) {
    d.held_out.push_back(
        generate_synthetic_scene(mix_seed(seed, (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(i)), cfg));
  }
  return d;
}

std::uint64_t dataset_hash(std::span<const SyntheticScene> scenes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& sc : scenes) {
    fnv_bytes(h, sc.features.values().data(), sc.features.values().size());
    fnv_bytes(h, sc.target.values().data(), sc.target.values().size());
    fnv_bytes(h, sc.success_region.bits().data(), sc.success_region.bits().size());
  }
  return h;
}

}  // namespace affmap
