#include "affmap/io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "affmap/error.hpp"

namespace affmap {
namespace {

using nlohmann::json;

constexpr std::array<char, 4> kHeatmapMagic{'A', 'F', 'H', 'M'};
constexpr std::array<char, 4> kCheckpointMagic{'A', 'H', 'D', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_f32(std::ostream& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

// Byte reader that tracks its offset for error messages.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  std::uint64_t offset() const { return offset_; }

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(std::string("truncated input at byte offset ") +
                        std::to_string(offset_ + static_cast<std::uint64_t>(in_.gcount())) + " while reading " +
                        what);
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4, what);
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

void expect_magic(Reader& r, const std::array<char, 4>& magic, const char* format) {
  std::array<char, 4> got{};
  r.bytes(got.data(), 4, "magic");
  if (got != magic) throw FormatError(std::string("bad magic at byte offset 0: not an ") + format + " file");
  const auto version = r.u32("version");
  if (version != kFormatVersion) {
    throw FormatError(std::string("unsupported ") + format + " version " + std::to_string(version) +
                      " at byte offset 4");
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

void finish(std::ostream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---- JSON helpers ---------------------------------------------------------

double number(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) throw FormatError(ctx + ": missing field '" + key + "'");
  if (!j[key].is_number()) throw FormatError(ctx + ": field '" + key + "' must be a number");
  return j[key].get<double>();
}

long integer(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) throw FormatError(ctx + ": missing field '" + key + "'");
  if (!j[key].is_number_integer()) throw FormatError(ctx + ": field '" + key + "' must be an integer");
  return j[key].get<long>();
}

Point2 point(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw FormatError(ctx + ": expected an [x, y] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<std::uint32_t> rle_field(const json& j, const std::string& ctx) {
  if (!j.is_array()) throw FormatError(ctx + ": 'rle' must be an array");
  std::vector<std::uint32_t> runs;
  runs.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_unsigned()) throw FormatError(ctx + ": 'rle' entries must be non-negative integers");
    const auto x = v.get<std::uint64_t>();
    if (x > 0xffffffffULL) throw FormatError(ctx + ": 'rle' entry out of range");
    runs.push_back(static_cast<std::uint32_t>(x));
  }
  return runs;
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("malformed JSON in " + what + " at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw FormatError(ctx + ": unknown field '" + key + "'");
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& dst, const std::string& ctx) {
  if (!j.contains(key)) return;
  const auto& v = j[key];
  if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw FormatError(ctx + ": '" + key + "' must be a number");
    dst = v.get<double>();
  } else {
    if (!v.is_number_integer()) throw FormatError(ctx + ": '" + key + "' must be an integer");
    dst = v.get<T>();
  }
}

SceneConfig parse_scene(const json& j, const std::string& ctx) {
  if (!j.is_object()) throw FormatError(ctx + " must be an object");
  reject_unknown(j,
                 {"feature_width", "feature_height", "scale", "channels", "min_objects", "max_objects",
                  "point_weight", "box_weight", "free_space_weight", "sigma", "alpha", "noise", "min_extent",
                  "max_extent"},
                 ctx);
  SceneConfig s;
  maybe(j, "feature_width", s.feature_width, ctx);
  maybe(j, "feature_height", s.feature_height, ctx);
  maybe(j, "scale", s.scale, ctx);
  maybe(j, "channels", s.channels, ctx);
  maybe(j, "min_objects", s.min_objects, ctx);
  maybe(j, "max_objects", s.max_objects, ctx);
  maybe(j, "point_weight", s.point_weight, ctx);
  maybe(j, "box_weight", s.box_weight, ctx);
  maybe(j, "free_space_weight", s.free_space_weight, ctx);
  maybe(j, "sigma", s.sigma, ctx);
  maybe(j, "alpha", s.alpha, ctx);
  maybe(j, "noise", s.noise, ctx);
  maybe(j, "min_extent", s.min_extent, ctx);
  maybe(j, "max_extent", s.max_extent, ctx);
  try {
    validate(s);
  } catch (const ParameterError& e) {
    throw FormatError(ctx + ": " + e.what());
  }
  return s;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---- annotations -----------------------------------------------------------

std::vector<AnnotationRecord> parse_annotations(const std::filesystem::path& path,
                                                const AnnotationDefaults& defaults) {
  return parse_annotations_json(read_text_file(path), defaults);
}

std::vector<AnnotationRecord> parse_annotations_json(std::string_view text, const AnnotationDefaults& defaults) {
  const json doc = parse_json(text, "annotations");
  if (!doc.is_array()) throw FormatError("annotations: top level must be a JSON array of records");

  std::vector<AnnotationRecord> records;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& j = doc[i];
    std::string ctx = "record " + std::to_string(i);
    if (!j.is_object()) throw FormatError(ctx + ": must be an object");
    AnnotationRecord rec;
    if (j.contains("id")) {
      if (!j["id"].is_string()) throw FormatError(ctx + ": 'id' must be a string");
      rec.id = j["id"].get<std::string>();
    } else {
      rec.id = std::to_string(i);
    }
    ctx += " (id '" + rec.id + "')";
    if (j.contains("instruction")) {
      if (!j["instruction"].is_string()) throw FormatError(ctx + ": 'instruction' must be a string");
      rec.instruction = j["instruction"].get<std::string>();
    }
    const long w = integer(j, "width", ctx);
    const long h = integer(j, "height", ctx);
    if (w < 1 || h < 1 || w > 1 << 16 || h > 1 << 16) throw FormatError(ctx + ": width/height out of range");
    rec.width = static_cast<int>(w);
    rec.height = static_cast<int>(h);
    if (!j.contains("type") || !j["type"].is_string()) throw FormatError(ctx + ": missing string field 'type'");
    const auto type = j["type"].get<std::string>();
    const double sigma_default = defaults.sigma > 0 ? defaults.sigma : default_sigma(rec.width, rec.height);

    auto in_bounds = [&](Point2 p) {
      if (!(p.x >= 0 && p.x < rec.width && p.y >= 0 && p.y < rec.height)) {
        throw FormatError(ctx + ": coordinate (" + fmt_double(p.x) + ", " + fmt_double(p.y) + ") outside " +
                          std::to_string(rec.width) + "x" + std::to_string(rec.height));
      }
    };

    if (type == "points") {
      reject_unknown(j, {"id", "instruction", "width", "height", "type", "points", "sigma"}, ctx);
      if (!j.contains("points") || !j["points"].is_array() || j["points"].empty()) {
        throw FormatError(ctx + ": 'points' must be a non-empty array");
      }
      PointSupervision s;
      for (const auto& pj : j["points"]) {
        s.points.push_back(point(pj, ctx));
        in_bounds(s.points.back());
      }
      s.sigma = j.contains("sigma") ? number(j, "sigma", ctx) : sigma_default;
      if (!(s.sigma > 0)) throw FormatError(ctx + ": sigma must be positive");
      rec.supervision = std::move(s);
    } else if (type == "box") {
      reject_unknown(j, {"id", "instruction", "width", "height", "type", "center", "box_width", "box_height", "alpha"},
                     ctx);
      if (!j.contains("center")) throw FormatError(ctx + ": missing field 'center'");
      BoxSupervision s;
      s.center = point(j["center"], ctx);
      in_bounds(s.center);
      s.box_width = number(j, "box_width", ctx);
      s.box_height = number(j, "box_height", ctx);
      s.alpha = j.contains("alpha") ? number(j, "alpha", ctx) : defaults.alpha;
      if (!(s.box_width > 0 && s.box_height > 0)) throw FormatError(ctx + ": box extent must be positive");
      if (!(s.alpha > 0)) throw FormatError(ctx + ": alpha must be positive");
      rec.supervision = s;
    } else if (type == "mask") {
      reject_unknown(j, {"id", "instruction", "width", "height", "type", "rle", "sigma"}, ctx);
      if (!j.contains("rle")) throw FormatError(ctx + ": missing field 'rle'");
      MaskSupervision s;
      try {
        s.mask = decode_rle(rle_field(j["rle"], ctx), rec.width, rec.height);
      } catch (const FormatError& e) {
        throw FormatError(ctx + ": " + e.what());
      }
      if (s.mask.count() == 0) throw FormatError(ctx + ": mask has no foreground pixels");
      s.sigma = j.contains("sigma") ? number(j, "sigma", ctx) : sigma_default;
      if (!(s.sigma > 0)) throw FormatError(ctx + ": sigma must be positive");
      rec.supervision = std::move(s);
    } else {
      throw FormatError(ctx + ": unknown supervision type '" + type + "'");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// ---- RLE ------------------------------------------------------------------

std::vector<std::uint32_t> encode_rle(const BinaryMask& mask) {
  std::vector<std::uint32_t> runs;
  const auto bits = mask.bits();
  std::size_t i = 0;
  while (i < bits.size()) {
    if (!bits[i]) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < bits.size() && bits[i]) ++i;
    runs.push_back(static_cast<std::uint32_t>(start));
    runs.push_back(static_cast<std::uint32_t>(i - start));
  }
  return runs;
}

BinaryMask decode_rle(std::span<const std::uint32_t> runs, int width, int height) {
  if (runs.size() % 2 != 0) throw FormatError("rle: odd number of entries");
  BinaryMask mask(width, height);
  const std::uint64_t n = static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
  std::vector<std::uint8_t> bits(n, 0);
  std::uint64_t prev_end = 0;
  for (std::size_t r = 0; r < runs.size(); r += 2) {
    const std::uint64_t start = runs[r];
    const std::uint64_t len = runs[r + 1];
    if (len == 0) throw FormatError("rle: run " + std::to_string(r / 2) + " has zero length");
    if (r > 0 && start < prev_end) throw FormatError("rle: run " + std::to_string(r / 2) + " overlaps or is out of order");
    if (start + len > n) throw FormatError("rle: run " + std::to_string(r / 2) + " extends past the mask");
    std::fill(bits.begin() + static_cast<std::ptrdiff_t>(start), bits.begin() + static_cast<std::ptrdiff_t>(start + len),
              std::uint8_t{1});
    prev_end = start + len;
  }
  return BinaryMask(width, height, std::move(bits));
}

// ---- AFHM -------------------------------------------------------------------

void write_heatmap(std::ostream& out, const Heatmap& m) {
  out.write(kHeatmapMagic.data(), 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(m.width()));
  put_u32(out, static_cast<std::uint32_t>(m.height()));
  for (double v : m.values()) put_f32(out, v);
}

Heatmap read_heatmap(std::istream& in) {
  Reader r(in);
  expect_magic(r, kHeatmapMagic, "AFHM");
  const auto w = r.u32("width");
  const auto h = r.u32("height");
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) {
    throw FormatError("AFHM: invalid dimensions " + std::to_string(w) + "x" + std::to_string(h) + " at byte offset 8");
  }
  std::vector<double> values(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto off = r.offset();
    const float v = r.f32("heatmap payload");
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw FormatError("AFHM: value outside [0, 1] at byte offset " + std::to_string(off));
    }
    values[i] = v;
  }
  return Heatmap(static_cast<int>(w), static_cast<int>(h), std::move(values));
}

void write_heatmap(const std::filesystem::path& path, const Heatmap& m) {
  auto out = open_out(path);
  write_heatmap(out, m);
  finish(out, path);
}

Heatmap read_heatmap(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_heatmap(in);
}

// ---- PGM ------------------------------------------------------------------

std::uint16_t pgm_sample(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::floor(c * 65535.0 + 0.5));
}

void export_pgm(std::ostream& out, const Heatmap& m) {
  out << "P5\n" << m.width() << ' ' << m.height() << "\n65535\n";
  for (double v : m.values()) {
    const auto s = pgm_sample(v);
    const char b[2] = {static_cast<char>(s >> 8), static_cast<char>(s & 0xff)};
    out.write(b, 2);
  }
}

void export_pgm(const std::filesystem::path& path, const Heatmap& m) {
  auto out = open_out(path);
  export_pgm(out, m);
  finish(out, path);
}

// ---- checkpoint ------------------------------------------------------------

void write_checkpoint(std::ostream& out, const DecoderParams& p) {
  const auto& c = p.config;
  const bool ahd = c.kind == DecoderKind::kAhd;
  out.write(kCheckpointMagic.data(), 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(c.channels));
  put_u32(out, ahd ? static_cast<std::uint32_t>(c.compressed) : 0u);
  put_u32(out, ahd ? static_cast<std::uint32_t>(c.kernel) : 0u);
  put_u32(out, static_cast<std::uint32_t>(c.scale));
  for (const auto& t : p.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.values) put_f32(out, v);
  }
}

DecoderParams read_checkpoint(std::istream& in) {
  Reader r(in);
  expect_magic(r, kCheckpointMagic, "AHDP");
  DecoderConfig cfg;
  cfg.channels = static_cast<int>(r.u32("channels"));
  cfg.compressed = static_cast<int>(r.u32("compressed channels"));
  cfg.kernel = static_cast<int>(r.u32("kernel size"));
  cfg.scale = static_cast<int>(r.u32("scale"));

  struct Raw {
    std::vector<std::size_t> shape;
    std::vector<double> values;
  };
  std::vector<Raw> raw;
  while (!r.at_end()) {
    const auto off = r.offset();
    const auto rank = r.u32("tensor rank");
    if (rank == 0 || rank > 8) throw FormatError("AHDP: invalid tensor rank at byte offset " + std::to_string(off));
    Raw t;
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u32("tensor dims"));
      n *= t.shape.back();
    }
    if (n == 0 || n > (std::uint64_t{1} << 30)) {
      throw FormatError("AHDP: invalid tensor size at byte offset " + std::to_string(off));
    }
    t.values.resize(n);
    for (auto& v : t.values) v = r.f32("tensor values");
    raw.push_back(std::move(t));
  }

  const auto s2 = static_cast<std::size_t>(cfg.scale) * cfg.scale;
  if (cfg.compressed > 0 && cfg.kernel > 0 && raw.size() == 6) {
    cfg.kind = DecoderKind::kAhd;
  } else if (cfg.compressed == 0 && cfg.kernel == 0 && raw.size() == 4) {
    cfg.kind = DecoderKind::kDeconv;
  } else if (cfg.compressed == 0 && cfg.kernel == 0 && raw.size() == 2) {
    cfg.kind = raw[0].shape.size() == 2 && raw[0].shape[0] == s2 && s2 > 1 ? DecoderKind::kPixelShuffle
                                                                          : DecoderKind::kBilinear;
  } else {
    throw FormatError("AHDP: tensor layout does not match any decoder kind (" + std::to_string(raw.size()) +
                      " tensors)");
  }
  if (cfg.kind != DecoderKind::kAhd) {
    cfg.compressed = DecoderConfig{}.compressed;
    cfg.kernel = DecoderConfig{}.kernel;
  }

  DecoderParams p;
  try {
    p = zero_params(cfg);
  } catch (const ParameterError& e) {
    throw FormatError(std::string("AHDP: invalid config block: ") + e.what());
  }
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    if (raw[i].shape != p.tensors[i].shape) {
      throw FormatError("AHDP: tensor " + std::to_string(i) + " (" + p.tensors[i].name + ") has the wrong shape");
    }
    p.tensors[i].values = std::move(raw[i].values);
  }
  return p;
}

void write_checkpoint(const std::filesystem::path& path, const DecoderParams& p) {
  auto out = open_out(path);
  write_checkpoint(out, p);
  finish(out, path);
}

DecoderParams read_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_checkpoint(in);
}

// ---- configs and reports ----------------------------------------------------

ExperimentConfig parse_experiment_config(std::string_view text) {
  const json j = parse_json(text, "config");
  if (!j.is_object()) throw FormatError("config: top level must be an object");
  reject_unknown(j, {"train", "scene", "train_scenes", "held_out_scenes", "decoder", "threshold"}, "config");
  ExperimentConfig cfg;
  if (j.contains("train")) {
    const auto& t = j["train"];
    const std::string ctx = "config.train";
    if (!t.is_object()) throw FormatError(ctx + " must be an object");
    reject_unknown(t,
                   {"lr_peak", "warmup_steps", "total_steps", "epochs", "beta1", "beta2", "weight_decay", "eps",
                    "batch_size", "seed", "eval_interval"},
                   ctx);
    auto& tc = cfg.train;
    maybe(t, "lr_peak", tc.lr_peak, ctx);
    maybe(t, "warmup_steps", tc.warmup_steps, ctx);
    maybe(t, "total_steps", tc.total_steps, ctx);
    maybe(t, "epochs", tc.epochs, ctx);
    maybe(t, "beta1", tc.beta1, ctx);
    maybe(t, "beta2", tc.beta2, ctx);
    maybe(t, "weight_decay", tc.weight_decay, ctx);
    maybe(t, "eps", tc.eps, ctx);
    maybe(t, "batch_size", tc.batch_size, ctx);
    maybe(t, "seed", tc.seed, ctx);
    maybe(t, "eval_interval", tc.eval_interval, ctx);
    try {
      validate(tc);
    } catch (const ParameterError& e) {
      throw FormatError(ctx + ": " + e.what());
    }
  }
  if (j.contains("scene")) cfg.scene = parse_scene(j["scene"], "config.scene");
  maybe(j, "train_scenes", cfg.train_scenes, "config");
  maybe(j, "held_out_scenes", cfg.held_out_scenes, "config");
  maybe(j, "threshold", cfg.threshold, "config");
  if (j.contains("decoder")) {
    const auto& d = j["decoder"];
    if (!d.is_object()) throw FormatError("config.decoder must be an object");
    reject_unknown(d, {"compressed", "kernel"}, "config.decoder");
    maybe(d, "compressed", cfg.compressed, "config.decoder");
    maybe(d, "kernel", cfg.kernel, "config.decoder");
  }
  if (cfg.train_scenes < 1 || cfg.held_out_scenes < 1) {
    throw FormatError("config: train_scenes and held_out_scenes must be >= 1");
  }
  if (!(cfg.threshold >= 0 && cfg.threshold <= 1)) throw FormatError("config: threshold must lie in [0, 1]");
  try {
    validate(cfg.decoder(DecoderKind::kAhd));
  } catch (const ParameterError& e) {
    throw FormatError(std::string("config.decoder: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_text_file(path));
}

std::string loss_curve_csv(std::span<const LossPoint> curve) {
  std::string out = "step,lr,train_bce,eval_bce\n";
  for (const auto& p : curve) {
    out += std::to_string(p.step) + "," + fmt_double(p.lr) + "," + fmt_double(p.train_bce) + "," +
           (std::isnan(p.eval_bce) ? std::string() : fmt_double(p.eval_bce)) + "\n";
  }
  return out;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "kind,seed,accuracy,eval_bce,median_latency_us\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.kind)) + "," + std::to_string(r.seed) + "," + fmt_double(r.accuracy) + "," +
           fmt_double(r.eval_bce) + "," + fmt_double(r.median_latency_us) + "\n";
  }
  return out;
}

std::string eval_report_json(const EvalReport& rep, bool include_timing) {
  json j;
  j["n_cases"] = rep.n_cases;
  j["hits"] = rep.hits;
  j["misses"] = rep.misses;
  j["refusals"] = rep.refusals;
  j["threshold"] = rep.threshold;
  j["accuracy"] = rep.accuracy;
  j["accuracy_non_refused"] = rep.accuracy_non_refused;
  json cases = json::array();
  for (const auto& c : rep.cases) {
    json cj;
    cj["id"] = c.id;
    cj["x"] = c.peak.coord.x;
    cj["y"] = c.peak.coord.y;
    cj["value"] = c.peak.value;
    cj["outcome"] = std::string(to_string(c.outcome));
    if (include_timing) cj["latency_us"] = c.latency_us;
    cases.push_back(std::move(cj));
  }
  j["cases"] = std::move(cases);
  if (include_timing) {
    j["latency_us"] = {{"mean", rep.latency.mean_us}, {"median", rep.latency.median_us}, {"p95", rep.latency.p95_us}};
  }
  return j.dump(2) + "\n";
}

std::vector<EvalCase> parse_eval_cases(std::string_view text) {
  const json j = parse_json(text, "cases");
  if (!j.is_object()) throw FormatError("cases: top level must be an object");
  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    const std::string ctx = "cases.synthetic";
    if (!s.is_object()) throw FormatError(ctx + " must be an object");
    reject_unknown(s, {"seed", "count", "scene"}, ctx);
    const long count = integer(s, "count", ctx);
    if (count < 1) throw FormatError(ctx + ": count must be >= 1");
    std::uint64_t seed = 0;
    maybe(s, "seed", seed, ctx);
    const SceneConfig scene = s.contains("scene") ? parse_scene(s["scene"], ctx + ".scene") : SceneConfig{};
    const auto data = generate_dataset(seed, 0, static_cast<int>(count), scene);
    return eval_cases_from(data.held_out);
  }
  if (!j.contains("cases") || !j["cases"].is_array()) throw FormatError("cases: expected 'cases' array or 'synthetic'");
  std::vector<EvalCase> out;
  for (std::size_t i = 0; i < j["cases"].size(); ++i) {
    const auto& c = j["cases"][i];
    std::string ctx = "case " + std::to_string(i);
    if (!c.is_object()) throw FormatError(ctx + ": must be an object");
    EvalCase ec;
    ec.instruction_id = c.contains("id") && c["id"].is_string() ? c["id"].get<std::string>() : std::to_string(i);
    ctx += " (id '" + ec.instruction_id + "')";
    if (!c.contains("features") || !c.contains("region")) throw FormatError(ctx + ": needs 'features' and 'region'");
    const auto& f = c["features"];
    const long ch = integer(f, "channels", ctx + ".features");
    const long fw = integer(f, "width", ctx + ".features");
    const long fh = integer(f, "height", ctx + ".features");
    if (!f.contains("values") || !f["values"].is_array()) throw FormatError(ctx + ".features: missing 'values'");
    std::vector<double> vals;
    for (const auto& v : f["values"]) {
      if (!v.is_number()) throw FormatError(ctx + ".features: values must be numbers");
      vals.push_back(v.get<double>());
    }
    const auto& rg = c["region"];
    const long rw = integer(rg, "width", ctx + ".region");
    const long rh = integer(rg, "height", ctx + ".region");
    if (!rg.contains("rle")) throw FormatError(ctx + ".region: missing 'rle'");
    try {
      ec.features = FeatureMap(static_cast<int>(ch), static_cast<int>(fw), static_cast<int>(fh), std::move(vals));
      ec.success_region = decode_rle(rle_field(rg["rle"], ctx), static_cast<int>(rw), static_cast<int>(rh));
    } catch (const Error& e) {
      throw FormatError(ctx + ": " + e.what());
    }
    out.push_back(std::move(ec));
  }
  if (out.empty()) throw FormatError("cases: no cases given");
  return out;
}

std::vector<EvalCase> load_eval_cases(const std::filesystem::path& path) {
  return parse_eval_cases(read_text_file(path));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  auto out = open_out(path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  finish(out, path);
}

}  // namespace affmap
