#include "affmap/params.hpp"

#include <cmath>
#include <numeric>

#include "affmap/error.hpp"
#include "affmap/random.hpp"

namespace affmap {
namespace {

Tensor make(std::string name, std::vector<std::size_t> shape) {
  const auto n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  return {std::move(name), std::move(shape), std::vector<double>(n, 0.0)};
}

bool is_bias(const Tensor& t) { return t.name.ends_with(".bias"); }

}  // namespace

std::string_view to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::kAhd: return "ahd";
    case DecoderKind::kBilinear: return "bilinear";
    case DecoderKind::kDeconv: return "deconv";
    case DecoderKind::kPixelShuffle: return "pixelshuffle";
  }
  return "unknown";
}

std::optional<DecoderKind> parse_decoder_kind(std::string_view name) {
  for (auto k : {DecoderKind::kAhd, DecoderKind::kBilinear, DecoderKind::kDeconv,
                 DecoderKind::kPixelShuffle}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

void validate(const DecoderConfig& cfg) {
  if (cfg.channels < 1) throw ParameterError("decoder config: channels must be >= 1");
  if (cfg.scale < 1) throw ParameterError("decoder config: scale must be >= 1");
  if (cfg.kind == DecoderKind::kAhd) {
    if (cfg.compressed < 1) throw ParameterError("decoder config: compressed channels must be >= 1");
    if (cfg.kernel < 1 || cfg.kernel % 2 == 0) {
      throw ParameterError("decoder config: kernel size must be odd and positive, got " +
                           std::to_string(cfg.kernel));
    }
  }
}

std::size_t DecoderParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

DecoderParams zero_params(const DecoderConfig& cfg) {
  validate(cfg);
  const auto c = static_cast<std::size_t>(cfg.channels);
  const auto s = static_cast<std::size_t>(cfg.scale);
  DecoderParams p{cfg, {}};
  switch (cfg.kind) {
    case DecoderKind::kAhd: {
      const auto cm = static_cast<std::size_t>(cfg.compressed);
      const auto k = static_cast<std::size_t>(cfg.kernel);
      const auto out = s * s * k * k;
      p.tensors.push_back(make("cap.weight", {1, c}));
      p.tensors.push_back(make("cap.bias", {1}));
      p.tensors.push_back(make("akg.compress.weight", {cm, c}));
      p.tensors.push_back(make("akg.compress.bias", {cm}));
      p.tensors.push_back(make("akg.expand.weight", {out, cm, 3, 3}));
      p.tensors.push_back(make("akg.expand.bias", {out}));
      break;
    }
    case DecoderKind::kBilinear:
      p.tensors.push_back(make("cap.weight", {1, c}));
      p.tensors.push_back(make("cap.bias", {1}));
      break;
    case DecoderKind::kDeconv:
      p.tensors.push_back(make("cap.weight", {1, c}));
      p.tensors.push_back(make("cap.bias", {1}));
      p.tensors.push_back(make("deconv.weight", {2 * s, 2 * s}));
      p.tensors.push_back(make("deconv.bias", {1}));
      break;
    case DecoderKind::kPixelShuffle:
      p.tensors.push_back(make("shuffle.weight", {s * s, c}));
      p.tensors.push_back(make("shuffle.bias", {s * s}));
      break;
  }
  return p;
}

DecoderParams zeros_like(const DecoderParams& like) {
  DecoderParams p = like;
  for (auto& t : p.tensors) std::fill(t.values.begin(), t.values.end(), 0.0);
  return p;
}

std::size_t fan_in(const DecoderParams& p, std::size_t index) {
  const auto& t = p.tensors.at(index);
  if (is_bias(t)) return 1;
  if (t.name == "deconv.weight") return t.numel();  // one input channel, full 2s x 2s kernel
  // [out, in, ...spatial]
  std::size_t n = 1;
  for (std::size_t d = 1; d < t.shape.size(); ++d) n *= t.shape[d];
  return n;
}

DecoderParams init_params(std::uint64_t seed, const DecoderConfig& cfg) {
  DecoderParams p = zero_params(cfg);
  Rng rng(seed);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    auto& t = p.tensors[i];
    if (is_bias(t)) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(p, i)));
    for (auto& v : t.values) v = rng.uniform(-bound, bound);
  }
  return p;
}

}  // namespace affmap
