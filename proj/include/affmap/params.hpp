#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace affmap {

enum class DecoderKind { kAhd, kBilinear, kDeconv, kPixelShuffle };

std::string_view to_string(DecoderKind kind);
std::optional<DecoderKind> parse_decoder_kind(std::string_view name);

struct DecoderConfig {
  DecoderKind kind = DecoderKind::kAhd;
  int channels = 256;   // C, feature channels
  int compressed = 36;  // C_m, AKG compressor width (AHD only)
  int kernel = 5;       // k, reassembly kernel size, odd (AHD only)
  int scale = 14;       // s, integer upsampling factor

  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

// Throws ParameterError for inconsistent configurations.
void validate(const DecoderConfig& cfg);

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;

  std::size_t numel() const noexcept { return values.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Learnable weights of one decoder. Tensor order is fixed per kind:
//
//   ahd:          cap.weight [1,C], cap.bias [1],
//                 akg.compress.weight [C_m,C], akg.compress.bias [C_m],
//                 akg.expand.weight [s*s*k*k, C_m, 3, 3], akg.expand.bias [s*s*k*k]
//   bilinear:     cap.weight [1,C], cap.bias [1]
//   deconv:       cap.weight [1,C], cap.bias [1], deconv.weight [2s,2s], deconv.bias [1]
//   pixelshuffle: shuffle.weight [s*s,C], shuffle.bias [s*s]
//
// Gradients and optimizer moments reuse this type with identical shapes.
struct DecoderParams {
  DecoderConfig config;
  std::vector<Tensor> tensors;

  std::size_t parameter_count() const noexcept;
  friend bool operator==(const DecoderParams&, const DecoderParams&) = default;
};

using AHDParams = DecoderParams;

// Tensor indices, valid for the kinds that own the tensor.
namespace tensor {
inline constexpr std::size_t kCapWeight = 0;
inline constexpr std::size_t kCapBias = 1;
inline constexpr std::size_t kCompressWeight = 2;
inline constexpr std::size_t kCompressBias = 3;
inline constexpr std::size_t kExpandWeight = 4;
inline constexpr std::size_t kExpandBias = 5;
inline constexpr std::size_t kDeconvWeight = 2;
inline constexpr std::size_t kDeconvBias = 3;
inline constexpr std::size_t kShuffleWeight = 0;
inline constexpr std::size_t kShuffleBias = 1;
}  // namespace tensor

// Tensors with the right names and shapes, all zero.
DecoderParams zero_params(const DecoderConfig& cfg);

// Zero-shaped copy of `like`.
DecoderParams zeros_like(const DecoderParams& like);

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. Deterministic in
// the seed.
DecoderParams init_params(std::uint64_t seed, const DecoderConfig& cfg);

// Fan-in of the tensor at `index` (1 for biases).
std::size_t fan_in(const DecoderParams& p, std::size_t index);

}  // namespace affmap
