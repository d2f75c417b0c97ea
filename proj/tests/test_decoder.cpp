#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "affmap/decoder.hpp"
#include "affmap/error.hpp"
#include "affmap/inference.hpp"
#include "affmap/random.hpp"

using namespace affmap;

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

FeatureMap random_features(Rng& rng, int c, int w, int h) {
  FeatureMap f(c, w, h);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) f.at(ch, x, y) = rng.normal();
  return f;
}

DecoderParams random_params(Rng& rng, const DecoderConfig& cfg, double scale = 0.5) {
  auto p = zero_params(cfg);
  for (auto& t : p.tensors)
    for (auto& v : t.values) v = rng.uniform(-scale, scale);
  return p;
}

CoarseAffordance random_coarse(Rng& rng, int w, int h) {
  CoarseAffordance m{w, h, std::vector<double>(static_cast<std::size_t>(w) * h)};
  for (auto& v : m.values) v = rng.uniform();
  return m;
}

KernelField random_field(Rng& rng, int out_w, int out_h, int k) {
  KernelField kf{out_w, out_h, k, std::vector<double>(static_cast<std::size_t>(out_w) * out_h * k * k)};
  for (std::size_t base = 0; base < kf.weights.size(); base += static_cast<std::size_t>(k) * k) {
    double sum = 0.0;
    for (int t = 0; t < k * k; ++t) sum += kf.weights[base + t] = rng.uniform() * rng.uniform();
    for (int t = 0; t < k * k; ++t) kf.weights[base + t] /= sum;
  }
  return kf;
}

// Per-pixel double loop over the k x k neighborhood of the source cell.
std::vector<double> convex_oracle(const CoarseAffordance& m, const KernelField& kf, int s) {
  const int r = (kf.k - 1) / 2;
  std::vector<double> out;
  for (int y = 0; y < kf.out_height; ++y) {
    for (int x = 0; x < kf.out_width; ++x) {
      const auto w = kf.at(x, y);
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int cy = std::clamp(y / s + dy, 0, m.height - 1);
          const int cx = std::clamp(x / s + dx, 0, m.width - 1);
          acc += w[static_cast<std::size_t>((dy + r) * kf.k + (dx + r))] * m.at(cx, cy);
        }
      }
      out.push_back(acc);
    }
  }
  return out;
}

std::vector<double> cap_oracle(const FeatureMap& f, const DecoderParams& p) {
  const auto& w = p.tensors[tensor::kCapWeight].values;
  std::vector<double> out;
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      double z = p.tensors[tensor::kCapBias].values[0];
      for (int c = 0; c < f.channels(); ++c) z += w[static_cast<std::size_t>(c)] * f.at(c, x, y);
      out.push_back(logistic(z));
    }
  }
  return out;
}

// Naive 1x1 conv, zero-padded 3x3 conv, rearrangement and softmax.
std::vector<double> akg_oracle(const FeatureMap& f, const DecoderParams& p) {
  const auto& cfg = p.config;
  const int w = f.width(), h = f.height(), cm = cfg.compressed, k = cfg.kernel, s = cfg.scale;
  const int kk = k * k, o_count = s * s * kk;
  const auto& cw = p.tensors[tensor::kCompressWeight].values;
  const auto& cb = p.tensors[tensor::kCompressBias].values;
  const auto& ew = p.tensors[tensor::kExpandWeight].values;
  const auto& eb = p.tensors[tensor::kExpandBias].values;

  std::vector<double> g(static_cast<std::size_t>(cm) * w * h);
  for (int m = 0; m < cm; ++m)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double z = cb[static_cast<std::size_t>(m)];
        for (int c = 0; c < f.channels(); ++c) z += cw[static_cast<std::size_t>(m * f.channels() + c)] * f.at(c, x, y);
        g[(static_cast<std::size_t>(m) * h + y) * w + x] = z;
      }

  std::vector<double> e(static_cast<std::size_t>(o_count) * w * h);
  for (int o = 0; o < o_count; ++o)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double z = eb[static_cast<std::size_t>(o)];
        for (int m = 0; m < cm; ++m)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int sy = y + ky - 1, sx = x + kx - 1;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              z += ew[((static_cast<std::size_t>(o) * cm + m) * 3 + ky) * 3 + kx] *
                   g[(static_cast<std::size_t>(m) * h + sy) * w + sx];
            }
        e[(static_cast<std::size_t>(o) * h + y) * w + x] = z;
      }

  const int out_w = w * s, out_h = h * s;
  std::vector<double> weights(static_cast<std::size_t>(out_w) * out_h * kk);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const int cy = y / s, cx = x / s, sub = (y % s) * s + (x % s);
      std::vector<double> logits(static_cast<std::size_t>(kk));
      for (int t = 0; t < kk; ++t) logits[static_cast<std::size_t>(t)] = e[(static_cast<std::size_t>(sub * kk + t) * h + cy) * w + cx];
      const double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (auto& l : logits) sum += l = std::exp(l - mx);
      for (int t = 0; t < kk; ++t)
        weights[(static_cast<std::size_t>(y) * out_w + x) * kk + t] = logits[static_cast<std::size_t>(t)] / sum;
    }
  return weights;
}

double bilinear_oracle(const CoarseAffordance& m, int s, int x, int y) {
  auto axis = [&](int dst, int n, int& i0, int& i1, double& l1) {
    const double src = std::max(0.0, (dst + 0.5) / s - 0.5);
    i0 = std::min(static_cast<int>(src), n - 1);
    i1 = std::min(i0 + 1, n - 1);
    l1 = src - i0;
  };
  int x0, x1, y0, y1;
  double lx, ly;
  axis(x, m.width, x0, x1, lx);
  axis(y, m.height, y0, y1, ly);
  return (1 - ly) * ((1 - lx) * m.at(x0, y0) + lx * m.at(x1, y0)) + ly * ((1 - lx) * m.at(x0, y1) + lx * m.at(x1, y1));
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("sigmoid and softmax") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(2.0) == doctest::Approx(logistic(2.0)).epsilon(1e-15));

  const auto w = softmax_normalize(std::vector<double>{1000.0, 1000.0, 1000.0, 1000.0});
  for (double v : w) CHECK(v == doctest::Approx(0.25));
  const auto big = softmax_normalize(std::vector<double>{1e308, 0.0});
  CHECK(big[0] == 1.0);
  CHECK(big[1] == 0.0);
  CHECK_THROWS_AS(softmax_normalize(std::vector<double>{0.0, NAN}), ParameterError);
  CHECK_THROWS_AS(softmax_normalize(std::vector<double>{INFINITY, 0.0}), ParameterError);
}

TEST_CASE("default AHD configuration has about 1.6M parameters") {
  const auto p = zero_params(DecoderConfig{});
  CHECK(p.parameter_count() == 1602009);
  CHECK(p.parameter_count() >= 1000000);
  CHECK(p.parameter_count() <= 2200000);
}

TEST_CASE("parameter counts per kind") {
  DecoderConfig cfg{DecoderKind::kAhd, 8, 4, 3, 2};
  CHECK(zero_params(cfg).parameter_count() == 9 + 36 + (36 * 4 * 9 + 36));
  cfg.kind = DecoderKind::kBilinear;
  CHECK(zero_params(cfg).parameter_count() == 9);
  cfg.kind = DecoderKind::kDeconv;
  CHECK(zero_params(cfg).parameter_count() == 9 + 16 + 1);
  cfg.kind = DecoderKind::kPixelShuffle;
  CHECK(zero_params(cfg).parameter_count() == 4 * 8 + 4);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(validate(DecoderConfig{DecoderKind::kAhd, 8, 4, 4, 2}), ParameterError);
  CHECK_THROWS_AS(validate(DecoderConfig{DecoderKind::kAhd, 8, 4, 3, 0}), ParameterError);
  CHECK_THROWS_AS(validate(DecoderConfig{DecoderKind::kAhd, 0, 4, 3, 2}), ParameterError);
  CHECK_NOTHROW(validate(DecoderConfig{DecoderKind::kAhd, 8, 4, 1, 1}));
  CHECK(parse_decoder_kind("pixelshuffle") == DecoderKind::kPixelShuffle);
  CHECK(!parse_decoder_kind("nearest"));
  for (auto k : {DecoderKind::kAhd, DecoderKind::kBilinear, DecoderKind::kDeconv, DecoderKind::kPixelShuffle})
    CHECK(parse_decoder_kind(to_string(k)) == k);
}

TEST_CASE("init_params is deterministic and bounded by the fan-in") {
  const DecoderConfig cfg{DecoderKind::kAhd, 16, 4, 3, 2};
  const auto a = init_params(7, cfg), b = init_params(7, cfg), c = init_params(8, cfg);
  CHECK(a == b);
  CHECK(!(a == c));
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(a, i)));
    for (double v : a.tensors[i].values) CHECK(std::abs(v) <= bound);
  }
  CHECK(fan_in(a, tensor::kExpandWeight) == 4 * 9);
  for (double v : a.tensors[tensor::kCapBias].values) CHECK(v == 0.0);
}

TEST_CASE("cap_forward matches a direct dot product and sigmoid") {
  Rng rng(1);
  const DecoderConfig cfg{DecoderKind::kAhd, 5, 3, 3, 2};
  const auto p = random_params(rng, cfg);
  const auto f = random_features(rng, 5, 4, 3);
  const auto m = cap_forward(f, p);
  CHECK(m.width == 4);
  CHECK(m.height == 3);
  CHECK(max_abs_diff(m.values, cap_oracle(f, p)) < 1e-14);
}

TEST_CASE("akg_forward matches the naive convolution oracle") {
  Rng rng(2);
  for (const auto& cfg : {DecoderConfig{DecoderKind::kAhd, 3, 2, 3, 2}, DecoderConfig{DecoderKind::kAhd, 4, 3, 5, 3},
                          DecoderConfig{DecoderKind::kAhd, 2, 2, 1, 1}}) {
    const auto p = random_params(rng, cfg);
    const auto f = random_features(rng, cfg.channels, 4, 5);
    const auto kf = akg_forward(f, p);
    CHECK(kf.out_width == 4 * cfg.scale);
    CHECK(kf.out_height == 5 * cfg.scale);
    CHECK(kf.k == cfg.kernel);
    CHECK(max_abs_diff(kf.weights, akg_oracle(f, p)) < 1e-12);
  }
}

TEST_CASE("convex_upsample matches the double-loop oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = rng.uniform_int(1, 7), h = rng.uniform_int(1, 7), s = rng.uniform_int(1, 4);
    const int k = 2 * rng.uniform_int(0, 3) + 1;
    const auto m = random_coarse(rng, w, h);
    const auto kf = random_field(rng, w * s, h * s, k);
    const auto out = convex_upsample(m, kf, s);
    CHECK(max_abs_diff(out.values(), convex_oracle(m, kf, s)) < 1e-12);
  }
}

TEST_CASE("one-hot kernels collapse to nearest-neighbour replication") {
  const int w = 3, h = 2, s = 2, k = 3;
  Rng rng(4);
  const auto m = random_coarse(rng, w, h);
  KernelField kf{w * s, h * s, k, std::vector<double>(static_cast<std::size_t>(w * s * h * s * k * k), 0.0)};
  for (std::size_t px = 0; px < static_cast<std::size_t>(w * s * h * s); ++px) kf.weights[px * 9 + 4] = 1.0;
  const auto out = convex_upsample(m, kf, s);
  for (int y = 0; y < h * s; ++y)
    for (int x = 0; x < w * s; ++x) CHECK(out.at(x, y) == m.at(x / s, y / s));
}

TEST_CASE("uniform kernels give the clamped box mean") {
  const CoarseAffordance m{2, 2, {0.0, 1.0, 1.0, 0.0}};
  const int s = 2, k = 3;
  KernelField kf{4, 4, k, std::vector<double>(16 * 9, 1.0 / 9.0)};
  const auto out = convex_upsample(m, kf, s);
  // Source cell (0, 0): clamped 3x3 neighbourhood rows {0,0,1} x cols {0,0,1}.
  CHECK(out.at(0, 0) == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
  CHECK(out.at(3, 3) == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
  CHECK(out.at(3, 0) == doctest::Approx(5.0 / 9.0).epsilon(1e-14));
}

TEST_CASE("convex_upsample stays within the neighbourhood hull") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = rng.uniform_int(1, 6), h = rng.uniform_int(1, 6), s = rng.uniform_int(1, 3);
    const int k = 2 * rng.uniform_int(0, 2) + 1, r = (k - 1) / 2;
    const auto m = random_coarse(rng, w, h);
    const auto out = convex_upsample(m, random_field(rng, w * s, h * s, k), s);
    for (int y = 0; y < h * s; ++y) {
      for (int x = 0; x < w * s; ++x) {
        double lo = 1.0, hi = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const double v = m.at(std::clamp(x / s + dx, 0, w - 1), std::clamp(y / s + dy, 0, h - 1));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
        CHECK(out.at(x, y) >= lo - 1e-12);
        CHECK(out.at(x, y) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("convex_upsample input validation") {
  Rng rng(6);
  const auto m = random_coarse(rng, 2, 2);
  CHECK_THROWS_AS(convex_upsample(m, random_field(rng, 4, 6, 3), 2), DimensionError);
  auto kf = random_field(rng, 4, 4, 3);
  kf.weights[0] += 0.01;
  CHECK_THROWS_AS(convex_upsample(m, kf, 2), ParameterError);
  kf = random_field(rng, 4, 4, 3);
  kf.weights[0] = -kf.weights[0];
  CHECK_THROWS_AS(convex_upsample(m, kf, 2), ParameterError);
}

TEST_CASE("ahd_forward equals convex_upsample of the two heads") {
  Rng rng(7);
  const DecoderConfig cfg{DecoderKind::kAhd, 6, 3, 3, 2};
  const auto p = random_params(rng, cfg);
  const auto f = random_features(rng, 6, 5, 4);
  const auto out = ahd_forward(f, p);
  const auto ref = convex_upsample(cap_forward(f, p), akg_forward(f, p), 2);
  CHECK(out == ref);
  CHECK(decoder_forward(f, p) == out);
  CHECK_THROWS_AS(ahd_forward(random_features(rng, 5, 5, 4), p), DimensionError);
}

TEST_CASE("bilinear_upsample matches the per-pixel formula") {
  Rng rng(8);
  for (int s : {1, 2, 3, 4}) {
    const auto m = random_coarse(rng, 4, 3);
    const auto out = bilinear_upsample(m, s);
    for (int y = 0; y < 3 * s; ++y)
      for (int x = 0; x < 4 * s; ++x) CHECK(out.at(x, y) == doctest::Approx(bilinear_oracle(m, s, x, y)).epsilon(1e-14));
  }
  const CoarseAffordance two{2, 1, {0.0, 1.0}};
  const auto out = bilinear_upsample(two, 2);
  CHECK(out.at(0, 0) == 0.0);
  CHECK(out.at(1, 0) == doctest::Approx(0.25));
  CHECK(out.at(2, 0) == doctest::Approx(0.75));
  CHECK(out.at(3, 0) == 1.0);
}

TEST_CASE("deconv_upsample matches a scatter-and-crop oracle") {
  Rng rng(9);
  for (int s : {1, 2, 3, 4}) {
    const int w = 3, h = 2, ks = 2 * s, crop = s / 2;
    const auto m = random_coarse(rng, w, h);
    std::vector<double> kernel(static_cast<std::size_t>(ks) * ks);
    for (auto& v : kernel) v = rng.uniform(-1, 1);
    const double bias = rng.uniform(-0.5, 0.5);
    const int full_w = (w + 1) * s, full_h = (h + 1) * s;
    std::vector<double> full(static_cast<std::size_t>(full_w) * full_h, 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int a = 0; a < ks; ++a)
          for (int b = 0; b < ks; ++b)
            full[static_cast<std::size_t>(y * s + a) * full_w + x * s + b] += m.at(x, y) * kernel[static_cast<std::size_t>(a * ks + b)];
    const auto out = deconv_upsample(m, kernel, bias, s);
    REQUIRE(out.width() == w * s);
    REQUIRE(out.height() == h * s);
    for (int y = 0; y < h * s; ++y)
      for (int x = 0; x < w * s; ++x)
        CHECK(out.at(x, y) ==
              doctest::Approx(logistic(full[static_cast<std::size_t>(y + crop) * full_w + x + crop] + bias)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(deconv_upsample(random_coarse(rng, 2, 2), std::vector<double>(15), 0.0, 2), DimensionError);
}

TEST_CASE("pixelshuffle_upsample matches the rearrangement oracle") {
  Rng rng(10);
  const int c = 3, w = 3, h = 2, s = 3;
  const auto f = random_features(rng, c, w, h);
  std::vector<double> wt(static_cast<std::size_t>(s * s * c)), b(static_cast<std::size_t>(s * s));
  for (auto& v : wt) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  const auto out = pixelshuffle_upsample(f, wt, b, s);
  for (int y = 0; y < h * s; ++y)
    for (int x = 0; x < w * s; ++x) {
      const int sub = (y % s) * s + (x % s);
      double z = b[static_cast<std::size_t>(sub)];
      for (int ch = 0; ch < c; ++ch) z += wt[static_cast<std::size_t>(sub * c + ch)] * f.at(ch, x / s, y / s);
      CHECK(out.at(x, y) == doctest::Approx(logistic(z)).epsilon(1e-13));
    }
}

TEST_CASE("all decoders produce (s*w) x (s*h) heatmaps in [0, 1]") {
  Rng rng(11);
  for (auto kind : {DecoderKind::kAhd, DecoderKind::kBilinear, DecoderKind::kDeconv, DecoderKind::kPixelShuffle}) {
    const DecoderConfig cfg{kind, 4, 3, 3, 3};
    const auto p = random_params(rng, cfg, 3.0);
    const auto out = decoder_forward(random_features(rng, 4, 5, 2), p);
    CHECK(out.width() == 15);
    CHECK(out.height() == 6);
    for (double v : out.values()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("extreme logits do not produce non-finite output") {
  Rng rng(12);
  const DecoderConfig cfg{DecoderKind::kAhd, 4, 3, 3, 2};
  const auto p = random_params(rng, cfg, 500.0);
  const auto out = ahd_forward(random_features(rng, 4, 3, 3), p);
  for (double v : out.values()) CHECK(std::isfinite(v));
}

TEST_CASE("inference session agrees with the double-precision path") {
  Rng rng(13);
  for (auto kind : {DecoderKind::kAhd, DecoderKind::kBilinear, DecoderKind::kDeconv, DecoderKind::kPixelShuffle}) {
    const DecoderConfig cfg{kind, 16, 6, 5, 4};
    const auto p = init_params(3, cfg);
    InferenceSession session(p);
    CHECK(session.config() == cfg);
    for (int trial = 0; trial < 3; ++trial) {
      const auto f = random_features(rng, 16, 6, 5);
      const auto fast = session.run(f);
      const auto ref = decoder_forward(f, p);
      CHECK(max_abs_diff(fast.values(), ref.values()) < 1e-5);
    }
  }
}

TEST_CASE("zero expander gives uniform kernels") {
  Rng rng(14);
  const DecoderConfig cfg{DecoderKind::kAhd, 4, 3, 5, 2};
  auto p = random_params(rng, cfg);
  for (auto i : {tensor::kExpandWeight, tensor::kExpandBias}) std::fill(p.tensors[i].values.begin(), p.tensors[i].values.end(), 0.0);
  const auto kf = akg_forward(random_features(rng, 4, 3, 2), p);
  for (double w : kf.weights) CHECK(w == doctest::Approx(1.0 / 25).epsilon(1e-15));
}

TEST_CASE("zero parameters give a flat 0.5 heatmap for every kind") {
  Rng rng(15);
  for (auto kind : {DecoderKind::kAhd, DecoderKind::kBilinear, DecoderKind::kDeconv, DecoderKind::kPixelShuffle}) {
    const DecoderConfig cfg{kind, 4, 3, 3, 2};
    const auto out = decoder_forward(random_features(rng, 4, 3, 3), zero_params(cfg));
    INFO(to_string(kind));
    for (double v : out.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("pixelshuffle lays the four sub-pixel channels out row-major") {
  FeatureMap f(1, 1, 1);
  f.at(0, 0, 0) = 1.0;
  const std::vector<double> logits = {-1.0, 0.5, 2.0, -3.0};
  const auto out = pixelshuffle_upsample(f, logits, std::vector<double>(4, 0.0), 2);
  CHECK(out.at(0, 0) == doctest::Approx(logistic(-1.0)));
  CHECK(out.at(1, 0) == doctest::Approx(logistic(0.5)));
  CHECK(out.at(0, 1) == doctest::Approx(logistic(2.0)));
  CHECK(out.at(1, 1) == doctest::Approx(logistic(-3.0)));
}
