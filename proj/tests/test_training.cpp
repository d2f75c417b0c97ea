#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "affmap/decoder.hpp"
#include "affmap/error.hpp"
#include "affmap/random.hpp"
#include "affmap/synthesis.hpp"
#include "affmap/training.hpp"

using namespace affmap;

namespace {

FeatureMap random_features(Rng& rng, int c, int w, int h) {
  FeatureMap f(c, w, h);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) f.at(ch, x, y) = rng.normal();
  return f;
}

Heatmap random_target(Rng& rng, int w, int h) {
  std::vector<double> v(static_cast<std::size_t>(w) * h);
  for (auto& x : v) x = rng.uniform();
  return Heatmap(w, h, std::move(v));
}

DecoderParams random_params(Rng& rng, const DecoderConfig& cfg) {
  auto p = zero_params(cfg);
  for (auto& t : p.tensors)
    for (auto& v : t.values) v = rng.uniform(-0.5, 0.5);
  return p;
}

double loss_at(const FeatureMap& f, const DecoderParams& p, const Heatmap& t) {
  return bce_loss(decoder_forward(f, p), t);
}

// Worst per-tensor relative error between the analytic gradient and central
// differences, ||g - g_fd|| / max(||g||, ||g_fd||).
double gradient_check(const FeatureMap& f, DecoderParams p, const Heatmap& t) {
  const auto analytic = decoder_backward(f, p, t);
  CHECK(analytic.loss == doctest::Approx(loss_at(f, p, t)).epsilon(1e-14));
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t ti = 0; ti < p.tensors.size(); ++ti) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    auto& vals = p.tensors[ti].values;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double up = loss_at(f, p, t);
      vals[i] = orig - h;
      const double down = loss_at(f, p, t);
      vals[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double g = analytic.grad.tensors[ti].values[i];
      diff2 += (g - fd) * (g - fd);
      a2 += g * g;
      n2 += fd * fd;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    const double rel = denom > 0 ? std::sqrt(diff2) / denom : 0.0;
    INFO("tensor " << p.tensors[ti].name);
    CHECK(rel < 1e-4);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace

TEST_CASE("bce_loss examples") {
  const Heatmap half(2, 2, 0.5);
  CHECK(bce_loss(half, Heatmap(2, 2, 1.0)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(half, Heatmap(2, 2, 0.0)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // Clamped at eps: a confident wrong prediction costs -ln(1e-7).
  CHECK(bce_loss(Heatmap(1, 1, 0.0), Heatmap(1, 1, 1.0)) == doctest::Approx(-std::log(kBceEpsilon)).epsilon(1e-12));
  CHECK(bce_loss(Heatmap(1, 1, 1.0), Heatmap(1, 1, 1.0)) < 1e-6);
  CHECK_THROWS_AS(bce_loss(Heatmap(2, 2), Heatmap(2, 3)), DimensionError);
}

TEST_CASE("bce_loss equals the explicit per-pixel mean") {
  Rng rng(1);
  const auto p = random_target(rng, 7, 5), t = random_target(rng, 7, 5);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p.values()[i], kBceEpsilon, 1 - kBceEpsilon), y = t.values()[i];
    sum -= y * std::log(q) + (1 - y) * std::log(1 - q);
  }
  CHECK(bce_loss(p, t) == doctest::Approx(sum / 35).epsilon(1e-14));
}

TEST_CASE("AHD gradients match finite differences") {
  Rng rng(2);
  const DecoderConfig configs[] = {{DecoderKind::kAhd, 3, 2, 3, 2},
                                   {DecoderKind::kAhd, 3, 3, 3, 2},
                                   {DecoderKind::kAhd, 4, 2, 1, 3},
                                   {DecoderKind::kAhd, 2, 2, 5, 1}};
  for (const auto& cfg : configs) {
    const int w = 4, h = 4;
    const auto f = random_features(rng, cfg.channels, w, h);
    const auto t = random_target(rng, w * cfg.scale, h * cfg.scale);
    CHECK(gradient_check(f, random_params(rng, cfg), t) < 1e-4);
  }
}

TEST_CASE("baseline gradients match finite differences") {
  Rng rng(3);
  for (auto kind : {DecoderKind::kBilinear, DecoderKind::kDeconv, DecoderKind::kPixelShuffle}) {
    for (int s : {1, 2, 3}) {
      const DecoderConfig cfg{kind, 3, 0, 0, s};
      const auto f = random_features(rng, 3, 4, 3);
      const auto t = random_target(rng, 4 * s, 3 * s);
      INFO(to_string(kind) << " s=" << s);
      CHECK(gradient_check(f, random_params(rng, cfg), t) < 1e-4);
    }
  }
}

TEST_CASE("ahd_backward rejects other kinds") {
  Rng rng(4);
  const DecoderConfig cfg{DecoderKind::kBilinear, 3, 0, 0, 2};
  CHECK_THROWS_AS(ahd_backward(random_features(rng, 3, 2, 2), zero_params(cfg), random_target(rng, 4, 4)),
                  ParameterError);
}

TEST_CASE("lr_schedule shape") {
  TrainConfig cfg;
  cfg.lr_peak = 1e-3;
  cfg.warmup_steps = 10;
  cfg.total_steps = 110;
  CHECK(lr_schedule(0, cfg) == 0.0);
  CHECK(lr_schedule(5, cfg) == doctest::Approx(5e-4));
  CHECK(lr_schedule(10, cfg) == doctest::Approx(1e-3));
  CHECK(lr_schedule(60, cfg) == doctest::Approx(5e-4));
  CHECK(lr_schedule(110, cfg) == doctest::Approx(0.0));
  double prev = lr_schedule(10, cfg);
  for (long t = 11; t <= 110; ++t) {
    const double lr = lr_schedule(t, cfg);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(lr_schedule(111, cfg), ParameterError);
  CHECK_THROWS_AS(lr_schedule(-1, cfg), ParameterError);
}

TEST_CASE("adamw_step matches the closed-form first update") {
  const DecoderConfig dc{DecoderKind::kBilinear, 2, 0, 0, 1};
  auto p = zero_params(dc);
  p.tensors[0].values = {0.5, -0.25};
  p.tensors[1].values = {0.1};
  auto g = zeros_like(p);
  g.tensors[0].values = {2.0, -1.0};
  g.tensors[1].values = {0.0};
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  auto st = init_optim_state(p);
  const double lr = 0.01;
  adamw_step(p, g, st, cfg, lr);
  CHECK(st.step == 1);
  // Bias-corrected m/sqrt(v) is sign(g) on the first step.
  const double e = cfg.eps;
  CHECK(p.tensors[0].values[0] == doctest::Approx(0.5 * (1 - lr * 0.1) - lr * 2.0 / (2.0 + e)).epsilon(1e-14));
  CHECK(p.tensors[0].values[1] == doctest::Approx(-0.25 * (1 - lr * 0.1) + lr * 1.0 / (1.0 + e)).epsilon(1e-14));
  CHECK(p.tensors[1].values[0] == doctest::Approx(0.1 * (1 - lr * 0.1)).epsilon(1e-14));

  g.tensors[0].values[1] = NAN;
  try {
    adamw_step(p, g, st, cfg, lr);
    FAIL("expected TrainingError");
  } catch (const TrainingError& err) {
    CHECK(err.step() == 2);
  }
}

TEST_CASE("adamw_step matches a reference loop over several steps") {
  Rng rng(5);
  const DecoderConfig dc{DecoderKind::kPixelShuffle, 3, 0, 0, 2};
  auto p = random_params(rng, dc);
  auto ref = p;
  std::vector<std::vector<double>> m(p.tensors.size()), v(p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) m[i] = v[i] = std::vector<double>(p.tensors[i].numel(), 0.0);
  TrainConfig cfg;
  auto st = init_optim_state(p);
  for (int step = 1; step <= 5; ++step) {
    auto g = zeros_like(p);
    for (auto& t : g.tensors)
      for (auto& x : t.values) x = rng.normal();
    const double lr = 0.003 * step;
    adamw_step(p, g, st, cfg, lr);
    for (std::size_t ti = 0; ti < ref.tensors.size(); ++ti) {
      for (std::size_t i = 0; i < ref.tensors[ti].numel(); ++i) {
        double& w = ref.tensors[ti].values[i];
        const double gi = g.tensors[ti].values[i];
        w *= 1 - lr * cfg.weight_decay;
        m[ti][i] = cfg.beta1 * m[ti][i] + (1 - cfg.beta1) * gi;
        v[ti][i] = cfg.beta2 * v[ti][i] + (1 - cfg.beta2) * gi * gi;
        const double mh = m[ti][i] / (1 - std::pow(cfg.beta1, step));
        const double vh = v[ti][i] / (1 - std::pow(cfg.beta2, step));
        w -= lr * mh / (std::sqrt(vh) + cfg.eps);
      }
    }
  }
  for (std::size_t ti = 0; ti < p.tensors.size(); ++ti)
    for (std::size_t i = 0; i < p.tensors[ti].numel(); ++i)
      CHECK(p.tensors[ti].values[i] == doctest::Approx(ref.tensors[ti].values[i]).epsilon(1e-12));
}

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.batch_size = 0;
  CHECK_THROWS_AS(validate(cfg), ParameterError);
  cfg = {};
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(validate(cfg), ParameterError);
  cfg = {};
  cfg.lr_peak = -1;
  CHECK_THROWS_AS(validate(cfg), ParameterError);
}

TEST_CASE("training is deterministic and reduces held-out loss") {
  SceneConfig sc;
  sc.feature_width = sc.feature_height = 6;
  sc.scale = 2;
  sc.channels = 8;
  const auto data = generate_dataset(3, 24, 8, sc);
  TrainConfig cfg;
  cfg.lr_peak = 5e-3;
  cfg.warmup_steps = 5;
  cfg.epochs = 6;
  cfg.batch_size = 4;
  cfg.seed = 9;
  cfg.eval_interval = 10;
  for (auto kind : {DecoderKind::kAhd, DecoderKind::kBilinear, DecoderKind::kDeconv, DecoderKind::kPixelShuffle}) {
    const DecoderConfig dc{kind, 8, 4, 3, 2};
    const auto a = train(cfg, dc, data);
    const auto b = train(cfg, dc, data);
    INFO(to_string(kind));
    CHECK(a.params == b.params);
    REQUIRE(a.curve.size() == b.curve.size());
    REQUIRE(a.curve.size() >= 3);
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
      CHECK(a.curve[i].step == b.curve[i].step);
      CHECK(a.curve[i].train_bce == b.curve[i].train_bce);
      CHECK(a.curve[i].eval_bce == b.curve[i].eval_bce);
    }
    CHECK(a.curve.front().step == 0);
    CHECK(a.curve.back().step == 36);
    CHECK(a.curve.back().eval_bce < a.curve.front().eval_bce);
    CHECK(a.curve.back().train_bce == doctest::Approx(mean_bce(a.params, data.train)).epsilon(1e-12));
  }
}

TEST_CASE("adamw decay with zero gradients is geometric") {
  const DecoderConfig dc{DecoderKind::kBilinear, 3, 0, 0, 1};
  auto p = zero_params(dc);
  p.tensors[0].values = {1.0, -2.0, 0.5};
  p.tensors[1].values = {4.0};
  const auto start = p;
  const auto g = zeros_like(p);
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  auto st = init_optim_state(p);
  adamw_step(p, g, st, cfg, 0.01);
  for (std::size_t ti = 0; ti < p.tensors.size(); ++ti)
    for (std::size_t i = 0; i < p.tensors[ti].numel(); ++i)
      CHECK(p.tensors[ti].values[i] == doctest::Approx(start.tensors[ti].values[i] * 0.999).epsilon(1e-15));
  for (int t = 2; t <= 50; ++t) adamw_step(p, g, st, cfg, 0.01);
  for (std::size_t ti = 0; ti < p.tensors.size(); ++ti)
    for (std::size_t i = 0; i < p.tensors[ti].numel(); ++i)
      CHECK(p.tensors[ti].values[i] ==
            doctest::Approx(start.tensors[ti].values[i] * std::pow(0.999, 50)).epsilon(1e-13));
}

TEST_CASE("adamw first step on a scalar moves by lr") {
  const DecoderConfig dc{DecoderKind::kBilinear, 1, 0, 0, 1};
  auto p = zero_params(dc);
  p.tensors[0].values = {1.0};
  auto g = zeros_like(p);
  g.tensors[0].values = {1.0};
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  auto st = init_optim_state(p);
  adamw_step(p, g, st, cfg, 0.1);
  CHECK(p.tensors[0].values[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p.tensors[1].values[0] == 0.0);
}

TEST_CASE("lr_schedule is continuous at the end of warmup") {
  TrainConfig cfg;
  cfg.total_steps = 2000;
  CHECK(lr_schedule(400, cfg) == doctest::Approx(3e-5));
  CHECK(lr_schedule(200, cfg) == doctest::Approx(1.5e-5));
  CHECK(lr_schedule(399, cfg) == doctest::Approx(lr_schedule(400, cfg)).epsilon(3e-3));
  CHECK(lr_schedule(401, cfg) == doctest::Approx(lr_schedule(400, cfg)).epsilon(1e-5));
  for (long t = 0; t <= cfg.total_steps; t += 7) CHECK(lr_schedule(t, cfg) >= 0.0);
}

TEST_CASE("bce of a target against itself is its mean binary entropy") {
  std::vector<double> v(64, 0.0);
  v[10] = v[20] = 1.0;
  const Heatmap two_level(8, 8, std::move(v));
  CHECK(bce_loss(two_level, two_level) <= 2e-7);

  const auto g = point_heatmap(PointSupervision{{{20.0, 14.0}}, 2.0}, 64, 48);
  double entropy = 0.0;
  for (double t : g.values()) {
    const double p = std::clamp(t, kBceEpsilon, 1.0 - kBceEpsilon);
    entropy -= t * std::log(p) + (1 - t) * std::log(1 - p);
  }
  CHECK(bce_loss(g, g) == doctest::Approx(entropy / g.values().size()).epsilon(1e-12));
  CHECK(bce_loss(g, g) < bce_loss(Heatmap(64, 48), g));
}

TEST_CASE("one step at lr 0 leaves the parameters and loss unchanged") {
  SceneConfig sc;
  sc.feature_width = sc.feature_height = 6;
  sc.scale = 2;
  sc.channels = 8;
  const auto data = generate_dataset(1, 4, 0, sc);
  TrainConfig cfg;
  cfg.lr_peak = 0.0;
  cfg.warmup_steps = 0;
  cfg.total_steps = 1;
  cfg.batch_size = 4;
  cfg.weight_decay = 0.1;
  const DecoderConfig dc{DecoderKind::kAhd, 8, 4, 3, 2};
  const auto res = train(cfg, dc, data);
  const auto init = init_params(mix_seed(cfg.seed, 1), dc);
  CHECK(res.params == init);
  REQUIRE(res.curve.size() == 2);
  CHECK(res.curve.back().train_bce == res.curve.front().train_bce);
  CHECK(res.curve.front().train_bce == mean_bce(init, data.train));
}

TEST_CASE("default desk-scale run lowers the training loss in 2 epochs") {
  const SceneConfig sc;
  const auto data = generate_dataset(0, 512, 0, sc);
  TrainConfig cfg;
  cfg.lr_peak = 0.03;
  cfg.warmup_steps = 20;
  const auto res = train(cfg, DecoderConfig{DecoderKind::kAhd, sc.channels, 16, 5, sc.scale}, data);
  REQUIRE(res.curve.size() == 2);
  CHECK(res.curve.back().step == 64);
  CHECK(res.curve.back().train_bce < res.curve.front().train_bce);
}
