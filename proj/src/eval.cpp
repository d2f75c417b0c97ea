#include "affmap/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "affmap/error.hpp"
#include "affmap/inference.hpp"
#include "affmap/random.hpp"

namespace affmap {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_us(Clock::time_point t0, Clock::time_point t1) {
  return std::chrono::duration<double, std::micro>(t1 - t0).count();
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kHit: return "hit";
    case Outcome::kMiss: return "miss";
    case Outcome::kRefused: return "refused";
  }
  return "unknown";
}

Outcome evaluate_case(const Heatmap& m, const BinaryMask& region, double tau) {
  if (m.width() != region.width() || m.height() != region.height()) {
    throw DimensionError("evaluate_case: heatmap and success region dimensions differ");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw ParameterError("evaluate_case: threshold must lie in [0, 1]");
  const Peak p = argmax_peak(m);
  if (p.value < tau) return Outcome::kRefused;
  return region.contains(p.coord) ? Outcome::kHit : Outcome::kMiss;
}

std::vector<EvalCase> eval_cases_from(std::span<const SyntheticScene> scenes) {
  std::vector<EvalCase> cases;
  cases.reserve(scenes.size());
  for (const auto& sc : scenes) cases.push_back({sc.features, sc.success_region, sc.annotation.id});
  return cases;
}

LatencyStats summarize_latency(std::vector<double> samples_us) {
  LatencyStats st;
  st.samples_us = std::move(samples_us);
  if (st.samples_us.empty()) return st;
  std::vector<double> sorted = st.samples_us;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  st.mean_us = mean_of(sorted);
  st.median_us = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  st.p95_us = sorted[std::max<std::size_t>(rank, 1) - 1];
  return st;
}

EvalReport run_eval(const DecoderParams& params, std::span<const EvalCase> cases, double tau) {
  if (cases.empty()) throw ParameterError("run_eval: no cases");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ParameterError("run_eval: threshold must lie in [0, 1]");
  InferenceSession session(params);
  EvalReport rep;
  rep.threshold = tau;
  rep.n_cases = cases.size();
  std::vector<double> latencies;
  latencies.reserve(cases.size());
  for (const auto& c : cases) {
    const auto t0 = Clock::now();
    const Heatmap m = session.run(c.features);
    const auto t1 = Clock::now();
    CaseRecord rec{c.instruction_id, argmax_peak(m), evaluate_case(m, c.success_region, tau), elapsed_us(t0, t1)};
    switch (rec.outcome) {
      case Outcome::kHit: ++rep.hits; break;
      case Outcome::kMiss: ++rep.misses; break;
      case Outcome::kRefused: ++rep.refusals; break;
    }
    latencies.push_back(rec.latency_us);
    rep.cases.push_back(std::move(rec));
  }
  rep.accuracy = static_cast<double>(rep.hits) / static_cast<double>(rep.n_cases);
  const std::size_t acted = rep.n_cases - rep.refusals;
  rep.accuracy_non_refused = acted == 0 ? 0.0 : static_cast<double>(rep.hits) / static_cast<double>(acted);
  rep.latency = summarize_latency(std::move(latencies));
  return rep;
}

LatencyStats time_inference(const DecoderParams& params, int feature_width, int feature_height, int repeats,
                            int warmup, std::uint64_t seed) {
  if (repeats < 10) throw ParameterError("time_inference: repeats must be >= 10");
  if (warmup < 3) throw ParameterError("time_inference: at least 3 warmup passes are required");
  FeatureMap f(params.config.channels, feature_width, feature_height);
  Rng rng(seed);
  for (auto& v : f.values()) v = rng.normal();

  InferenceSession session(params);
  for (int i = 0; i < warmup; ++i) (void)session.run(f);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = Clock::now();
    const Heatmap m = session.run(f);
    const auto t1 = Clock::now();
    if (m.empty()) throw DimensionError("time_inference: empty output");
    samples.push_back(elapsed_us(t0, t1));
  }
  return summarize_latency(std::move(samples));
}

DecoderConfig ExperimentConfig::decoder(DecoderKind kind) const {
  return {kind, scene.channels, compressed, kernel, scene.scale};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, DecoderKind kind, std::uint64_t seed) {
  const Dataset data = generate_dataset(seed, cfg.train_scenes, cfg.held_out_scenes, cfg.scene);
  if (data.held_out.empty()) throw ParameterError("run_experiment: held-out split is empty");
  TrainConfig tc = cfg.train;
  tc.seed = seed;

  ExperimentResult res;
  res.training = train(tc, cfg.decoder(kind), data);
  const auto cases = eval_cases_from(data.held_out);
  res.report = run_eval(res.training.params, cases, cfg.threshold);
  res.eval_bce = mean_bce(res.training.params, data.held_out);
  res.train_hash = dataset_hash(data.train);
  res.eval_hash = dataset_hash(data.held_out);
  return res;
}

AblationTable ablate(std::span<const DecoderKind> kinds, const ExperimentConfig& cfg,
                     std::span<const std::uint64_t> seeds) {
  if (kinds.size() < 2) throw ParameterError("ablate: at least two decoder kinds are required");
  if (seeds.empty()) throw ParameterError("ablate: at least one seed is required");

  AblationTable table;
  for (const auto seed : seeds) {
    for (const auto kind : kinds) {
      const auto r = run_experiment(cfg, kind, seed);
      table.rows.push_back({kind, seed, r.report.accuracy, r.eval_bce, r.report.latency.median_us, r.train_hash,
                            r.eval_hash});
    }
  }

  std::vector<DecoderKind> distinct;
  for (const auto kind : kinds) {
    if (std::find(distinct.begin(), distinct.end(), kind) == distinct.end()) distinct.push_back(kind);
  }
  for (const auto kind : distinct) {
    std::vector<double> acc, bce;
    for (const auto& row : table.rows) {
      if (row.kind != kind) continue;
      acc.push_back(row.accuracy);
      bce.push_back(row.eval_bce);
    }
    table.summary.push_back({kind, acc.size(), mean_of(acc), sample_std(acc), mean_of(bce), sample_std(bce)});
  }
  return table;
}

}  // namespace affmap
