#include "affmap/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>

#include "affmap/error.hpp"
#include "affmap/eval.hpp"
#include "affmap/io.hpp"
#include "affmap/synthesis.hpp"
#include "affmap/training.hpp"

namespace affmap {
namespace {

// Thrown for bad flag values that CLI11 cannot validate on its own.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

std::vector<DecoderKind> parse_kinds(const std::string& s) {
  std::vector<DecoderKind> kinds;
  for (const auto& part : split_commas(s)) {
    const auto k = parse_decoder_kind(part);
    if (!k) throw UsageError("unknown decoder '" + part + "' (expected ahd, bilinear, deconv, pixelshuffle)");
    kinds.push_back(*k);
  }
  return kinds;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split_commas(s)) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (part.empty() || used != part.size() || part[0] == '-') throw UsageError("invalid seed '" + part + "'");
    seeds.push_back(v);
  }
  return seeds;
}

std::string format_peak(const Peak& p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%d %d %.6f", p.coord.x, p.coord.y, p.value);
  return buf;
}

bool safe_file_stem(const std::string& id) {
  return !id.empty() && id != "." && id != ".." && id.find('/') == std::string::npos &&
         id.find('\\') == std::string::npos;
}

int run_synth(const std::string& annotations, const std::string& out_dir, double sigma, double alpha,
              std::ostream& out) {
  const auto records = parse_annotations(annotations, {sigma, alpha});
  std::filesystem::create_directories(out_dir);
  for (const auto& rec : records) {
    if (!safe_file_stem(rec.id)) throw FormatError("record id '" + rec.id + "' is not usable as a file name");
    const auto path = std::filesystem::path(out_dir) / (rec.id + ".afhm");
    write_heatmap(path, synthesize(rec));
    out << rec.id << ' ' << path.string() << '\n';
  }
  return kExitOk;
}

int run_train(const std::string& config, std::optional<std::uint64_t> seed, const std::string& decoder,
              const std::string& out_path, std::ostream& out) {
  const auto kind = parse_decoder_kind(decoder);
  if (!kind) throw UsageError("unknown decoder '" + decoder + "'");
  const auto cfg = load_experiment_config(config);
  TrainConfig tc = cfg.train;
  if (seed) tc.seed = *seed;
  const auto data = generate_dataset(tc.seed, cfg.train_scenes, cfg.held_out_scenes, cfg.scene);
  const auto res = train(tc, cfg.decoder(*kind), data);
  write_checkpoint(out_path, res.params);
  const std::string csv_path = out_path + ".loss.csv";
  write_text_file(csv_path, loss_curve_csv(res.curve));
  const auto& last = res.curve.back();
  out << "decoder " << to_string(*kind) << " params " << res.params.parameter_count() << " steps " << last.step
      << " train_bce " << last.train_bce << " eval_bce " << last.eval_bce << '\n';
  out << "checkpoint " << out_path << "\nloss " << csv_path << '\n';
  return kExitOk;
}

int run_eval_cmd(const std::string& ckpt, const std::string& cases_path, double threshold,
                 const std::string& report_path, std::ostream& out) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("--threshold must lie in [0, 1]");
  const auto params = read_checkpoint(ckpt);
  const auto cases = load_eval_cases(cases_path);
  const auto rep = run_eval(params, cases, threshold);
  const auto text = eval_report_json(rep);
  if (report_path.empty()) {
    out << text;
  } else {
    write_text_file(report_path, text);
    out << "cases " << rep.n_cases << " hits " << rep.hits << " misses " << rep.misses << " refusals "
        << rep.refusals << " accuracy " << rep.accuracy << '\n';
  }
  return kExitOk;
}

int run_ablate(const std::string& decoders, const std::string& seeds, const std::string& config,
               const std::string& out_path, std::ostream& out) {
  const auto kinds = parse_kinds(decoders);
  if (kinds.size() < 2) throw UsageError("--decoders needs at least two decoder kinds");
  const auto seed_list = parse_seeds(seeds);
  const auto cfg = load_experiment_config(config);
  const auto table = ablate(kinds, cfg, seed_list);
  write_text_file(out_path, ablation_csv(table.rows));
  char buf[160];
  out << "kind,runs,accuracy_mean,accuracy_std,eval_bce_mean,eval_bce_std\n";
  for (const auto& s : table.summary) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f,%.6f\n", std::string(to_string(s.kind)).c_str(), s.runs,
                  s.accuracy_mean, s.accuracy_std, s.eval_bce_mean, s.eval_bce_std);
    out << buf;
  }
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"affmap: affordance heatmap synthesis, decoder training and evaluation", "affmap"};
  app.require_subcommand(1);

  std::string annotations, out_dir, config, decoder = "ahd", out_path, ckpt, cases, report, heatmap, in_path;
  std::string decoders = "ahd,bilinear,deconv,pixelshuffle", seeds = "0,1,2,3,4";
  double sigma = 0.0, alpha = kDefaultBoxAlpha, threshold = 0.0;
  std::uint64_t seed = 0;

  auto* synth = app.add_subcommand("synth", "Synthesize AFHM ground-truth heatmaps from annotations");
  synth->add_option("--annotations", annotations, "Annotation JSON file")->required();
  synth->add_option("--out-dir", out_dir, "Output directory")->required();
  synth->add_option("--sigma", sigma, "Default sigma in pixels (<= 0: 5 px per 224 px)");
  synth->add_option("--alpha", alpha, "Default box sigma-to-extent ratio");

  auto* train_cmd = app.add_subcommand("train", "Train a decoder on synthetic scenes");
  train_cmd->add_option("--config", config, "Experiment config JSON")->required();
  auto* seed_opt = train_cmd->add_option("--seed", seed, "Seed for data, init and shuffling");
  train_cmd->add_option("--decoder", decoder, "ahd, bilinear, deconv or pixelshuffle");
  train_cmd->add_option("--out", out_path, "Checkpoint path; the loss CSV goes to <out>.loss.csv")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with peak-in-region accuracy");
  eval_cmd->add_option("--ckpt", ckpt, "AHDP checkpoint")->required();
  eval_cmd->add_option("--cases", cases, "Eval cases JSON")->required();
  eval_cmd->add_option("--threshold", threshold, "Refusal threshold in [0, 1]");
  eval_cmd->add_option("--report", report, "Report JSON path (stdout if omitted)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Compare decoders on identical data over several seeds");
  ablate_cmd->add_option("--decoders", decoders, "Comma-separated decoder kinds");
  ablate_cmd->add_option("--seeds", seeds, "Comma-separated seeds");
  ablate_cmd->add_option("--config", config, "Experiment config JSON")->required();
  ablate_cmd->add_option("--out", out_path, "Ablation CSV path")->required();

  auto* peak = app.add_subcommand("peak", "Print the argmax of an AFHM heatmap as 'x y value'");
  peak->add_option("--heatmap", heatmap, "AFHM file")->required();

  auto* pgm = app.add_subcommand("export-pgm", "Convert an AFHM heatmap to a 16-bit PGM");
  pgm->add_option("--in", in_path, "AFHM file")->required();
  pgm->add_option("--out", out_path, "PGM file")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    if (e.get_exit_code() != 0) err << app.help();
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return run_synth(annotations, out_dir, sigma, alpha, out);
    if (train_cmd->parsed()) {
      return run_train(config, seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt, decoder,
                       out_path, out);
    }
    if (eval_cmd->parsed()) return run_eval_cmd(ckpt, cases, threshold, report, out);
    if (ablate_cmd->parsed()) return run_ablate(decoders, seeds, config, out_path, out);
    if (peak->parsed()) {
      out << format_peak(argmax_peak(read_heatmap(heatmap))) << '\n';
      return kExitOk;
    }
    if (pgm->parsed()) {
      export_pgm(out_path, read_heatmap(in_path));
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace affmap
