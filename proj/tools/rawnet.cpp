// rawnet: command-line front end for preprocessing, training, evaluation and
// report generation.
//
// Exit codes: 0 ok, 1 usage/config, 2 data, 3 protocol violation, 4 numeric.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rawnet/audio_io.hpp"
#include "rawnet/data.hpp"
#include "rawnet/errors.hpp"
#include "rawnet/log.hpp"
#include "rawnet/metrics.hpp"
#include "rawnet/model.hpp"
#include "rawnet/protocol.hpp"
#include "rawnet/runner.hpp"
#include "rawnet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rawnet;

namespace {

std::optional<fs::path> env_cache_dir() {
  if (const char* v = std::getenv("RAWNET_CACHE_DIR"); v && *v) return fs::path(v);
  return std::nullopt;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + p.string());
  out << text;
}

int cmd_preprocess(const fs::path& manifest, std::optional<fs::path> cache, bool strict) {
  if (!cache) cache = env_cache_dir();
  if (!cache) throw ArgumentError("preprocess needs --cache or RAWNET_CACHE_DIR");
  const auto entries = data::parse_manifest_file(manifest);
  data::FileClipSource source(*cache);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(entries.size());
  std::vector<int> status(entries.size(), 0);  // 0 new, 1 hit, 2 failed
  std::vector<char> silent(entries.size(), 0);
  std::vector<std::string> errors(entries.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      audio::FixedClip clip;
      status[k] = source.ensure_cached(entries[k], &clip) ? 1 : 0;
      silent[k] = clip.silent;
    } catch (const std::exception& e) {
      status[k] = 2;
      errors[k] = e.what();
    }
  }
  std::size_t made = 0, hits = 0, n_silent = 0;
  std::vector<std::string> skipped;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (status[k] == 2) {
      if (strict) throw DecodeError("strict mode: cannot preprocess '" + entries[k].path + "': " + errors[k]);
      log::warn("skipping '" + entries[k].path + "': " + errors[k]);
      skipped.push_back(entries[k].path);
      continue;
    }
    (status[k] == 1 ? hits : made)++;
    n_silent += silent[k];
  }
  json summary{{"entries", entries.size()},
               {"cached", made + hits},
               {"computed", made},
               {"cache_hits", hits},
               {"silent", n_silent},
               {"skipped", skipped.size()},
               {"skipped_paths", skipped},
               {"cache_dir", cache->string()}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_train_or_protocol(const fs::path& config, const std::vector<std::string>& sets, bool dry_run,
                          bool evaluate_tests) {
  const RunConfig cfg = load_run_config(config, sets);
  PreparedRun run = prepare_run(cfg);
  if (dry_run) {
    json out = dataset_summary(run);
    out["config"] = run_config_to_json(cfg);
    std::cout << out.dump(2) << "\n";
    return 0;
  }
  const RunFiles files = execute_run(run, evaluate_tests);
  json out{{"checkpoint", files.checkpoint.string()},
           {"history", files.history.string()},
           {"config", files.config_echo.string()}};
  if (!files.figure_data.empty()) {
    out["figure_data"] = files.figure_data.string();
    std::ifstream in(cfg.output_dir / "report.txt");
    std::cerr << in.rdbuf();
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out_dir,
             const std::optional<fs::path>& train_manifest, std::size_t batch_size, bool strict) {
  CheckpointMeta meta;
  Model model = load_checkpoint(checkpoint, &meta);
  const auto entries = data::parse_manifest_file(manifest);
  std::vector<data::ManifestEntry> train_entries;
  if (train_manifest) train_entries = data::parse_manifest_file(*train_manifest);
  data::FileClipSource source(env_cache_dir());
  const EvalOutput ev =
      evaluate(model, entries, source, batch_size, train_manifest ? &train_entries : nullptr, strict);
  fs::create_directories(out_dir);
  write_text(out_dir / "scores.csv", ev.score_text);
  json report{{"checkpoint", fs::absolute(checkpoint).string()},
              {"manifest", fs::absolute(manifest).string()},
              {"skipped", ev.skipped},
              {"metrics", report_to_json(ev.report)}};
  write_text(out_dir / "report.json", report.dump(2) + "\n");
  const std::string table = format_report_table(ev.report, "test set: " + manifest.filename().string());
  write_text(out_dir / "report.txt", table);
  std::cout << table;
  return 0;
}

int cmd_infer(const fs::path& checkpoint, const fs::path& wav) {
  Model model = load_checkpoint(checkpoint);
  const audio::FixedClip clip = audio::preprocess_file(wav);
  nn::Tensor<float> batch({1, 1, audio::kClipLength});
  std::copy(clip.samples.begin(), clip.samples.end(), batch.data.begin());
  const auto p = model.forward(batch, nn::Mode::eval);
  std::printf("%.9g\n", static_cast<double>(p[0]));
  return 0;
}

int cmd_metrics(const fs::path& scores, double threshold, const std::optional<fs::path>& out,
                const std::optional<fs::path>& det) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("--threshold must lie in [0, 1]");
  const auto records = read_score_file(scores);
  const EvalReport r = evaluate_scores(records, threshold);
  const std::string text = report_to_json(r).dump(2) + "\n";
  if (out) write_text(*out, text);
  if (det) {
    std::string csv = "threshold,fpr,fnr\n";
    char buf[96];
    for (const auto& p : det_curve(records)) {
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", p.threshold, p.fpr, p.fnr);
      csv += buf;
    }
    write_text(*det, csv);
  }
  std::cout << format_report_table(r, scores.filename().string());
  return 0;
}

int cmd_figure_data(const fs::path& dir, const std::optional<fs::path>& out) {
  const std::string csv = figure_data_csv(dir);
  if (out) write_text(*out, csv);
  else std::cout << csv;
  return 0;
}

int cmd_synth(const fs::path& out, std::size_t n, std::uint64_t seed) {
  data::SanitySpec spec;
  spec.n_per_class = n;
  spec.seed = seed;
  spec.domain = kDomainSynthetic;
  const auto entries = data::write_sanity_dataset(out, spec);
  data::write_manifest_file(out / "manifest.csv", entries);
  std::cout << (out / "manifest.csv").string() << "\n";
  return 0;
}

int exit_code(ErrorKind k) { return static_cast<int>(k); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rawnet: raw-waveform audio deepfake detection toolkit"};
  app.require_subcommand(1);
  int verbosity = 1;
  app.add_option("-v,--verbosity", verbosity, "0 quiet, 1 warnings, 2 info, 3 debug")->check(CLI::Range(0, 3));

  fs::path manifest, config, checkpoint, out_dir, input, report_dir;
  std::optional<fs::path> cache, train_manifest, out_file, det_file;
  std::vector<std::string> sets;
  bool strict = false, dry_run = false;
  double threshold = 0.5;
  std::size_t batch_size = 16, n_per_class = 64;
  std::uint64_t seed = 7;

  auto* pre = app.add_subcommand("preprocess", "materialize the clip cache for a manifest");
  pre->add_option("--manifest", manifest, "manifest CSV")->required();
  pre->add_option("--cache", cache, "cache directory (default $RAWNET_CACHE_DIR)");
  pre->add_flag("--strict", strict, "fail on the first unreadable file");

  auto add_run_options = [&](CLI::App* c) {
    c->add_option("config", config, "run configuration JSON")->required();
    c->add_option("--set", sets, "override a field: dotted.path=json")->take_all();
    c->add_flag("--dry-run", dry_run, "validate and print dataset sizes only");
  };
  auto* train_cmd = app.add_subcommand("train", "train a model from a run configuration");
  add_run_options(train_cmd);
  auto* proto_cmd = app.add_subcommand("protocol", "train and evaluate every test set of a protocol");
  add_run_options(proto_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "score a manifest with a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--manifest", manifest)->required();
  eval_cmd->add_option("--out", out_dir, "output directory")->required();
  eval_cmd->add_option("--train-manifest", train_manifest, "training manifest for the disjointness check");
  eval_cmd->add_option("--batch-size", batch_size)->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--strict", strict);

  auto* infer_cmd = app.add_subcommand("infer", "print P(fake) for one WAV file");
  infer_cmd->add_option("--checkpoint", checkpoint)->required();
  infer_cmd->add_option("wav", input)->required();

  auto* metrics_cmd = app.add_subcommand("metrics", "recompute metrics from a score file");
  metrics_cmd->add_option("scores", input)->required();
  metrics_cmd->add_option("--threshold", threshold);
  metrics_cmd->add_option("--out", out_file, "also write the report JSON here");
  metrics_cmd->add_option("--det", det_file, "write (threshold, FPR, FNR) triples as CSV");

  auto* fig_cmd = app.add_subcommand("figure-data", "collect report JSONs into test_set,config,f1_fake,eer");
  fig_cmd->add_option("report_dir", report_dir)->required();
  fig_cmd->add_option("--out", out_file);

  auto* synth_cmd = app.add_subcommand("synth-sanity", "write the synthetic sine/noise dataset");
  synth_cmd->add_option("--out", out_dir)->required();
  synth_cmd->add_option("--n", n_per_class, "clips per class");
  synth_cmd->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  log::set_level(static_cast<log::Level>(verbosity));

  try {
    if (*pre) return cmd_preprocess(manifest, cache, strict);
    if (*train_cmd) return cmd_train_or_protocol(config, sets, dry_run, false);
    if (*proto_cmd) return cmd_train_or_protocol(config, sets, dry_run, true);
    if (*eval_cmd) return cmd_eval(checkpoint, manifest, out_dir, train_manifest, batch_size, strict);
    if (*infer_cmd) return cmd_infer(checkpoint, input);
    if (*metrics_cmd) return cmd_metrics(input, threshold, out_file, det_file);
    if (*fig_cmd) return cmd_figure_data(report_dir, out_file);
    if (*synth_cmd) return cmd_synth(out_dir, n_per_class, seed);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(ErrorKind::data);
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(ErrorKind::config);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(ErrorKind::config);
  }
  return 1;
}
