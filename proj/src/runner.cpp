#include "rawnet/runner.hpp"

#include <fstream>

#include "rawnet/errors.hpp"
#include "rawnet/rng.hpp"

namespace rawnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + p.string());
  out << text;
}

std::vector<data::ManifestEntry> sanity_pool(const RunConfig& cfg) {
  const fs::path dir = cfg.sanity.data_dir.value_or(cfg.output_dir / "sanity_data");
  data::SanitySpec spec;
  spec.n_per_class = cfg.sanity.n_per_class;
  spec.seed = cfg.sanity.seed;
  spec.domain = kDomainSynthetic;
  auto entries = data::write_sanity_dataset(dir, spec);
  data::write_manifest_file(dir / "manifest.csv", entries);
  return entries;
}

}  // namespace

PreparedRun prepare_run(const RunConfig& cfg) {
  PreparedRun run;
  run.cfg = cfg;
  run.plan = cfg.protocol == Protocol::custom ? custom_plan(cfg.mix)
                                              : plan_protocol(cfg.protocol, cfg.scale, cfg.mix.seed);

  std::vector<data::ManifestEntry> pool;
  if (cfg.manifests.empty()) {
    if (cfg.protocol != Protocol::sanity) throw ConfigError("config field 'manifests' is empty");
    pool = sanity_pool(cfg);
  } else {
    for (const auto& m : cfg.manifests) {
      if (!fs::exists(m)) throw ConfigError("config field 'manifests': file '" + m.string() + "' does not exist");
      auto entries = data::parse_manifest_file(m);
      pool.insert(pool.end(), entries.begin(), entries.end());
    }
  }
  if (cfg.sanity.permute_labels) {
    // label-shuffled control: same class counts, labels unrelated to content
    std::vector<int> labels;
    for (const auto& e : pool) labels.push_back(e.label);
    StreamRng rng{cfg.sanity.seed, 0x7065726dULL};
    deterministic_shuffle(labels, rng);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i].label = labels[i];
  }
  run.composed = compose_protocol(run.plan, pool);
  run.source = std::make_unique<data::FileClipSource>(cfg.cache_dir);
  return run;
}

json dataset_summary(const PreparedRun& run) {
  auto count = [](const std::vector<data::ManifestEntry>& v) {
    std::size_t r = 0, f = 0;
    for (const auto& e : v) (e.label == kLabelFake ? f : r)++;
    return json{{"real", r}, {"fake", f}, {"total", v.size()}};
  };
  json tests = json::object();
  for (const auto& [name, entries] : run.composed.tests) tests[name] = count(entries);
  return {{"protocol", to_string(run.plan.protocol)},
          {"scale", run.plan.scale},
          {"augment", run.plan.augment || (run.plan.protocol == Protocol::custom && run.cfg.train.augment)},
          {"train", count(run.composed.train)},
          {"val", count(run.composed.val)},
          {"test", tests}};
}

RunFiles execute_run(PreparedRun& run, bool evaluate_tests) {
  const fs::path out = run.cfg.output_dir;
  fs::create_directories(out);
  RunFiles files;
  files.config_echo = out / "config.json";
  const json echo = run_config_to_json(run.cfg);
  write_text(files.config_echo, echo.dump(2) + "\n");

  TrainConfig tcfg = run.cfg.train;
  ProtocolResult result;
  if (evaluate_tests) {
    result = run_protocol(run.plan, run.composed, tcfg, *run.source);
  } else {
    if (run.plan.augment && !tcfg.augment) tcfg.augment = augment::AugmentConfig{};
    if (!run.plan.augment && run.plan.protocol != Protocol::custom) tcfg.augment.reset();
    result.training = train(tcfg, run.composed.train, run.composed.val, *run.source);
  }

  files.checkpoint = out / "checkpoint.rnl";
  {
    std::ofstream f(files.checkpoint, std::ios::binary);
    if (!f) throw ArgumentError("cannot write " + files.checkpoint.string());
    f.write(reinterpret_cast<const char*>(result.training.checkpoint.data()),
            static_cast<std::streamsize>(result.training.checkpoint.size()));
  }
  files.history = out / "history.csv";
  write_text(files.history, format_history_csv(result.training.history));
  files.training = result.training.history;

  if (evaluate_tests) {
    fs::create_directories(out / "scores");
    fs::create_directories(out / "reports");
    std::string tables;
    const std::string proto = to_string(run.plan.protocol);
    for (const auto& t : result.tests) {
      write_text(out / "scores" / (t.name + ".csv"), t.eval.score_text);
      const json report = test_report_json(proto, t.name, run.plan.scale, t.eval.report, echo);
      write_text(out / "reports" / (t.name + ".json"), report.dump(2) + "\n");
      std::string title = "[" + proto + "] test set: " + t.name;
      if (run.plan.scale != 1.0) title += " (desk scale x" + std::to_string(run.plan.scale) + ")";
      tables += format_report_table(t.eval.report, title) + "\n";
    }
    write_text(out / "report.txt", tables);
    files.figure_data = out / "figure_data.csv";
    write_text(files.figure_data, figure_data_csv(out / "reports"));
  }
  return files;
}

}  // namespace rawnet
