#pragma once

#include <filesystem>
#include <memory>

#include "json.hpp"
#include "rawnet/protocol.hpp"
#include "rawnet/run_config.hpp"

namespace rawnet {

/// A RunConfig turned into concrete datasets.
struct PreparedRun {
  RunConfig cfg;
  ProtocolPlan plan;
  ComposedProtocol composed;
  std::unique_ptr<data::FileClipSource> source;
};

/// Loads the manifests (or writes the synthetic set for the sanity protocol),
/// composes the pools and checks disjointness.
PreparedRun prepare_run(const RunConfig& cfg);

/// Sizes per role and class, as printed by --dry-run.
nlohmann::json dataset_summary(const PreparedRun& run);

struct RunFiles {
  std::filesystem::path checkpoint;
  std::filesystem::path history;
  std::filesystem::path config_echo;
  std::filesystem::path figure_data;  // empty unless test sets were evaluated
  TrainHistory training;
};

/// Trains, writes checkpoint.rnl, history.csv and config.json into the output
/// directory. With `evaluate_tests` it also writes scores/<set>.csv,
/// reports/<set>.json, report.txt and figure_data.csv.
RunFiles execute_run(PreparedRun& run, bool evaluate_tests);

}  // namespace rawnet
