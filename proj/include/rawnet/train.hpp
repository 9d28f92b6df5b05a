#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rawnet/augment.hpp"
#include "rawnet/data.hpp"
#include "rawnet/losses.hpp"
#include "rawnet/metrics.hpp"
#include "rawnet/model.hpp"

namespace rawnet {

struct TrainSeeds {
  std::uint64_t init = 0;
  std::uint64_t shuffle = 0;
  std::uint64_t augment = 0;
};

struct TrainConfig {
  RawNetLiteConfig model;
  LossConfig loss;
  double lr = 1e-4;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 10;
  std::size_t patience = 3;
  std::size_t max_steps = 0;  // 0: no step budget
  TrainSeeds seeds;
  std::optional<augment::AugmentConfig> augment;  // seed taken from seeds.augment
  bool track_train_accuracy = false;  // extra eval pass over the clean train set per epoch
  bool strict = false;

  void validate() const;  // throws ConfigError
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;  // fake class at threshold 0.5; undefined counts as 0
  std::optional<double> train_accuracy;
  std::size_t steps = 0;  // cumulative optimizer steps at the end of the epoch
  std::size_t skipped = 0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  bool stopped_early = false;
  bool step_budget_hit = false;
};

/// Patience counter over validation F1. Improvement means strictly greater,
/// so ties keep the earliest epoch.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Returns true when training should stop after this epoch.
  bool update(std::size_t epoch, double val_f1);
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  bool improved() const { return improved_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
  bool have_best_ = false;
  bool improved_ = false;
  std::size_t bad_ = 0;
};

struct TrainResult {
  std::vector<std::uint8_t> checkpoint;  // best epoch, serialized
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& cfg, const std::vector<data::ManifestEntry>& train_set,
                  const std::vector<data::ManifestEntry>& val_set, const data::ClipSource& source,
                  const EpochCallback& on_epoch = {});

struct EvalOutput {
  EvalReport report;
  std::vector<ScoreRecord> scores;  // already rounded to the score-file precision
  std::string score_text;
  std::size_t skipped = 0;
};

/// Eval-mode scoring of `test_set`. When `train_set` is given the two are
/// checked for overlap first (ProtocolViolation). The model is not modified.
EvalOutput evaluate(Model& model, const std::vector<data::ManifestEntry>& test_set, const data::ClipSource& source,
                    std::size_t batch_size = 16, const std::vector<data::ManifestEntry>* train_set = nullptr,
                    bool strict = false);

/// Probabilities for every entry in order (no metrics); skipped entries are omitted.
std::vector<ScoreRecord> score_entries(Model& model, const std::vector<data::ManifestEntry>& entries,
                                       const data::ClipSource& source, std::size_t batch_size, bool strict,
                                       std::size_t* skipped = nullptr);

std::string format_history_csv(const TrainHistory& h);

}  // namespace rawnet
