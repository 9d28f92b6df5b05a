#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace rawnet {

// Fake is the positive class throughout.
inline constexpr int kLabelReal = 0;
inline constexpr int kLabelFake = 1;

struct ScoreRecord {
  std::string path;
  int label = kLabelReal;
  double score = 0.0;  // P(fake)
};

struct Confusion {
  std::size_t tp = 0;  // fake predicted fake
  std::size_t tn = 0;  // real predicted real
  std::size_t fp = 0;  // real predicted fake
  std::size_t fn = 0;  // fake predicted real

  std::size_t total() const { return tp + tn + fp + fn; }
};

/// Undefined rates (empty denominators) are std::nullopt, never 0.
struct ClassMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::size_t support = 0;
};

struct EvalReport {
  ClassMetrics real;
  ClassMetrics fake;
  double accuracy = 0.0;
  std::optional<double> macro_f1;
  double threshold = 0.5;
  Confusion counts;
  std::optional<double> eer;
  std::optional<double> eer_threshold;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

struct DetPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

/// Predicted fake iff score >= threshold.
Confusion confusion_at(std::span<const ScoreRecord> records, double threshold);

/// Per-class P/R/F1, accuracy and macro F1 from counts.
EvalReport metrics_from_confusion(const Confusion& c, double threshold);

EvalReport classification_metrics(std::span<const ScoreRecord> records, double threshold = 0.5);

/// Threshold sweep over the distinct scores; returns (FPR + FNR) / 2 at the
/// threshold minimizing |FPR - FNR| (lowest threshold on ties). Throws
/// UndefinedMetricError unless both classes are present.
EerResult eer(std::span<const ScoreRecord> records);

/// (threshold, FPR, FNR) at every distinct score, ascending.
std::vector<DetPoint> det_curve(std::span<const ScoreRecord> records);

/// classification_metrics plus the EER fields.
EvalReport evaluate_scores(std::span<const ScoreRecord> records, double threshold = 0.5);

nlohmann::json report_to_json(const EvalReport& r);

/// Table in the usual per-class precision / recall / f1-score / support layout.
std::string format_report_table(const EvalReport& r, const std::string& title);

// Score files: header `path,label,score`, label literal real|fake.
std::string format_scores(std::span<const ScoreRecord> records);
void write_score_file(const std::filesystem::path& path, std::span<const ScoreRecord> records);
std::vector<ScoreRecord> parse_scores(const std::string& text);
std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path);

std::string label_name(int label);
int parse_label(const std::string& s);  // throws ParseError

}  // namespace rawnet
