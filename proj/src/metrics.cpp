#include "rawnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rawnet/csv.hpp"
#include "rawnet/errors.hpp"

namespace rawnet {

using nlohmann::json;

Confusion confusion_at(std::span<const ScoreRecord> records, double threshold) {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(records.size());
  // integer counts, so the reduction order does not matter
#pragma omp parallel for reduction(+ : tp, tn, fp, fn) if (n > 50000)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    const bool pred_fake = r.score >= threshold;
    if (r.label == kLabelFake) {
      if (pred_fake) ++tp; else ++fn;
    } else {
      if (pred_fake) ++fp; else ++tn;
    }
  }
  return {tp, tn, fp, fn};
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::size_t hit, std::size_t predicted, std::size_t support) {
  ClassMetrics m;
  m.support = support;
  if (support == 0) return m;  // absent class: everything undefined
  m.precision = ratio(hit, predicted);
  m.recall = ratio(hit, support);
  if (m.precision && m.recall) {
    const double p = *m.precision, r = *m.recall;
    m.f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return m;
}

}  // namespace

EvalReport metrics_from_confusion(const Confusion& c, double threshold) {
  EvalReport r;
  r.threshold = threshold;
  r.counts = c;
  r.fake = class_metrics(c.tp, c.tp + c.fp, c.tp + c.fn);
  r.real = class_metrics(c.tn, c.tn + c.fn, c.tn + c.fp);
  r.accuracy = c.total() ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 0.0;
  if (r.fake.f1 && r.real.f1) r.macro_f1 = 0.5 * (*r.fake.f1 + *r.real.f1);
  return r;
}

EvalReport classification_metrics(std::span<const ScoreRecord> records, double threshold) {
  if (records.empty()) throw UndefinedMetricError("no score records");
  return metrics_from_confusion(confusion_at(records, threshold), threshold);
}

std::vector<DetPoint> det_curve(std::span<const ScoreRecord> records) {
  std::size_t n_real = 0, n_fake = 0;
  for (const auto& r : records) (r.label == kLabelFake ? n_fake : n_real)++;
  if (n_real == 0 || n_fake == 0)
    throw UndefinedMetricError("EER undefined: need both real and fake records (got " + std::to_string(n_real) +
                               " real, " + std::to_string(n_fake) + " fake)");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].score < records[b].score; });

  std::vector<DetPoint> out;
  std::size_t real_below = 0, fake_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double tau = records[order[i]].score;
    const std::size_t fp = n_real - real_below;
    const std::size_t fn = fake_below;
    out.push_back({tau, static_cast<double>(fp) / static_cast<double>(n_real),
                   static_cast<double>(fn) / static_cast<double>(n_fake)});
    for (; i < order.size() && records[order[i]].score == tau; ++i)
      (records[order[i]].label == kLabelFake ? fake_below : real_below)++;
  }
  return out;
}

EerResult eer(std::span<const ScoreRecord> records) {
  for (const auto& r : records)
    if (!std::isfinite(r.score)) throw UndefinedMetricError("non-finite score for " + r.path);
  const auto curve = det_curve(records);
  const DetPoint* best = &curve.front();
  double best_gap = std::abs(best->fpr - best->fnr);
  for (const auto& p : curve) {
    const double gap = std::abs(p.fpr - p.fnr);
    if (gap < best_gap) {
      best_gap = gap;
      best = &p;
    }
  }
  return {(best->fpr + best->fnr) / 2.0, best->threshold};
}

EvalReport evaluate_scores(std::span<const ScoreRecord> records, double threshold) {
  EvalReport r = classification_metrics(records, threshold);
  const EerResult e = eer(records);
  r.eer = e.eer;
  r.eer_threshold = e.threshold;
  return r;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json class_json(const ClassMetrics& m) {
  return {{"precision", opt(m.precision)}, {"recall", opt(m.recall)}, {"f1", opt(m.f1)}, {"support", m.support}};
}

std::string cell(const std::optional<double>& v) {
  char buf[32];
  if (!v) return "     n/a";
  std::snprintf(buf, sizeof buf, "%8.4f", *v);
  return buf;
}

}  // namespace

json report_to_json(const EvalReport& r) {
  return {{"real", class_json(r.real)},
          {"fake", class_json(r.fake)},
          {"accuracy", r.accuracy},
          {"macro_f1", opt(r.macro_f1)},
          {"threshold", r.threshold},
          {"eer", opt(r.eer)},
          {"eer_threshold", opt(r.eer_threshold)},
          {"confusion", {{"tp", r.counts.tp}, {"tn", r.counts.tn}, {"fp", r.counts.fp}, {"fn", r.counts.fn}}},
          {"n_records", r.counts.total()}};
}

std::string format_report_table(const EvalReport& r, const std::string& title) {
  std::ostringstream os;
  char buf[160];
  os << title << "\n";
  std::snprintf(buf, sizeof buf, "%-12s %9s %9s %9s %9s\n", "", "precision", "recall", "f1-score", "support");
  os << buf;
  for (const auto& [name, m] : {std::pair<const char*, const ClassMetrics*>{"real", &r.real}, {"fake", &r.fake}}) {
    std::snprintf(buf, sizeof buf, "%-12s  %s  %s  %s %9zu\n", name, cell(m->precision).c_str(),
                  cell(m->recall).c_str(), cell(m->f1).c_str(), m->support);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%-12s  %8s  %8s  %s %9zu\n", "accuracy", "", "", cell(r.accuracy).c_str(),
                r.counts.total());
  os << buf;
  std::snprintf(buf, sizeof buf, "%-12s  %8s  %8s  %s %9zu\n", "macro avg", "", "", cell(r.macro_f1).c_str(),
                r.counts.total());
  os << buf;
  if (r.eer) {
    std::snprintf(buf, sizeof buf, "EER %.4f%% at threshold %.6g (decision threshold %.3g)\n", 100.0 * *r.eer,
                  *r.eer_threshold, r.threshold);
    os << buf;
  }
  return os.str();
}

std::string label_name(int label) { return label == kLabelFake ? "fake" : "real"; }

int parse_label(const std::string& s) {
  if (s == "real") return kLabelReal;
  if (s == "fake") return kLabelFake;
  throw ParseError("unknown label '" + s + "' (expected real or fake)");
}

std::string format_scores(std::span<const ScoreRecord> records) {
  std::string out = "path,label,score\n";
  char buf[40];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.9g", r.score);
    out += csv::escape_field(r.path) + "," + label_name(r.label) + "," + buf + "\n";
  }
  return out;
}

void write_score_file(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write score file " + path.string());
  out << format_scores(records);
}

std::vector<ScoreRecord> parse_scores(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<ScoreRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = csv::chomp(line);
    if (line_no == 1) {
      if (view != "path,label,score") throw ParseError("line 1: expected header 'path,label,score'");
      continue;
    }
    if (view.empty()) continue;
    auto f = csv::split_record(view, line_no);
    if (f.size() != 3) throw ParseError("line " + std::to_string(line_no) + ": expected 3 fields");
    ScoreRecord r;
    r.path = f[0];
    try {
      r.label = parse_label(f[1]);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    char* end = nullptr;
    r.score = std::strtod(f[2].c_str(), &end);
    if (f[2].empty() || *end != '\0' || !std::isfinite(r.score) || r.score < 0.0 || r.score > 1.0)
      throw ParseError("line " + std::to_string(line_no) + ": score '" + f[2] + "' is not a number in [0, 1]");
    out.push_back(std::move(r));
  }
  if (line_no == 0) throw ParseError("empty score file");
  return out;
}

std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open score file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scores(ss.str());
}

}  // namespace rawnet
