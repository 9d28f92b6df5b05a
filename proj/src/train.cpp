#include "rawnet/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "rawnet/errors.hpp"
#include "rawnet/log.hpp"
#include "rawnet/nn/adam.hpp"

namespace rawnet {

using data::ManifestEntry;

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be > 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be >= 1");
  if (patience == 0) throw ConfigError("train.patience must be >= 1");
  if (augment) augment->validate();
}

bool EarlyStopper::update(std::size_t epoch, double val_f1) {
  improved_ = !have_best_ || val_f1 > best_;
  if (improved_) {
    have_best_ = true;
    best_ = val_f1;
    best_epoch_ = epoch;
    bad_ = 0;
    return false;
  }
  return ++bad_ >= patience_;
}

std::vector<ScoreRecord> score_entries(Model& model, const std::vector<ManifestEntry>& entries,
                                       const data::ClipSource& source, std::size_t batch_size, bool strict,
                                       std::size_t* skipped) {
  std::vector<ScoreRecord> out;
  if (entries.empty()) return out;
  data::BatchOptions opts;
  opts.batch_size = batch_size;
  opts.shuffle = false;
  opts.strict = strict;
  data::BatchStream stream(entries, source, opts);
  data::Batch batch;
  out.reserve(entries.size());
  while (stream.next(batch)) {
    const auto probs = model.forward(batch.clips, nn::Mode::eval);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto& e = entries[batch.entry_index[k]];
      out.push_back({e.path, e.label, static_cast<double>(probs[k])});
    }
  }
  if (skipped) *skipped = stream.skipped();
  return out;
}

EvalOutput evaluate(Model& model, const std::vector<ManifestEntry>& test_set, const data::ClipSource& source,
                    std::size_t batch_size, const std::vector<ManifestEntry>* train_set, bool strict) {
  if (train_set) data::verify_no_overlap(*train_set, test_set);
  EvalOutput out;
  auto raw = score_entries(model, test_set, source, batch_size, strict, &out.skipped);
  if (raw.empty()) throw UndefinedMetricError("no test clip could be scored");
  out.score_text = format_scores(raw);
  // metrics are computed from exactly what the score file holds
  out.scores = parse_scores(out.score_text);
  out.report = evaluate_scores(out.scores, 0.5);
  return out;
}

namespace {

struct PassStats {
  double loss = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

PassStats eval_pass(Model& model, const std::vector<ManifestEntry>& entries, const data::ClipSource& source,
                    const TrainConfig& cfg) {
  const auto scores = score_entries(model, entries, source, cfg.batch_size, cfg.strict);
  if (scores.empty()) throw ConfigError("validation set produced no usable clips");
  std::vector<double> p;
  std::vector<int> y;
  for (const auto& s : scores) {
    p.push_back(s.score);
    y.push_back(s.label);
  }
  PassStats st;
  st.loss = compute_loss(cfg.loss, p, y);
  const EvalReport r = classification_metrics(scores, 0.5);
  st.f1 = r.fake.f1.value_or(0.0);
  st.accuracy = r.accuracy;
  return st;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<ManifestEntry>& train_set,
                  const std::vector<ManifestEntry>& val_set, const data::ClipSource& source,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (val_set.empty()) throw ConfigError("validation set is empty");
  data::verify_no_overlap(train_set, val_set);

  RawNetLiteConfig mcfg = cfg.model;
  mcfg.seed = cfg.seeds.init;
  Model model(mcfg);
  nn::Adam<float> adam({cfg.lr});
  auto params = model.parameters();

  std::optional<augment::AugmentConfig> aug = cfg.augment;
  if (aug) aug->seed = cfg.seeds.augment;

  TrainResult result;
  EarlyStopper stopper(cfg.patience);
  std::size_t steps = 0;
  std::vector<double> p;
  std::vector<int> y;
  std::vector<double> grad;
  std::vector<float> gradf;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    data::BatchOptions opts;
    opts.batch_size = cfg.batch_size;
    opts.shuffle_seed = cfg.seeds.shuffle;
    opts.epoch = epoch;
    opts.augment = aug;
    opts.strict = cfg.strict;
    data::BatchStream stream(train_set, source, opts);
    data::Batch batch;
    double loss_sum = 0.0;
    std::size_t loss_items = 0;
    std::size_t batch_index = 0;
    while (stream.next(batch)) {
      const auto probs = model.forward(batch.clips, nn::Mode::train);
      p.assign(probs.begin(), probs.end());
      y = batch.labels;
      const double loss = compute_loss(cfg.loss, p, y, &grad);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index + 1));
      gradf.assign(grad.begin(), grad.end());
      model.backward(gradf);
      try {
        adam.step(params);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index + 1));
      }
      ++steps;
      ++batch_index;
      loss_sum += loss * static_cast<double>(batch.size());
      loss_items += batch.size();
      if (cfg.max_steps && steps >= cfg.max_steps) {
        result.history.step_budget_hit = true;
        break;
      }
    }
    if (stream.skipped())
      log::warn("epoch " + std::to_string(epoch) + ": skipped " + std::to_string(stream.skipped()) + " unreadable files");

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_items ? loss_sum / static_cast<double>(loss_items) : 0.0;
    const PassStats val = eval_pass(model, val_set, source, cfg);
    rec.val_loss = val.loss;
    rec.val_f1 = val.f1;
    if (cfg.track_train_accuracy) rec.train_accuracy = eval_pass(model, train_set, source, cfg).accuracy;
    rec.steps = steps;
    rec.skipped = stream.skipped();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool stop = stopper.update(epoch, rec.val_f1);
    if (stopper.improved())
      result.checkpoint = serialize_checkpoint(model, {static_cast<std::int64_t>(epoch), rec.val_f1});
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    char buf[200];
    std::snprintf(buf, sizeof buf, "epoch %zu: train_loss %.5f val_loss %.5f val_f1 %.4f steps %zu (%.1fs)", epoch,
                  rec.train_loss, rec.val_loss, rec.val_f1, steps, rec.seconds);
    std::string line = buf;
    if (rec.train_accuracy) {
      std::snprintf(buf, sizeof buf, " train_acc %.4f", *rec.train_accuracy);
      line += buf;
    }
    log::info(line);

    if (stop) {
      result.history.stopped_early = true;
      break;
    }
    if (result.history.step_budget_hit) break;
  }
  result.history.best_epoch = stopper.best_epoch();
  result.history.best_val_f1 = stopper.best();
  return result;
}

std::string format_history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_loss,val_loss,val_f1,seconds\n";
  char buf[160];
  for (const auto& e : h.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss, e.val_loss, e.val_f1,
                  e.seconds);
    out += buf;
  }
  return out;
}

}  // namespace rawnet
