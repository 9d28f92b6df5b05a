// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <tuple>
#include <sstream>
#include <string>
#include <vector>

#include "model_check.hpp"
#include "oracles.hpp"
#include "protocol_fixture.hpp"
#include "rawnet/audio_io.hpp"
#include "rawnet/augment.hpp"
#include "rawnet/errors.hpp"
#include "rawnet/log.hpp"
#include "rawnet/losses.hpp"
#include "rawnet/metrics.hpp"
#include "rawnet/nn/fault.hpp"
#include "rawnet/protocol.hpp"
#include "rawnet/run_config.hpp"
#include "rawnet/runner.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace rawnet;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- 1 -------------------------------------------------------------------------

Outcome gradient_integrity() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = testutil::reduced_config();
  const auto clean = testutil::model_gradcheck(cfg);
  const double secs = seconds_since(t0);
  o.pass = clean.max_rel_error < 1e-4 && secs < 60.0;
  o.detail = "max rel err " + fmt("%.2e", clean.max_rel_error) + " over " + std::to_string(clean.coords_checked) +
             " coords in " + fmt("%.1f", secs) + " s";
  std::size_t caught = 0, total = 0;
  for (auto f : {nn::BackwardFault::conv_padding, nn::BackwardFault::batchnorm_mean, nn::BackwardFault::relu_mask,
                 nn::BackwardFault::residual_skip, nn::BackwardFault::pool_width, nn::BackwardFault::gru_reset_gate,
                 nn::BackwardFault::linear_input, nn::BackwardFault::sigmoid_slope}) {
    nn::ScopedBackwardFault guard(f);
    ++total;
    if (testutil::model_gradcheck(cfg).max_rel_error >= 1e-4) ++caught;
  }
  o.pass = o.pass && caught == total;
  o.detail += "; mutations caught " + std::to_string(caught) + "/" + std::to_string(total);
  return o;
}

// ---- 2 -------------------------------------------------------------------------

Outcome metric_fidelity() {
  Outcome o;
  const auto r = metrics_from_confusion(oracle::table_counts(), 0.5);
  const std::vector<double> p = {0.5};
  const std::vector<int> y = {1};
  const double fl = focal_loss(p, y, 2.0, 0.25);
  o.pass = std::abs(*r.real.precision - 0.9998) < 5e-5 && std::abs(*r.real.recall - 0.9856) < 5e-5 &&
           std::abs(*r.real.f1 - 0.9926) < 5e-5 && std::abs(r.accuracy - 0.9927) < 5e-4 &&
           std::abs(fl - 0.0433217) < 1e-6;
  o.detail = "real P " + fmt("%.5f", *r.real.precision) + " R " + fmt("%.5f", *r.real.recall) + " F1 " +
             fmt("%.5f", *r.real.f1) + " acc " + fmt("%.5f", r.accuracy) + " focal " + fmt("%.7f", fl);
  return o;
}

// ---- 3 -------------------------------------------------------------------------

Outcome eer_oracle() {
  Outcome o;
  StreamRng rng{31337, 3};
  std::size_t mismatches = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto nr = 2 + rng.below(199), nf = 2 + rng.below(199);
    const auto v = oracle::random_scores(rng, nr, nf, rng.uniform(0.0, 2.0), rep % 3 == 0 ? 20 : 0);
    if (eer(v).eer != oracle::brute_force_eer(v)) ++mismatches;
  }
  const auto chance = oracle::random_scores(rng, 5000, 5000, 0.0);
  const double e = eer(chance).eer;
  o.pass = mismatches == 0 && e >= 0.48 && e <= 0.52;
  o.detail = std::to_string(mismatches) + "/1000 mismatches; chance EER " + fmt("%.4f", e);
  return o;
}

// ---- 4 -------------------------------------------------------------------------

Outcome focal_bce_identity() {
  Outcome o;
  StreamRng rng{4, 4};
  std::vector<double> p(1000);
  std::vector<int> y(1000);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = rng.uniform();
      y[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double f = focal_loss(std::span(p).subspan(i, 1), std::span(y).subspan(i, 1), 0.0, 0.5);
      const double b = bce_loss(std::span(p).subspan(i, 1), std::span(y).subspan(i, 1));
      worst = std::max(worst, std::abs(f - 0.5 * b));
    }
  }
  o.pass = worst <= 4 * std::numeric_limits<double>::epsilon();
  o.detail = "max |focal - bce/2| over 1e6 pairs " + fmt("%.3g", worst);
  return o;
}

// ---- 5 and 8 ---------------------------------------------------------------------

RunConfig sanity_config(const fs::path& out, bool permute) {
  // every run reads the same generated clips, so score-file paths agree
  const auto data_dir = fs::absolute("acceptance_runs/sanity_data");
  std::vector<std::string> sets = {"output_dir=" + out.string(), "sanity.data_dir=" + data_dir.string()};
  if (permute) sets.push_back("sanity.permute_labels=true");
  return load_run_config(fs::path(RAWNET_SOURCE_DIR) / "configs" / "sanity.json", sets);
}

struct SanityRun {
  RunFiles files;
  double seconds = 0.0;
};

SanityRun run_sanity(const fs::path& rel, bool permute) {
  // relative output_dir would resolve against the config's directory
  const fs::path out = fs::absolute(rel);
  fs::remove_all(out);
  const auto t0 = std::chrono::steady_clock::now();
  PreparedRun run = prepare_run(sanity_config(out, permute));
  SanityRun r;
  r.files = execute_run(run, true);
  r.seconds = seconds_since(t0);
  return r;
}

Outcome overfit_sanity(const SanityRun& main_run) {
  Outcome o;
  const auto& h = main_run.files.training;
  bool reached = false;
  std::size_t at_step = 0;
  for (const auto& e : h.epochs) {
    if (e.steps <= 200 && e.train_accuracy && *e.train_accuracy == 1.0 && e.val_f1 >= 0.95) {
      reached = true;
      at_step = e.steps;
      break;
    }
  }
  const auto ctrl = run_sanity("acceptance_runs/sanity_permuted", true);
  const double ctrl_f1 = ctrl.files.training.best_val_f1;
  const double total = main_run.seconds + ctrl.seconds;
  o.pass = reached && total < 600.0 && ctrl_f1 >= 0.35 && ctrl_f1 <= 0.65;
  o.detail = (reached ? "train acc 1.0 and val F1 >= 0.95 at step " + std::to_string(at_step)
                      : std::string("target not reached in 200 steps")) +
             "; permuted-label val F1 " + fmt("%.4f", ctrl_f1) + "; runtime " + fmt("%.0f", total) + " s";
  return o;
}

Outcome determinism(const SanityRun& a) {
  Outcome o;
  const auto b = run_sanity("acceptance_runs/sanity_b", false);
  const fs::path da = a.files.checkpoint.parent_path(), db = b.files.checkpoint.parent_path();
  std::vector<std::string> differing;
  std::vector<fs::path> files = {"checkpoint.rnl", "figure_data.csv"};
  for (const auto& e : fs::directory_iterator(da / "scores")) files.push_back(fs::path("scores") / e.path().filename());
  for (const auto& f : files)
    if (slurp(da / f) != slurp(db / f) || slurp(da / f).empty()) differing.push_back(f.string());
  o.pass = differing.empty();
  o.detail = std::to_string(files.size()) + " artifacts compared";
  for (const auto& d : differing) o.detail += "; differs: " + d;
  return o;
}

// ---- 6 -------------------------------------------------------------------------

Outcome preprocessing_invariants() {
  Outcome o;
  StreamRng rng{606, 6};
  const audio::SampleFormat formats[] = {audio::SampleFormat::pcm16, audio::SampleFormat::pcm24,
                                         audio::SampleFormat::pcm32, audio::SampleFormat::float32};
  std::size_t bad_len = 0, bad_peak = 0, silent = 0;
  for (int i = 0; i < 500; ++i) {
    const int rate = 8000 + static_cast<int>(rng.below(40001));
    const int ch = 1 + static_cast<int>(rng.below(2));
    const auto n = static_cast<std::size_t>(rate * rng.uniform(0.5, 6.0));
    audio::Waveform w;
    w.sample_rate_hz = rate;
    const bool quiet = i % 25 == 0;
    const double amp = rng.uniform(0.01, 1.0);
    const double hz = rng.uniform(50.0, 3000.0);
    for (int c = 0; c < ch; ++c) {
      std::vector<float> s(n);
      for (std::size_t k = 0; k < n; ++k)
        s[k] = quiet ? 0.0f
                     : static_cast<float>(amp * (0.7 * std::sin(2 * M_PI * hz * k / rate + c) + 0.3 * rng.uniform(-1, 1)));
      w.channels.push_back(std::move(s));
    }
    const auto bytes = audio::encode_wav(w, formats[rng.below(4)]);
    const auto clip = audio::preprocess(bytes);
    if (clip.samples.size() != audio::kClipLength) ++bad_len;
    if (clip.silent) {
      ++silent;
      continue;
    }
    float peak = 0.0f;
    for (float x : clip.samples) peak = std::max(peak, std::abs(x));
    if (peak != 1.0f) ++bad_peak;
  }

  std::size_t bad_pitch = 0;
  std::string pitch_detail;
  audio::FixedClip tone;
  tone.samples = testutil::sine(440.0, 16000, audio::kClipLength, 0.8);
  for (double st : {2.0, -2.0, 12.0, -12.0}) {
    const auto y = augment::pitch_shift(tone, st);
    const double bin_hz = 1.0;  // one-second window
    const double peak = testutil::dft_peak_hz(y.samples, 16000, 16000, 16000);
    const double expect = 440.0 * std::pow(2.0, st / 12.0);
    if (std::abs(peak / bin_hz - std::round(expect / bin_hz)) > 1.0) ++bad_pitch;
    pitch_detail += fmt(" %+.0f:", st) + fmt("%.0f", peak) + "/" + fmt("%.1f", expect);
  }
  o.pass = bad_len == 0 && bad_peak == 0 && bad_pitch == 0;
  o.detail = "500 files (" + std::to_string(silent) + " silent): " + std::to_string(bad_len) + " bad lengths, " +
             std::to_string(bad_peak) + " bad peaks; pitch peaks Hz" + pitch_detail;
  return o;
}

// ---- 7 -------------------------------------------------------------------------

Outcome protocol_hygiene() {
  Outcome o;
  const auto pool = testutil::synthetic_pool(0.01);
  std::size_t problems = 0;
  for (auto p : {Protocol::in_domain, Protocol::cross_domain, Protocol::triple_domain, Protocol::cross_augmented,
                 Protocol::triple_augmented}) {
    const auto plan = plan_protocol(p, 0.01, 77);
    const auto c = compose_protocol(plan, pool);
    data::Composed all{c.train, c.val, {}};
    for (const auto& [name, v] : c.tests) all.test.insert(all.test.end(), v.begin(), v.end());
    try {
      data::verify_disjoint(all);
    } catch (const Error&) {
      ++problems;
    }
    // expected per-class counts per role, straight from the scaled caps
    std::map<std::tuple<int, std::string, int>, std::size_t> want, got;
    for (const auto& cap : plan.mix.caps) {
      want[{static_cast<int>(cap.role), cap.domain, kLabelReal}] += cap.n_real;
      want[{static_cast<int>(cap.role), cap.domain, kLabelFake}] += cap.n_fake;
    }
    for (const auto& e : c.train) ++got[{0, e.domain, e.label}];
    for (const auto& e : c.val) ++got[{1, e.domain, e.label}];
    std::set<std::string> seen;
    for (const auto& e : all.test)
      if (seen.insert(e.path).second) ++got[{2, e.domain, e.label}];
    for (auto& [k, v] : want)
      if (v != 0 && got[k] != v) ++problems;
    for (auto& [k, v] : got)
      if (v != want[k]) ++problems;
  }
  // spot values of the scaled tables
  const auto plan = plan_protocol(Protocol::triple_domain, 0.01, 1);
  std::size_t codec_test_real = 0;
  for (const auto& cap : plan.mix.caps)
    if (cap.domain == kDomainCodecFake && cap.role == data::Role::test) codec_test_real = cap.n_real;
  if (codec_test_real != 520) ++problems;
  o.pass = problems == 0;
  o.detail = "5 protocols at scale 0.01: " + std::to_string(problems) + " violations";
  return o;
}

// ---- 9 -------------------------------------------------------------------------

Outcome augmentation_statistics() {
  Outcome o;
  augment::AugmentConfig cfg;
  cfg.p_apply = 0.5;
  cfg.seed = 99;
  // short clip: the decisions do not depend on the audio, only on the key
  audio::FixedClip clip;
  clip.samples = testutil::sine(300.0, 16000, 4096, 0.5);
  std::size_t pitch = 0, stretch = 0, noise = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    augment::AppliedTransforms a;
    augment::augment_pipeline(clip, cfg, {static_cast<std::uint64_t>(i / 100), static_cast<std::uint64_t>(i)}, &a);
    pitch += a.pitch;
    stretch += a.stretch;
    noise += a.noise;
  }
  auto in_band = [&](std::size_t c) { return c >= 0.47 * n && c <= 0.53 * n; };

  audio::FixedClip zero;
  zero.samples.assign(audio::kClipLength, 0.0f);
  double worst = 0.0;
  for (double amp : {0.001, 0.005, 0.01, 0.015}) {
    StreamRng rng{static_cast<std::uint64_t>(amp * 1e6), 9};
    const auto y = augment::add_gaussian_noise(zero, amp, rng);
    double s = 0, s2 = 0;
    for (float v : y.samples) {
      s += v;
      s2 += static_cast<double>(v) * v;
    }
    const double m = s / audio::kClipLength;
    const double sd = std::sqrt(s2 / audio::kClipLength - m * m);
    worst = std::max(worst, std::abs(sd / amp - 1.0));
  }
  o.pass = in_band(pitch) && in_band(stretch) && in_band(noise) && worst <= 0.03;
  o.detail = "apply rates pitch " + fmt("%.4f", double(pitch) / n) + " stretch " + fmt("%.4f", double(stretch) / n) +
             " noise " + fmt("%.4f", double(noise) / n) + "; worst noise sd error " + fmt("%.2f%%", 100 * worst);
  return o;
}

}  // namespace

int main() {
  log::set_level(log::Level::warn);
  fs::create_directories("acceptance_runs");
  bool all = true;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    all = all && o.pass;
    std::printf("criterion %d %-32s %s  (%s)\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient integrity", gradient_integrity);
  report(2, "metric formula fidelity", metric_fidelity);
  report(3, "EER oracle equivalence", eer_oracle);
  report(4, "focal/BCE identity", focal_bce_identity);
  SanityRun main_run;
  std::string main_error;
  try {
    main_run = run_sanity("acceptance_runs/sanity_a", false);
  } catch (const std::exception& e) {
    main_error = e.what();
  }
  auto need_main = [&](const std::function<Outcome()>& f) {
    return [&, f]() -> Outcome {
      if (!main_error.empty()) return {false, "sanity run failed: " + main_error};
      return f();
    };
  };
  report(5, "overfit sanity run", need_main([&] { return overfit_sanity(main_run); }));
  report(6, "preprocessing invariants", preprocessing_invariants);
  report(7, "protocol hygiene", protocol_hygiene);
  report(8, "determinism", need_main([&] { return determinism(main_run); }));
  report(9, "augmentation statistics", augmentation_statistics);
  return all ? 0 : 1;
}
