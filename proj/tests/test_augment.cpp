#include <doctest.h>

#include <cmath>

#include "rawnet/augment.hpp"
#include "rawnet/errors.hpp"
#include "test_util.hpp"

using namespace rawnet;
using namespace rawnet::augment;
using audio::FixedClip;
using audio::kClipLength;

namespace {

FixedClip tone(double hz, double amp = 0.5) {
  FixedClip c;
  c.samples = testutil::sine(hz, 16000, kClipLength, amp);
  c.peak = static_cast<float>(amp);
  return c;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_CASE("time_stretch output lengths") {
  auto c = tone(440);
  CHECK(time_stretch(c, 1.1).num_frames() == 43636);
  CHECK(time_stretch(c, 0.9).num_frames() == 53333);
  CHECK(time_stretch(c, 1.0).num_frames() == 48000);
  CHECK(time_stretch(c, 2.0).num_frames() == 24000);
  CHECK(time_stretch(c, 0.5).num_frames() == 96000);
}

TEST_CASE("time_stretch at rate 1 is the identity") {
  auto c = tone(440);
  CHECK(max_abs_diff(time_stretch(c, 1.0).mono(), c.samples) < 1e-4);
  FixedClip noise;
  noise.samples = testutil::random_tensor<float>({kClipLength}, 3, 0.5).data;
  CHECK(max_abs_diff(time_stretch(noise, 1.0).mono(), noise.samples) < 1e-4);
}

TEST_CASE("time_stretch keeps the pitch") {
  auto y = time_stretch(tone(440), 0.9).mono();
  REQUIRE(y.size() == 53333);
  const double peak = testutil::dft_peak_hz(y, 16000, 18000, 16000);
  CHECK(std::abs(peak - 440.0) <= 2.0);
}

TEST_CASE("pitch_shift DFT peaks") {
  SUBCASE("identity") { CHECK(max_abs_diff(pitch_shift(tone(440), 0.0).samples, tone(440).samples) < 1e-4); }
  for (double st : {12.0, -12.0, 2.0, -2.0}) {
    CAPTURE(st);
    auto y = pitch_shift(tone(440), st);
    REQUIRE(y.samples.size() == kClipLength);
    const double expect = 440.0 * std::pow(2.0, st / 12.0);
    // 1 Hz bins over a one-second mid-clip window
    const double peak = testutil::dft_peak_hz(y.samples, 16000, 16000, 16000);
    CHECK(std::abs(peak - expect) <= 1.0 + 1e-9 + std::abs(expect - std::round(expect)));
  }
}

TEST_CASE("pitch_shift preserves tone energy within 20 percent") {
  for (double st : {-2.0, -1.0, 1.0, 2.0}) {
    CAPTURE(st);
    auto x = tone(600);
    auto y = pitch_shift(x, st);
    const double ex = testutil::energy(x.samples, 8000, 32000);
    const double ey = testutil::energy(y.samples, 8000, 32000);
    CHECK(ey / ex == doctest::Approx(1.0).epsilon(0.2));
  }
}

TEST_CASE("gaussian noise") {
  FixedClip zero;
  zero.samples.assign(kClipLength, 0.0f);
  SUBCASE("amplitude 0 is identity") {
    StreamRng rng{1};
    auto c = tone(300);
    CHECK(add_gaussian_noise(c, 0.0, rng).samples == c.samples);
  }
  SUBCASE("sample sd tracks amplitude") {
    StreamRng rng{42};
    auto y = add_gaussian_noise(zero, 0.01, rng);
    double s = 0, s2 = 0;
    for (float v : y.samples) {
      s += v;
      s2 += double(v) * v;
    }
    const double n = double(kClipLength);
    const double sd = std::sqrt((s2 - s * s / n) / (n - 1));
    CHECK(sd >= 0.0097);
    CHECK(sd <= 0.0103);
  }
  SUBCASE("deterministic per seed") {
    StreamRng a{5}, b{5};
    CHECK(add_gaussian_noise(zero, 0.02, a).samples == add_gaussian_noise(zero, 0.02, b).samples);
  }
  SUBCASE("clamped to [-1, 1]") {
    StreamRng rng{9};
    FixedClip full;
    full.samples.assign(kClipLength, 1.0f);
    for (float v : add_gaussian_noise(full, 0.5, rng).samples) REQUIRE(std::abs(v) <= 1.0f);
  }
}

TEST_CASE("augment_pipeline") {
  auto c = tone(500, 1.0);
  AugmentConfig cfg;
  cfg.seed = 11;
  SUBCASE("p = 0 is a no-op") {
    cfg.p_apply = 0.0;
    CHECK(augment_pipeline(c, cfg, {0, 0}).samples == c.samples);
  }
  SUBCASE("degenerate ranges are a near no-op") {
    cfg.p_apply = 1.0;
    cfg.pitch_semitones = {0, 0};
    cfg.stretch_rate = {1, 1};
    cfg.noise_amplitude = {0, 0};
    AppliedTransforms a;
    auto y = augment_pipeline(c, cfg, {0, 0}, &a);
    CHECK((a.pitch && a.stretch && a.noise));
    CHECK(max_abs_diff(y.samples, c.samples) < 1e-4);
  }
  SUBCASE("deterministic and bounded") {
    cfg.p_apply = 1.0;
    auto y1 = augment_pipeline(c, cfg, {3, 17});
    auto y2 = augment_pipeline(c, cfg, {3, 17});
    CHECK(y1.samples == y2.samples);
    REQUIRE(y1.samples.size() == kClipLength);
    float peak = 0;
    for (float v : y1.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak <= 1.0f);
    CHECK(augment_pipeline(c, cfg, {3, 18}).samples != y1.samples);
  }
}

TEST_CASE("AugmentConfig validation") {
  AugmentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.p_apply = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.stretch_rate = {1.2, 1.1};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.noise_amplitude = {-0.1, 0.1};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
