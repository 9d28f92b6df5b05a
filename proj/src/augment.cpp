#include "rawnet/augment.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>

#include "rawnet/errors.hpp"

namespace rawnet::augment {

namespace {

constexpr int kFftSize = 1024;
constexpr int kAnalysisHop = 256;
constexpr int kBins = kFftSize / 2 + 1;

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  return FftwBuffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

// One forward and one inverse plan for the fixed frame size. Planning is not
// thread-safe in FFTW, execution on caller-owned buffers is.
struct Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

const Plans& plans() {
  static std::once_flag once;
  static Plans p;
  std::call_once(once, [] {
    auto in = fftw_buffer<double>(kFftSize);
    auto spec = fftw_buffer<fftw_complex>(kBins);
    p.forward = fftw_plan_dft_r2c_1d(kFftSize, in.get(), spec.get(), FFTW_ESTIMATE);
    p.inverse = fftw_plan_dft_c2r_1d(kFftSize, spec.get(), in.get(), FFTW_ESTIMATE);
  });
  return p;
}

double wrap_phase(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  x = std::fmod(x + std::numbers::pi, two_pi);
  if (x < 0) x += two_pi;
  return x - std::numbers::pi;
}

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw ConfigError(std::string("augment: ") + name + " range has lo > hi");
}

}  // namespace

void AugmentConfig::validate() const {
  if (!(p_apply >= 0.0 && p_apply <= 1.0)) throw ConfigError("augment: p_apply must lie in [0, 1]");
  check_range(pitch_semitones, "pitch_semitones");
  check_range(stretch_rate, "stretch_rate");
  check_range(noise_amplitude, "noise_amplitude");
  if (noise_amplitude.lo < 0.0) throw ConfigError("augment: noise amplitudes must be >= 0");
  if (std::max(std::abs(pitch_semitones.lo), std::abs(pitch_semitones.hi)) > 12.0)
    throw ConfigError("augment: |semitones| must be <= 12");
  if (stretch_rate.lo < 0.5 || stretch_rate.hi > 2.0)
    throw ConfigError("augment: stretch rates must lie in [0.5, 2]");
}

std::vector<float> time_stretch(const std::vector<float>& x, double rate) {
  if (!(rate >= 0.5 && rate <= 2.0)) throw ArgumentError("time_stretch: rate must lie in [0.5, 2]");
  const auto n = static_cast<std::int64_t>(x.size());
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(n) / rate));
  if (n == 0) return std::vector<float>(out_len, 0.0f);

  const int hop_s = static_cast<int>(std::lround(kAnalysisHop / rate));
  const std::int64_t half = kFftSize / 2;
  // enough frames that the last sample sees every frame overlapping it
  const std::int64_t frames = (n - 1 + half + kAnalysisHop - 1) / kAnalysisHop + 1;

  std::vector<double> padded(static_cast<std::size_t>((frames - 1) * kAnalysisHop + kFftSize), 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + half);

  std::vector<double> window(kFftSize);
  for (int t = 0; t < kFftSize; ++t)
    window[t] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / kFftSize);

  const std::size_t ola_len = static_cast<std::size_t>((frames - 1) * hop_s + kFftSize);
  std::vector<double> ola(ola_len, 0.0);
  std::vector<double> wsum(ola_len, 0.0);

  const Plans& p = plans();
  auto frame = fftw_buffer<double>(kFftSize);
  auto spec = fftw_buffer<fftw_complex>(kBins);
  std::vector<double> prev_phase(kBins, 0.0);
  std::vector<double> synth_phase(kBins, 0.0);

  for (std::int64_t m = 0; m < frames; ++m) {
    const double* src = padded.data() + m * kAnalysisHop;
    for (int t = 0; t < kFftSize; ++t) frame[t] = src[t] * window[t];
    fftw_execute_dft_r2c(p.forward, frame.get(), spec.get());

    for (int k = 0; k < kBins; ++k) {
      const std::complex<double> c(spec[k][0], spec[k][1]);
      const double mag = std::abs(c);
      const double phase = std::arg(c);
      if (m == 0) {
        synth_phase[k] = phase;
      } else {
        const double omega = 2.0 * std::numbers::pi * k / kFftSize;
        const double dev = wrap_phase(phase - prev_phase[k] - omega * kAnalysisHop);
        synth_phase[k] += (omega + dev / kAnalysisHop) * hop_s;
      }
      prev_phase[k] = phase;
      spec[k][0] = mag * std::cos(synth_phase[k]);
      spec[k][1] = mag * std::sin(synth_phase[k]);
    }
    fftw_execute_dft_c2r(p.inverse, spec.get(), frame.get());

    const std::size_t base = static_cast<std::size_t>(m * hop_s);
    for (int t = 0; t < kFftSize; ++t) {
      ola[base + t] += frame[t] / kFftSize * window[t];
      wsum[base + t] += window[t] * window[t];
    }
  }

  std::vector<float> out(out_len, 0.0f);
  for (std::size_t i = 0; i < out_len; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(half);
    if (j >= ola_len) break;
    if (wsum[j] > 1e-8) out[i] = static_cast<float>(ola[j] / wsum[j]);
  }
  return out;
}

audio::Waveform time_stretch(const audio::FixedClip& clip, double rate) {
  return audio::Waveform::from_mono(audio::kModelSampleRate, time_stretch(clip.samples, rate));
}

audio::FixedClip pitch_shift(const audio::FixedClip& clip, double semitones) {
  if (std::abs(semitones) > 12.0) throw ArgumentError("pitch_shift: |semitones| must be <= 12");
  const double ratio = std::exp2(semitones / 12.0);
  // stretch by 1/ratio, then play the longer/shorter signal back at ratio x speed
  auto stretched = time_stretch(clip.samples, 1.0 / ratio);
  const int virtual_rate = static_cast<int>(std::lround(audio::kModelSampleRate * ratio));
  auto w = audio::Waveform::from_mono(virtual_rate, std::move(stretched));
  auto rs = audio::resample(w, audio::kModelSampleRate);
  return audio::fix_length(rs, clip.samples.size());
}

audio::FixedClip add_gaussian_noise(const audio::FixedClip& clip, double amplitude, StreamRng& rng) {
  if (amplitude < 0.0) throw ArgumentError("add_gaussian_noise: amplitude must be >= 0");
  audio::FixedClip out = clip;
  out.peak = 0.0f;
  for (float& x : out.samples) {
    const double v = static_cast<double>(x) + amplitude * rng.normal();
    x = static_cast<float>(std::clamp(v, -1.0, 1.0));
    out.peak = std::max(out.peak, std::abs(x));
  }
  out.silent = out.peak == 0.0f;
  return out;
}

audio::FixedClip augment_pipeline(const audio::FixedClip& clip, const AugmentConfig& cfg,
                                  StreamKey key, AppliedTransforms* applied) {
  StreamRng draw{cfg.seed, key.epoch, key.sample_index, 0x70697065ULL};
  AppliedTransforms a;
  // every parameter is drawn whether or not it is used, so the stream layout
  // does not depend on earlier outcomes
  a.pitch = draw.bernoulli(cfg.p_apply);
  a.semitones = draw.uniform(cfg.pitch_semitones.lo, cfg.pitch_semitones.hi);
  a.stretch = draw.bernoulli(cfg.p_apply);
  a.rate = draw.uniform(cfg.stretch_rate.lo, cfg.stretch_rate.hi);
  a.noise = draw.bernoulli(cfg.p_apply);
  a.amplitude = draw.uniform(cfg.noise_amplitude.lo, cfg.noise_amplitude.hi);
  if (applied) *applied = a;

  if (!a.pitch && !a.stretch && !a.noise) return clip;

  const std::size_t n = clip.samples.size();
  audio::FixedClip cur = clip;
  if (a.pitch) cur = pitch_shift(cur, a.semitones);
  if (a.stretch) cur = audio::fix_length(time_stretch(cur, a.rate), n);
  if (a.noise) {
    StreamRng noise{cfg.seed, key.epoch, key.sample_index, 0x6e6f6973ULL};
    cur = add_gaussian_noise(cur, a.amplitude, noise);
  }
  cur = audio::fix_length(audio::Waveform::from_mono(audio::kModelSampleRate, std::move(cur.samples)), n);
  if (!cur.silent) {
    for (float& x : cur.samples) x /= cur.peak;
  }
  return cur;
}

}  // namespace rawnet::augment
