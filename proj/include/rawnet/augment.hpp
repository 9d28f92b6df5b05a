#pragma once

#include <cstdint>

#include "rawnet/audio_io.hpp"
#include "rawnet/rng.hpp"

namespace rawnet::augment {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct AugmentConfig {
  double p_apply = 0.5;
  Range pitch_semitones{-2.0, 2.0};
  Range stretch_rate{0.9, 1.1};
  Range noise_amplitude{0.001, 0.015};
  std::uint64_t seed = 0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

struct StreamKey {
  std::uint64_t epoch = 0;
  std::uint64_t sample_index = 0;
};

/// What augment_pipeline decided for one draw; useful for apply-rate stats.
struct AppliedTransforms {
  bool pitch = false;
  bool stretch = false;
  bool noise = false;
  double semitones = 0.0;
  double rate = 1.0;
  double amplitude = 0.0;
};

/// Phase-vocoder time stretch (Hann 1024, analysis hop 256, synthesis hop
/// round(256 / rate)). rate > 1 shortens. Output length round(n / rate).
audio::Waveform time_stretch(const audio::FixedClip& clip, double rate);
std::vector<float> time_stretch(const std::vector<float>& samples, double rate);

/// Duration-preserving pitch shift by 2^(semitones/12).
audio::FixedClip pitch_shift(const audio::FixedClip& clip, double semitones);

/// Adds N(0, amplitude^2) noise and clamps to [-1, 1].
audio::FixedClip add_gaussian_noise(const audio::FixedClip& clip, double amplitude, StreamRng& rng);

/// pitch -> stretch -> noise, each with probability p_apply, then
/// fix_length + peak_normalize. Randomness is keyed by (cfg.seed, key).
audio::FixedClip augment_pipeline(const audio::FixedClip& clip, const AugmentConfig& cfg,
                                  StreamKey key, AppliedTransforms* applied = nullptr);

}  // namespace rawnet::augment
