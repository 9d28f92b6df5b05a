#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace rawnet::audio {

inline constexpr int kModelSampleRate = 16000;
inline constexpr std::size_t kClipLength = 48000;

/// Decoded audio. Channel-major: channels[c][i] is frame i of channel c.
struct Waveform {
  int sample_rate_hz = 0;
  std::vector<std::vector<float>> channels;

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_frames() const { return channels.empty() ? 0 : channels.front().size(); }
  const std::vector<float>& mono() const { return channels.front(); }

  static Waveform from_mono(int rate_hz, std::vector<float> samples);
};

/// A fixed-length mono clip, peak-normalized, ready for the model.
struct FixedClip {
  std::vector<float> samples;
  float peak = 0.0f;    // max |x| before normalization
  bool silent = false;  // true when the source had no nonzero sample
};

enum class SampleFormat { pcm16, pcm24, pcm32, float32 };

/// Parses a RIFF/WAVE container. Integer PCM is scaled by 1/2^(bits-1).
Waveform decode_wav(std::span<const std::uint8_t> bytes);
Waveform decode_wav_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_wav(const Waveform& w, SampleFormat format);
void write_wav_file(const std::filesystem::path& path, const Waveform& w, SampleFormat format);

Waveform to_mono(const Waveform& w);

/// Band-limited polyphase resampler (Kaiser-windowed sinc, beta 8.6).
/// Output length is round(n * target / source). Equal rates copy the input.
Waveform resample(const Waveform& w, int target_hz);

/// Divides by max |x|. `silent` is set (and samples left untouched) when the
/// input is all zeros.
Waveform peak_normalize(const Waveform& w, bool* silent = nullptr, float* peak = nullptr);

/// Head-crop or zero-pad to exactly n samples; the result is not renormalized.
FixedClip fix_length(const Waveform& w, std::size_t n);

/// decode -> mono -> 16 kHz -> fix_length(48000) -> peak normalize.
FixedClip preprocess(std::span<const std::uint8_t> bytes);
FixedClip preprocess_waveform(const Waveform& w);
FixedClip preprocess_file(const std::filesystem::path& path);

/// 48000 little-endian float32 values, no header.
void write_clip_dump(const std::filesystem::path& path, const FixedClip& clip);
FixedClip read_clip_dump(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace rawnet::audio
