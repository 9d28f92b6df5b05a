#include "rawnet/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "rawnet/errors.hpp"

namespace rawnet::audio {

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host assumed");

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) |
         (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t off, const char* tag) {
  return std::memcmp(b.data() + off, tag, 4) == 0;
}

[[noreturn]] void malformed(std::size_t offset, const std::string& msg) {
  std::ostringstream os;
  os << "malformed WAV header at offset " << offset << ": " << msg;
  throw DecodeError(os.str());
}

constexpr std::uint16_t kTagPcm = 0x0001;
constexpr std::uint16_t kTagFloat = 0x0003;
constexpr std::uint16_t kTagExtensible = 0xFFFE;

struct FmtChunk {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

// Zeroth-order modified Bessel function of the first kind (power series).
double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

constexpr double kKaiserBeta = 8.6;
constexpr int kZeroCrossings = 16;
constexpr std::int64_t kMaxPhases = 512;

// Polyphase filter bank for one rational ratio up/down. Phase p of `phases`
// holds the taps for fractional input offset p / phases.
class PolyphaseFilter {
 public:
  PolyphaseFilter(std::int64_t up, std::int64_t down) : up_(up), down_(down) {
    cutoff_ = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
    half_ = static_cast<int>(std::ceil(kZeroCrossings / cutoff_));
    taps_ = 2 * half_;
    phases_ = std::min(up, kMaxPhases);
    const double i0_beta = bessel_i0(kKaiserBeta);
    bank_.resize(static_cast<std::size_t>((phases_ + 1) * taps_));
    for (std::int64_t p = 0; p <= phases_; ++p) {
      const double frac = static_cast<double>(p) / static_cast<double>(phases_);
      double* row = &bank_[static_cast<std::size_t>(p * taps_)];
      double sum = 0.0;
      for (int k = 0; k < taps_; ++k) {
        // distance from the output instant to input sample (base - half + 1 + k)
        const double d = frac + (half_ - 1) - k;
        const double r = d / half_;
        double w = 0.0;
        if (std::abs(r) <= 1.0) w = bessel_i0(kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
        const double x = cutoff_ * d;
        const double sinc = (x == 0.0) ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
        row[k] = cutoff_ * sinc * w;
        sum += row[k];
      }
      for (int k = 0; k < taps_; ++k) row[k] /= sum;
    }
  }

  std::vector<float> apply(const std::vector<float>& in, std::size_t out_len) const {
    std::vector<float> out(out_len);
    const auto n_in = static_cast<std::int64_t>(in.size());
    for (std::size_t n = 0; n < out_len; ++n) {
      const std::int64_t num = static_cast<std::int64_t>(n) * down_;
      const std::int64_t base = num / up_;
      const std::int64_t rem = num % up_;
      // map rem/up onto the tabulated phases
      const std::int64_t scaled = rem * phases_;
      const std::int64_t p = scaled / up_;
      const double t = static_cast<double>(scaled % up_) / static_cast<double>(up_);
      const double* lo = &bank_[static_cast<std::size_t>(p * taps_)];
      const double* hi = lo + taps_;
      const std::int64_t first = base - half_ + 1;
      double acc = 0.0;
      for (int k = 0; k < taps_; ++k) {
        const std::int64_t j = first + k;
        if (j < 0 || j >= n_in) continue;
        const double tap = (t == 0.0) ? lo[k] : lo[k] + t * (hi[k] - lo[k]);
        acc += tap * static_cast<double>(in[static_cast<std::size_t>(j)]);
      }
      out[n] = static_cast<float>(acc);
    }
    return out;
  }

 private:
  std::int64_t up_;
  std::int64_t down_;
  double cutoff_ = 1.0;
  int half_ = 0;
  int taps_ = 0;
  std::int64_t phases_ = 0;
  std::vector<double> bank_;
};

}  // namespace

Waveform Waveform::from_mono(int rate_hz, std::vector<float> samples) {
  Waveform w;
  w.sample_rate_hz = rate_hz;
  w.channels.push_back(std::move(samples));
  return w;
}

Waveform decode_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12) malformed(0, "file shorter than the 12-byte RIFF header");
  if (!tag_is(b, 0, "RIFF")) malformed(0, "missing RIFF tag");
  if (!tag_is(b, 8, "WAVE")) malformed(8, "missing WAVE tag");

  FmtChunk fmt;
  bool have_fmt = false;
  std::size_t data_off = 0;
  std::size_t data_len = 0;
  bool have_data = false;

  std::size_t off = 12;
  while (off + 8 <= b.size()) {
    const std::uint32_t size = read_u32(b, off + 4);
    const std::size_t body = off + 8;
    if (tag_is(b, off, "fmt ")) {
      if (size < 16 || body + 16 > b.size()) malformed(off, "fmt chunk too short");
      fmt.tag = read_u16(b, body);
      fmt.channels = read_u16(b, body + 2);
      fmt.rate = read_u32(b, body + 4);
      fmt.block_align = read_u16(b, body + 12);
      fmt.bits = read_u16(b, body + 14);
      if (fmt.tag == kTagExtensible) {
        if (size < 40 || body + 40 > b.size()) malformed(off, "extensible fmt chunk too short");
        fmt.tag = read_u16(b, body + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (tag_is(b, off, "data")) {
      data_off = body;
      // Streaming writers sometimes leave the size unset; take what is present.
      data_len = std::min<std::size_t>(size, b.size() - body);
      have_data = true;
      break;
    }
    if (body + size > b.size()) malformed(off, "chunk extends past end of file");
    off = body + size + (size & 1u);
  }
  if (!have_fmt) malformed(off, "no fmt chunk before data");
  if (!have_data) malformed(off, "no data chunk");
  if (fmt.channels == 0) malformed(12, "zero channels");
  if (fmt.rate == 0) malformed(12, "zero sample rate");

  const bool pcm_ok = fmt.tag == kTagPcm && (fmt.bits == 16 || fmt.bits == 24 || fmt.bits == 32);
  const bool float_ok = fmt.tag == kTagFloat && fmt.bits == 32;
  if (!pcm_ok && !float_ok) {
    std::ostringstream os;
    os << "unsupported WAV codec tag 0x" << std::hex << fmt.tag << std::dec << " with "
       << fmt.bits << " bits per sample";
    throw UnsupportedFormatError(os.str());
  }
  const std::size_t bytes_per_sample = fmt.bits / 8u;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  if (fmt.block_align != 0 && fmt.block_align != frame_bytes) {
    malformed(12, "block_align disagrees with channels * bits / 8");
  }
  const std::size_t frames = data_len / frame_bytes;

  Waveform w;
  w.sample_rate_hz = static_cast<int>(fmt.rate);
  w.channels.assign(fmt.channels, std::vector<float>(frames));
  const std::uint8_t* p = b.data() + data_off;
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < fmt.channels; ++c, p += bytes_per_sample) {
      float v = 0.0f;
      switch (fmt.bits) {
        case 16: {
          const auto s = static_cast<std::int16_t>(p[0] | (p[1] << 8));
          v = static_cast<float>(s / 32768.0);
          break;
        }
        case 24: {
          std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
          if (s & 0x800000) s -= 0x1000000;
          v = static_cast<float>(s / 8388608.0);
          break;
        }
        default: {
          std::uint32_t u;
          std::memcpy(&u, p, 4);
          if (fmt.tag == kTagFloat) {
            v = std::bit_cast<float>(u);
          } else {
            v = static_cast<float>(static_cast<std::int32_t>(u) / 2147483648.0);
          }
        }
      }
      w.channels[c][i] = v;
    }
  }
  return w;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

Waveform decode_wav_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_wav(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  } catch (const UnsupportedFormatError& e) {
    throw UnsupportedFormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const Waveform& w, SampleFormat format) {
  if (w.channels.empty()) throw ArgumentError("encode_wav: no channels");
  const std::uint16_t bits = format == SampleFormat::pcm16 ? 16 : format == SampleFormat::pcm24 ? 24 : 32;
  const std::uint16_t tag = format == SampleFormat::float32 ? kTagFloat : kTagPcm;
  const auto ch = static_cast<std::uint16_t>(w.num_channels());
  const std::size_t frames = w.num_frames();
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames * ch * (bits / 8u));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, tag);
  put_u16(out, ch);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * ch * (bits / 8u));
  put_u16(out, static_cast<std::uint16_t>(ch * (bits / 8u)));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double x = std::clamp(static_cast<double>(w.channels[c][i]), -1.0, 1.0);
      switch (format) {
        case SampleFormat::pcm16: {
          const auto s = static_cast<std::int32_t>(std::clamp(std::lround(x * 32768.0), -32768L, 32767L));
          put_u16(out, static_cast<std::uint16_t>(s));
          break;
        }
        case SampleFormat::pcm24: {
          const auto s = static_cast<std::int32_t>(std::clamp(std::lround(x * 8388608.0), -8388608L, 8388607L));
          const auto u = static_cast<std::uint32_t>(s);
          out.push_back(static_cast<std::uint8_t>(u & 0xff));
          out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xff));
          out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xff));
          break;
        }
        case SampleFormat::pcm32: {
          const auto s = static_cast<std::int64_t>(
              std::clamp(std::llround(x * 2147483648.0), -2147483648LL, 2147483647LL));
          put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(s)));
          break;
        }
        case SampleFormat::float32:
          put_u32(out, std::bit_cast<std::uint32_t>(w.channels[c][i]));
          break;
      }
    }
  }
  return out;
}

void write_wav_file(const std::filesystem::path& path, const Waveform& w, SampleFormat format) {
  const auto bytes = encode_wav(w, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Waveform to_mono(const Waveform& w) {
  if (w.num_channels() <= 1) return w;
  const std::size_t n = w.num_frames();
  std::vector<float> mono(n);
  const double k = static_cast<double>(w.num_channels());
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (const auto& ch : w.channels) acc += ch[i];
    mono[i] = static_cast<float>(acc / k);
  }
  return Waveform::from_mono(w.sample_rate_hz, std::move(mono));
}

Waveform resample(const Waveform& w, int target_hz) {
  if (target_hz <= 0) throw ArgumentError("resample: target rate must be positive");
  if (w.sample_rate_hz <= 0) throw ArgumentError("resample: source rate must be positive");
  if (w.num_channels() != 1) throw ArgumentError("resample: input must be mono");
  if (w.sample_rate_hz == target_hz) return w;

  const std::int64_t g = std::gcd<std::int64_t>(w.sample_rate_hz, target_hz);
  const std::int64_t up = target_hz / g;
  const std::int64_t down = w.sample_rate_hz / g;
  const auto n_in = static_cast<std::int64_t>(w.num_frames());
  // round(n_in * target / source), exact in integers
  const std::int64_t out_len = (2 * n_in * up + down) / (2 * down);

  PolyphaseFilter filter(up, down);
  return Waveform::from_mono(target_hz, filter.apply(w.mono(), static_cast<std::size_t>(out_len)));
}

Waveform peak_normalize(const Waveform& w, bool* silent, float* peak) {
  float m = 0.0f;
  for (const auto& ch : w.channels)
    for (float x : ch) m = std::max(m, std::abs(x));
  if (peak) *peak = m;
  if (silent) *silent = (m == 0.0f);
  if (m == 0.0f) return w;
  Waveform out = w;
  for (auto& ch : out.channels)
    for (float& x : ch) x /= m;
  return out;
}

FixedClip fix_length(const Waveform& w, std::size_t n) {
  if (w.num_channels() != 1) throw ArgumentError("fix_length: input must be mono");
  FixedClip clip;
  const auto& src = w.mono();
  clip.samples.assign(n, 0.0f);
  std::copy_n(src.begin(), std::min(n, src.size()), clip.samples.begin());
  for (float x : clip.samples) clip.peak = std::max(clip.peak, std::abs(x));
  clip.silent = clip.peak == 0.0f;
  return clip;
}

FixedClip preprocess_waveform(const Waveform& w) {
  Waveform mono = to_mono(w);
  Waveform rs = resample(mono, kModelSampleRate);
  FixedClip clip = fix_length(rs, kClipLength);
  if (!clip.silent) {
    for (float& x : clip.samples) x /= clip.peak;
  }
  return clip;
}

FixedClip preprocess(std::span<const std::uint8_t> bytes) { return preprocess_waveform(decode_wav(bytes)); }

FixedClip preprocess_file(const std::filesystem::path& path) {
  return preprocess_waveform(decode_wav_file(path));
}

void write_clip_dump(const std::filesystem::path& path, const FixedClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(clip.samples.data()),
            static_cast<std::streamsize>(clip.samples.size() * sizeof(float)));
}

FixedClip read_clip_dump(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() != kClipLength * sizeof(float)) {
    throw DecodeError(path.string() + ": clip dump must hold exactly 48000 float32 values");
  }
  FixedClip clip;
  clip.samples.resize(kClipLength);
  std::memcpy(clip.samples.data(), bytes.data(), bytes.size());
  for (float x : clip.samples) clip.peak = std::max(clip.peak, std::abs(x));
  clip.silent = clip.peak == 0.0f;
  return clip;
}

}  // namespace rawnet::audio
