#include <doctest.h>

#include <cmath>
#include <cstring>

#include "rawnet/audio_io.hpp"
#include "rawnet/errors.hpp"
#include "test_util.hpp"

using namespace rawnet;
using namespace rawnet::audio;

namespace {

// Hand-built PCM-16 mono file, independent of encode_wav.
std::vector<std::uint8_t> pcm16_file(const std::vector<std::int16_t>& frames, int rate, int channels = 1) {
  std::vector<std::uint8_t> b;
  auto put = [&](const void* p, std::size_t n) {
    b.insert(b.end(), static_cast<const std::uint8_t*>(p), static_cast<const std::uint8_t*>(p) + n);
  };
  auto u32 = [&](std::uint32_t v) { put(&v, 4); };
  auto u16 = [&](std::uint16_t v) { put(&v, 2); };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames.size() * 2);
  put("RIFF", 4);
  u32(36 + data_bytes);
  put("WAVE", 4);
  put("fmt ", 4);
  u32(16);
  u16(1);
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate * channels * 2));
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  put("data", 4);
  u32(data_bytes);
  put(frames.data(), data_bytes);
  return b;
}

}  // namespace

TEST_CASE("decode_wav scales PCM-16 by max magnitude") {
  auto w = decode_wav(pcm16_file({32767, 0, -32768}, 16000));
  REQUIRE(w.num_channels() == 1);
  CHECK(w.sample_rate_hz == 16000);
  CHECK(w.mono()[0] == doctest::Approx(0.99997).epsilon(1e-5));
  CHECK(w.mono()[1] == 0.0f);
  CHECK(w.mono()[2] == -1.0f);
}

TEST_CASE("decode_wav keeps channel count and frame count") {
  auto w = decode_wav(pcm16_file({1, 2, 3, 4, 5, 6}, 8000, 2));
  REQUIRE(w.num_channels() == 2);
  CHECK(w.num_frames() == 3);
  CHECK(w.channels[1][2] == doctest::Approx(6.0 / 32768.0));
}

TEST_CASE("decode_wav round-trips every supported sample format") {
  const std::vector<float> x{0.0f, 0.5f, -0.25f, 0.999f, -1.0f};
  for (auto fmt : {SampleFormat::pcm16, SampleFormat::pcm24, SampleFormat::pcm32, SampleFormat::float32}) {
    auto w = decode_wav(encode_wav(Waveform::from_mono(22050, x), fmt));
    REQUIRE(w.num_frames() == x.size());
    CHECK(w.sample_rate_hz == 22050);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(w.mono()[i] == doctest::Approx(x[i]).epsilon(1e-4));
  }
}

TEST_CASE("decode_wav errors") {
  auto good = pcm16_file({1, 2}, 16000);
  SUBCASE("bad magic names an offset") {
    auto b = good;
    b[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_wav(b), doctest::Contains("offset 0"), DecodeError);
  }
  SUBCASE("truncated header") {
    std::vector<std::uint8_t> b(good.begin(), good.begin() + 20);
    CHECK_THROWS_AS(decode_wav(b), DecodeError);
  }
  SUBCASE("unsupported codec tag") {
    auto b = good;
    b[20] = 2;  // ADPCM
    CHECK_THROWS_AS(decode_wav(b), UnsupportedFormatError);
  }
  SUBCASE("not a WAV at all") {
    std::vector<std::uint8_t> b{'I', 'D', '3', 4, 0, 0};
    CHECK_THROWS(decode_wav(b));
  }
}

TEST_CASE("to_mono") {
  auto w = to_mono(Waveform{16000, {{1.0f}, {-1.0f}}});
  CHECK(w.mono() == std::vector<float>{0.0f});
  auto m = to_mono(Waveform{16000, {{0.2f, 0.4f}, {0.6f, 0.0f}}});
  CHECK(m.mono()[0] == doctest::Approx(0.4));
  CHECK(m.mono()[1] == doctest::Approx(0.2));
  auto single = Waveform::from_mono(8000, {0.1f, -0.3f});
  CHECK(to_mono(single).mono() == single.mono());
  // k identical channels reproduce the channel exactly
  std::vector<float> c{0.1f, -0.7f, 0.3333f, 1.0f};
  CHECK(to_mono(Waveform{8000, {c, c, c}}).mono() == c);
}

TEST_CASE("resample: identity rate is bit-identical") {
  auto x = testutil::sine(440, 16000, 1000);
  auto y = resample(Waveform::from_mono(16000, x), 16000);
  CHECK(y.mono() == x);
  CHECK_THROWS_AS(resample(Waveform::from_mono(16000, x), 0), ArgumentError);
}

TEST_CASE("resample: output length is round(n * target / source)") {
  for (auto [n, src, dst] : std::vector<std::tuple<std::size_t, int, int>>{
           {1000, 8000, 16000}, {999, 44100, 16000}, {12345, 48000, 16000}, {777, 22050, 16000}, {5, 11025, 16000}}) {
    auto y = resample(Waveform::from_mono(src, std::vector<float>(n, 0.1f)), dst);
    CHECK(y.num_frames() == static_cast<std::size_t>(std::llround(static_cast<double>(n) * dst / src)));
    CHECK(y.sample_rate_hz == dst);
  }
}

TEST_CASE("resample: DC is preserved away from the edges") {
  auto y = resample(Waveform::from_mono(8000, std::vector<float>(8000, 0.5f)), 16000);
  REQUIRE(y.num_frames() == 16000);
  for (std::size_t i = 200; i < 16000 - 200; ++i) REQUIRE(std::abs(y.mono()[i] - 0.5f) < 1e-3f);
}

TEST_CASE("resample: 440 Hz at 48 kHz peaks at 440 Hz after conversion to 16 kHz") {
  auto y = resample(Waveform::from_mono(48000, testutil::sine(440, 48000, 96000)), 16000);
  const double peak = testutil::dft_peak_hz(y.mono(), 16000, 8000, 16000);
  CHECK(std::abs(peak - 440.0) <= 1.0);
}

TEST_CASE("resample is linear") {
  auto a = testutil::random_tensor<float>({3000}, 1).data;
  auto b = testutil::random_tensor<float>({3000}, 2).data;
  std::vector<float> mix(a.size());
  const float ca = 0.3f, cb = -0.6f;
  for (std::size_t i = 0; i < a.size(); ++i) mix[i] = ca * a[i] + cb * b[i];
  auto ra = resample(Waveform::from_mono(44100, a), 16000).mono();
  auto rb = resample(Waveform::from_mono(44100, b), 16000).mono();
  auto rm = resample(Waveform::from_mono(44100, mix), 16000).mono();
  for (std::size_t i = 0; i < rm.size(); ++i) REQUIRE(std::abs(rm[i] - (ca * ra[i] + cb * rb[i])) < 1e-6);
}

TEST_CASE("peak_normalize") {
  bool silent = true;
  float peak = 0;
  auto y = peak_normalize(Waveform::from_mono(16000, {0.5f, -0.25f}), &silent, &peak);
  CHECK(y.mono() == std::vector<float>{1.0f, -0.5f});
  CHECK_FALSE(silent);
  CHECK(peak == 0.5f);
  CHECK(peak_normalize(Waveform::from_mono(16000, {-0.8f, 0.4f})).mono() == std::vector<float>{-1.0f, 0.5f});
  auto z = peak_normalize(Waveform::from_mono(16000, {0, 0, 0}), &silent);
  CHECK(z.mono() == std::vector<float>{0, 0, 0});
  CHECK(silent);
}

TEST_CASE("fix_length pads, keeps or head-crops") {
  std::vector<float> x(40000, 0.25f);
  auto c = fix_length(Waveform::from_mono(16000, x), 48000);
  REQUIRE(c.samples.size() == 48000);
  for (std::size_t i = 40000; i < 48000; ++i) REQUIRE(c.samples[i] == 0.0f);
  CHECK(c.samples[39999] == 0.25f);

  std::vector<float> same(48000);
  for (std::size_t i = 0; i < same.size(); ++i) same[i] = static_cast<float>(i % 7) / 7.0f;
  CHECK(fix_length(Waveform::from_mono(16000, same), 48000).samples == same);

  std::vector<float> longer(50000);
  for (std::size_t i = 0; i < longer.size(); ++i) longer[i] = static_cast<float>(i);
  auto h = fix_length(Waveform::from_mono(16000, longer), 48000);
  CHECK(h.samples.front() == 0.0f);
  CHECK(h.samples.back() == 47999.0f);

  // idempotent
  auto again = fix_length(Waveform::from_mono(16000, h.samples), 48000);
  CHECK(again.samples == h.samples);
}

TEST_CASE("preprocess: stereo 8 kHz 2 s file") {
  auto left = testutil::sine(300, 8000, 16000, 0.4);
  auto right = testutil::sine(300, 8000, 16000, 0.2);
  auto bytes = encode_wav(Waveform{8000, {left, right}}, SampleFormat::pcm16);
  auto clip = preprocess(bytes);
  REQUIRE(clip.samples.size() == kClipLength);
  float peak = 0;
  for (float v : clip.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == 1.0f);
  for (std::size_t i = 32000; i < kClipLength; ++i) REQUIRE(clip.samples[i] == 0.0f);
  CHECK_FALSE(clip.silent);
}

TEST_CASE("preprocess: 16 kHz 3 s full-scale file is only trimmed") {
  std::vector<float> x(48000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 ? 1.0f : -1.0f) * static_cast<float>((i % 100) / 100.0);
  x[10] = 1.0f;
  auto clip = preprocess(encode_wav(Waveform::from_mono(16000, x), SampleFormat::float32));
  CHECK(clip.samples == x);
}

TEST_CASE("preprocess: silent file") {
  auto clip = preprocess(encode_wav(Waveform::from_mono(16000, std::vector<float>(1000, 0.0f)), SampleFormat::pcm16));
  CHECK(clip.silent);
  for (float v : clip.samples) REQUIRE(v == 0.0f);
}

TEST_CASE("clip dump round trip") {
  testutil::TempDir dir("dump");
  FixedClip c;
  c.samples = testutil::random_tensor<float>({kClipLength}, 9).data;
  write_clip_dump(dir / "a.f32", c);
  CHECK(std::filesystem::file_size(dir / "a.f32") == kClipLength * 4);
  CHECK(read_clip_dump(dir / "a.f32").samples == c.samples);
}
