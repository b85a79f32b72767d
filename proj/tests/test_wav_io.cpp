#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "serda/error.hpp"
#include "serda/wav_io.hpp"

using namespace serda;
namespace fs = std::filesystem;

namespace {

template <typename T>
void put(std::string& s, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  s.append(b, sizeof(T));
}

// Hand-built RIFF file; independent of the writer under test.
std::string riff(std::uint16_t format, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits,
                 const std::string& data) {
  std::string fmt;
  put<std::uint16_t>(fmt, format);
  put<std::uint16_t>(fmt, channels);
  put<std::uint32_t>(fmt, rate);
  put<std::uint32_t>(fmt, rate * channels * bits / 8);
  put<std::uint16_t>(fmt, static_cast<std::uint16_t>(channels * bits / 8));
  put<std::uint16_t>(fmt, bits);
  std::string body = "WAVE";
  body += "fmt ";
  put<std::uint32_t>(body, static_cast<std::uint32_t>(fmt.size()));
  body += fmt;
  body += "data";
  put<std::uint32_t>(body, static_cast<std::uint32_t>(data.size()));
  body += data;
  std::string out = "RIFF";
  put<std::uint32_t>(out, static_cast<std::uint32_t>(body.size()));
  return out + body;
}

fs::path write_tmp(const std::string& name, const std::string& bytes) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p, std::ios::binary) << bytes;
  return p;
}

std::string format_error(const fs::path& p, std::optional<int> rate = std::nullopt) {
  try {
    wav::load(p, rate);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(WavIo, Pcm16Scaling) {
  std::string data;
  for (std::int16_t v : {std::int16_t{-32768}, std::int16_t{0}, std::int16_t{16384}, std::int16_t{32767}}) put(data, v);
  const auto w = wav::load(write_tmp("serda_pcm.wav", riff(1, 1, 16000, 16, data)));
  ASSERT_EQ(w.size(), 4u);
  EXPECT_EQ(w.samples[0], -1.0);
  EXPECT_EQ(w.samples[1], 0.0);
  EXPECT_EQ(w.samples[2], 0.5);
  EXPECT_EQ(w.samples[3], 32767.0 / 32768.0);
  EXPECT_EQ(w.sample_rate, 16000);
}

TEST(WavIo, FloatRoundTripBitExact) {
  Waveform w;
  for (int i = 0; i < 257; ++i) w.samples.push_back(static_cast<float>(std::sin(i * 0.37) * 0.9));
  const fs::path p = fs::temp_directory_path() / "serda_rt.wav";
  wav::save(p, w);
  EXPECT_EQ(wav::load(p), w);
}

TEST(WavIo, Pcm16WriterMatchesReader) {
  Waveform w{{-1.0, -0.5, 0.0, 0.25, 32767.0 / 32768.0}, 8000};
  const fs::path p = fs::temp_directory_path() / "serda_rt16.wav";
  wav::save(p, w, wav::Encoding::Pcm16);
  EXPECT_EQ(wav::load(p), w);
}

TEST(WavIo, FormatErrorsNameTheField) {
  std::string stereo;
  for (int i = 0; i < 4; ++i) put<std::int16_t>(stereo, 100);
  EXPECT_NE(format_error(write_tmp("serda_stereo.wav", riff(1, 2, 16000, 16, stereo))).find("channels"),
            std::string::npos);

  std::string mono;
  for (int i = 0; i < 4; ++i) put<std::int16_t>(mono, 100);
  const fs::path p8k = write_tmp("serda_8k.wav", riff(1, 1, 8000, 16, mono));
  EXPECT_NE(format_error(p8k, 16000).find("sample_rate"), std::string::npos);
  EXPECT_EQ(wav::load(p8k, 8000).sample_rate, 8000);

  std::string bytes24(9, '\0');
  EXPECT_NE(format_error(write_tmp("serda_24.wav", riff(1, 1, 16000, 24, bytes24))).find("encoding"),
            std::string::npos);
  EXPECT_NE(format_error(write_tmp("serda_junk.wav", "not a wav file at all")).find("RIFF"), std::string::npos);
}

TEST(WavIo, MissingFileIsIoError) {
  EXPECT_THROW(wav::load("/nonexistent/serda.wav"), IoError);
}
