#include "serda/wav_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "serda/error.hpp"

namespace serda::wav {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

Waveform load(const std::filesystem::path& path, std::optional<int> expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file" + where);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const char* data_ptr = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto len = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > buf.size()) throw FormatError("truncated '" + id + "' chunk" + where);
    if (id == "fmt ") {
      if (len < 16) throw FormatError("fmt chunk too short" + where);
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible) {
        if (len < 26) throw FormatError("extensible fmt chunk too short" + where);
        format = read_le<std::uint16_t>(buf, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      data_ptr = buf.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt) throw FormatError("missing fmt chunk" + where);
  if (!data_ptr) throw FormatError("missing data chunk" + where);
  if (channels != 1) throw FormatError("channels: expected 1, got " + std::to_string(channels) + where);
  if (expected_rate && static_cast<int>(rate) != *expected_rate) {
    throw FormatError("sample_rate: expected " + std::to_string(*expected_rate) + ", got " + std::to_string(rate) + where);
  }

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::int16_t v;
      std::memcpy(&v, data_ptr + 2 * i, 2);
      w.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_len / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, data_ptr + 4 * i, 4);
      w.samples[i] = static_cast<double>(v);
    }
  } else {
    throw FormatError("encoding: unsupported format " + std::to_string(format) + " with " + std::to_string(bits) +
                      " bits per sample" + where);
  }
  if (w.samples.empty()) throw FormatError("data chunk holds no samples" + where);
  return w;
}

void save(const std::filesystem::path& path, const Waveform& w, Encoding encoding) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write WAV file " + path.string());
  const std::uint16_t bits = encoding == Encoding::Pcm16 ? 16 : 32;
  const std::uint16_t format = encoding == Encoding::Pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * bits / 8);
  const auto rate = static_cast<std::uint32_t>(w.sample_rate);

  os.write("RIFF", 4);
  write_le<std::uint32_t>(os, 36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_le<std::uint32_t>(os, 16);
  write_le<std::uint16_t>(os, format);
  write_le<std::uint16_t>(os, 1);
  write_le<std::uint32_t>(os, rate);
  write_le<std::uint32_t>(os, rate * bits / 8);
  write_le<std::uint16_t>(os, bits / 8);
  write_le<std::uint16_t>(os, bits);
  os.write("data", 4);
  write_le<std::uint32_t>(os, data_len);
  for (double s : w.samples) {
    if (encoding == Encoding::Pcm16) {
      const double scaled = std::nearbyint(std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0);
      write_le<std::int16_t>(os, static_cast<std::int16_t>(scaled));
    } else {
      write_le<float>(os, static_cast<float>(s));
    }
  }
  if (!os) throw IoError("failed writing WAV file " + path.string());
}

}  // namespace serda::wav
