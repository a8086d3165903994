// Mono 16-bit PCM WAV reader/writer. Anything that is not 16 kHz mono PCM16
// is rejected with a descriptive FormatError.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mddkit/common.hpp"

namespace mddkit {

struct Waveform {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate_hz = 16000;

  int length() const { return int(samples.size()); }
  double duration_s() const { return double(samples.size()) / sample_rate_hz; }
};

inline constexpr int kRequiredSampleRate = 16000;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

inline std::uint16_t get_u16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

}  // namespace detail

inline void write_wav(const Waveform& wave, const std::string& path) {
  const std::uint32_t n = std::uint32_t(wave.samples.size());
  const std::uint32_t data_bytes = n * 2;
  const std::uint32_t rate = std::uint32_t(wave.sample_rate_hz);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);  // PCM
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * 2);  // byte rate
  detail::put_u16(out, 2);         // block align
  detail::put_u16(out, 16);        // bits per sample
  out += "data";
  detail::put_u32(out, data_bytes);
  for (double s : wave.samples) {
    const double clamped = std::max(-1.0, std::min(1.0, s));
    long q = std::lround(clamped * 32768.0);
    q = std::max(-32768L, std::min(32767L, q));
    detail::put_u16(out, std::uint16_t(std::int16_t(q)));
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw IoError("short write: " + path);
}

inline Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12) throw FormatError("not a WAV file (too short): " + path);
  if (std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  Waveform wave;
  bool have_data = false;

  while (pos + 8 <= buf.size()) {
    const char* id = reinterpret_cast<const char*>(buf.data() + pos);
    std::uint32_t chunk_size = detail::get_u32(buf.data() + pos + 4);
    std::size_t body = pos + 8;
    if (body + chunk_size > buf.size())
      chunk_size = std::uint32_t(buf.size() - body);  // tolerate truncated final chunk size

    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw FormatError("malformed fmt chunk: " + path);
      format = detail::get_u16(buf.data() + body);
      channels = detail::get_u16(buf.data() + body + 2);
      rate = detail::get_u32(buf.data() + body + 4);
      bits = detail::get_u16(buf.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk: " + path);
      if (format != 1) throw FormatError("only PCM WAV supported: " + path);
      if (channels != 1)
        throw FormatError("only mono WAV supported (got " + std::to_string(channels) +
                          " channels): " + path);
      if (bits != 16) throw FormatError("only 16-bit WAV supported (got " +
                                        std::to_string(bits) + " bits): " + path);
      if (int(rate) != kRequiredSampleRate)
        throw FormatError("only 16 kHz WAV supported (got " + std::to_string(rate) +
                          " Hz): " + path);
      const std::size_t n = chunk_size / 2;
      wave.samples.resize(n);
      wave.sample_rate_hz = int(rate);
      for (std::size_t i = 0; i < n; ++i) {
        auto v = std::int16_t(detail::get_u16(buf.data() + body + 2 * i));
        wave.samples[i] = double(v) / 32768.0;
      }
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (!have_data) throw FormatError("WAV file has no data chunk: " + path);
  return wave;
}

}  // namespace mddkit
