#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "mddkit/rng.hpp"
#include "mddkit/wav.hpp"

using namespace mddkit;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("write/read round trip within quantization") {
  Rng rng(9);
  Waveform wave;
  wave.samples.resize(1000);
  for (double& s : wave.samples) s = rng.uniform(-1.0, 1.0);
  TempFile tmp("test_roundtrip.wav");
  write_wav(wave, tmp.path);
  const Waveform back = read_wav(tmp.path);
  REQUIRE(back.length() == wave.length());
  CHECK(back.sample_rate_hz == 16000);
  for (int i = 0; i < wave.length(); ++i)
    CHECK(std::abs(back.samples[i] - wave.samples[i]) <= 1.0 / 32768.0);
}

TEST_CASE("writer output is byte-stable") {
  Waveform wave;
  for (int i = 0; i < 64; ++i) wave.samples.push_back(std::sin(0.1 * i));
  TempFile a("test_stable_a.wav"), b("test_stable_b.wav");
  write_wav(wave, a.path);
  write_wav(wave, b.path);
  std::ifstream fa(a.path, std::ios::binary), fb(b.path, std::ios::binary);
  const std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  const std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ca == cb);
  CHECK(ca.size() == 44 + 2 * wave.samples.size());
}

TEST_CASE("rejects non-16k, stereo, and malformed files") {
  Waveform wave;
  wave.samples = {0.0, 0.1};
  wave.sample_rate_hz = 8000;
  TempFile tmp("test_badrate.wav");
  write_wav(wave, tmp.path);  // writer accepts any rate; the reader is strict
  CHECK_THROWS_AS(read_wav(tmp.path), FormatError);

  // Hand-built stereo header.
  TempFile stereo("test_stereo.wav");
  {
    Waveform mono;
    mono.samples = {0.0, 0.1, 0.2, 0.3};
    write_wav(mono, stereo.path);
    std::fstream f(stereo.path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(22);
    const char two[2] = {2, 0};
    f.write(two, 2);
  }
  CHECK_THROWS_AS(read_wav(stereo.path), FormatError);

  TempFile empty("test_empty.wav");
  { std::ofstream f(empty.path, std::ios::binary); }
  CHECK_THROWS_AS(read_wav(empty.path), FormatError);

  TempFile garbage("test_garbage.wav");
  {
    std::ofstream f(garbage.path, std::ios::binary);
    f << "definitely not a wav file, much longer than twelve bytes";
  }
  CHECK_THROWS_AS(read_wav(garbage.path), FormatError);

  CHECK_THROWS_AS(read_wav("does_not_exist_anywhere.wav"), IoError);
}

TEST_CASE("clamps out-of-range samples") {
  Waveform wave;
  wave.samples = {1.5, -1.5, 0.25};
  TempFile tmp("test_clamp.wav");
  write_wav(wave, tmp.path);
  const Waveform back = read_wav(tmp.path);
  CHECK(back.samples[0] == Catch::Approx(1.0).margin(1.0 / 32768.0));
  CHECK(back.samples[1] == Catch::Approx(-1.0).margin(1.0 / 32768.0));
  CHECK(back.samples[2] == Catch::Approx(0.25).margin(1.0 / 32768.0));
}
