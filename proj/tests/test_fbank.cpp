#include <catch_amalgamated.hpp>

#include <cmath>

#include "mddkit/fbank.hpp"
#include "mddkit/rng.hpp"

using namespace mddkit;

namespace {

Waveform tone(double freq_hz, double seconds, double amp = 0.5) {
  Waveform w;
  const int n = int(seconds * 16000);
  for (int i = 0; i < n; ++i) w.samples.push_back(amp * std::sin(2.0 * kPi * freq_hz * i / 16000.0));
  return w;
}

}  // namespace

TEST_CASE("frame count arithmetic") {
  Waveform w = tone(440.0, 1.0);
  REQUIRE(w.length() == 16000);
  const auto feats = fbank<double>(w);
  CHECK(feats.rows == 98);  // floor((16000 - 400) / 160) + 1
  CHECK(feats.cols == 80);

  Rng rng(3);
  FbankConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    Waveform v;
    v.samples.assign(std::size_t(rng.uniform_int(400, 12000)), 0.1);
    const auto f = fbank<double>(v, cfg);
    CHECK(f.rows == (v.length() - 400) / 160 + 1);
  }
}

TEST_CASE("too-short input is rejected") {
  Waveform w;
  w.samples.assign(399, 0.0);
  CHECK_THROWS_AS(fbank<double>(w), InputError);
}

TEST_CASE("digital silence maps to the log floor everywhere") {
  Waveform w;
  w.samples.assign(1600, 0.0);
  FbankConfig cfg;
  const auto feats = fbank<double>(w, cfg);
  const double floor_value = std::log(cfg.log_floor);
  for (double v : feats.data) CHECK(v == floor_value);
}

TEST_CASE("pure tone peaks in the band containing its frequency") {
  const Waveform w = tone(1000.0, 0.5);
  FbankConfig cfg;
  const auto feats = fbank<double>(w, cfg);
  for (int t = 0; t < feats.rows; ++t) {
    int best = 0;
    for (int m = 1; m < feats.cols; ++m)
      if (feats(t, m) > feats(t, best)) best = m;
    const auto [left, right] = mel_band_range(best, cfg.n_mels, 16000);
    CHECK(left <= 1000.0);
    CHECK(right >= 1000.0);
  }
}

TEST_CASE("mel filter weights cover the spectrum") {
  const auto weights = mel_filter_weights(40, 512, 16000);
  for (int m = 0; m < 40; ++m) {
    double total = 0.0;
    for (int k = 0; k < weights.cols; ++k) {
      CHECK(weights(m, k) >= 0.0);
      CHECK(weights(m, k) <= 1.0);
      total += weights(m, k);
    }
    CHECK(total > 0.0);  // every band has support
  }
}

TEST_CASE("louder signal raises every band energy") {
  const Waveform quiet = tone(800.0, 0.2, 0.1);
  const Waveform loud = tone(800.0, 0.2, 0.8);
  const auto fq = fbank<double>(quiet);
  const auto fl = fbank<double>(loud);
  REQUIRE(fq.rows == fl.rows);
  double mean_q = 0.0, mean_l = 0.0;
  for (double v : fq.data) mean_q += v;
  for (double v : fl.data) mean_l += v;
  CHECK(mean_l > mean_q);
}
