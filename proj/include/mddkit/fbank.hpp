// Log mel-filterbank energies, the hand-crafted feature baseline.
// 25 ms Hamming window, 10 ms hop, triangular mel bands over [0, nyquist].
#pragma once

#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/fft.hpp"
#include "mddkit/matrix.hpp"
#include "mddkit/sinc_filterbank.hpp"  // hz_to_mel / mel_to_hz
#include "mddkit/wav.hpp"

namespace mddkit {

struct FbankConfig {
  int n_mels = 80;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  double log_floor = 1e-10;  // energies are floored here before the log

  int window_samples(int sample_rate_hz) const {
    return int(window_ms * sample_rate_hz / 1000.0 + 0.5);
  }
  int hop_samples(int sample_rate_hz) const {
    return int(hop_ms * sample_rate_hz / 1000.0 + 0.5);
  }
};

// Triangular mel filter weights over FFT bins: n_mels x (nfft/2 + 1).
inline Matrix<double> mel_filter_weights(int n_mels, int nfft, int sample_rate_hz) {
  const int bins = nfft / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate_hz / 2.0);
  std::vector<double> centers(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

  Matrix<double> weights(n_mels, bins, 0.0);
  for (int m = 0; m < n_mels; ++m) {
    const double left = centers[m], mid = centers[m + 1], right = centers[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = double(k) * sample_rate_hz / nfft;
      if (f > left && f < mid)
        weights(m, k) = (f - left) / (mid - left);
      else if (f >= mid && f < right)
        weights(m, k) = (right - f) / (right - mid);
    }
  }
  return weights;
}

// [left_hz, right_hz) support of one mel band, for tests and reports.
inline std::pair<double, double> mel_band_range(int band, int n_mels, int sample_rate_hz) {
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate_hz / 2.0);
  auto edge = [&](int i) { return mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1)); };
  return {edge(band), edge(band + 2)};
}

// Frame count = floor((N - window) / hop) + 1; requires at least one window.
template <class S>
inline Matrix<S> fbank(const Waveform& wave, const FbankConfig& cfg = {}) {
  const int win = cfg.window_samples(wave.sample_rate_hz);
  const int hop = cfg.hop_samples(wave.sample_rate_hz);
  const int n = wave.length();
  if (n < win)
    throw InputError("waveform shorter than one analysis window (" + std::to_string(n) + " < " +
                     std::to_string(win) + " samples)");

  const int frames = (n - win) / hop + 1;
  const int nfft = next_power_of_two(win);
  const Matrix<double> mel = mel_filter_weights(cfg.n_mels, nfft, wave.sample_rate_hz);

  std::vector<double> hamming(win);
  for (int i = 0; i < win; ++i)
    hamming[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (win - 1));

  Matrix<S> out(frames, cfg.n_mels);
  std::vector<std::complex<double>> buf(nfft);
  for (int t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const int start = t * hop;
    for (int i = 0; i < win; ++i)
      buf[i] = std::complex<double>(wave.samples[start + i] * hamming[i], 0.0);
    fft_inplace(buf);
    for (int m = 0; m < cfg.n_mels; ++m) {
      double energy = 0.0;
      const double* wrow = mel.row(m);
      for (int k = 0; k <= nfft / 2; ++k) {
        if (wrow[k] == 0.0) continue;
        energy += wrow[k] * std::norm(buf[k]);
      }
      out(t, m) = S(std::log(std::max(energy, cfg.log_floor)));
    }
  }
  return out;
}

}  // namespace mddkit
