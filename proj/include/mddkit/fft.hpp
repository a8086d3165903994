// Iterative radix-2 FFT, enough for filterbank energies and filter-response
// inspection. nfft must be a power of two.
#pragma once

#include <complex>
#include <vector>

#include "mddkit/common.hpp"

namespace mddkit {

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline int next_power_of_two(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place decimation-in-time FFT.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const int n = int(a.size());
  if (!is_power_of_two(n)) throw ConfigError("fft size must be a power of two");
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / len;
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Magnitude of the DFT of a real signal zero-padded to nfft, on the
// nfft/2 + 1 non-negative frequency bins.
template <class S>
inline std::vector<double> dft_magnitude(const std::vector<S>& x, int nfft) {
  if (!is_power_of_two(nfft)) throw ConfigError("nfft must be a power of two");
  if (int(x.size()) > nfft) throw ConfigError("nfft smaller than signal length");
  std::vector<std::complex<double>> buf(nfft, {0.0, 0.0});
  for (std::size_t i = 0; i < x.size(); ++i) buf[i] = std::complex<double>(double(x[i]), 0.0);
  fft_inplace(buf);
  std::vector<double> mag(nfft / 2 + 1);
  for (int k = 0; k <= nfft / 2; ++k) mag[k] = std::abs(buf[k]);
  return mag;
}

}  // namespace mddkit
