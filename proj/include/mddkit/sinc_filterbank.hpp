// Learnable sinc bandpass filterbank. Each filter is the difference of two
// scaled sinc functions parametrized by its low cutoff and bandwidth,
// Hamming-windowed and normalized to unit peak passband gain. Gradients with
// respect to the cutoff parameters are exact closed forms, including the
// path through the peak-magnitude normalization.
#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <string>
#include <utility>
#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/fft.hpp"

namespace mddkit {

// sin(x)/x with the removable singularity at 0 defined as 1.
inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(x) / x;
}

// Rectangular magnitude response of the ideal bandpass filter: 1 strictly
// inside (f1, f2), 0 strictly outside, 0.5 at the band edges.
inline double ideal_frequency_response(double f1_hz, double f2_hz, double f_hz) {
  if (f_hz < 0.0) throw InputError("frequency must be non-negative");
  if (f1_hz < 0.0 || f1_hz > f2_hz) throw ContractError("requires 0 <= f1 <= f2");
  if (f_hz == f1_hz || f_hz == f2_hz) return f1_hz == f2_hz ? 0.0 : 0.5;
  return (f_hz > f1_hz && f_hz < f2_hz) ? 1.0 : 0.0;
}

template <class S>
struct FilterKernel {
  std::vector<S> taps;  // kernel_length values, even-symmetric about the center

  int length() const { return int(taps.size()); }
};

// Learnable cutoff parameters, in Hz. The effective cutoffs are
//   f1 = clamp(|theta_low|, 0, nyquist)
//   f2 = clamp(f1 + |theta_band| + kMinBandHz, 0, nyquist)
// which guarantees 0 <= f1 <= f2 <= nyquist without constrained updates.
template <class S>
struct SincFilterbankParams {
  std::vector<S> theta_low;
  std::vector<S> theta_band;
  int kernel_length = 251;
  int sample_rate_hz = 16000;

  static constexpr double kMinBandHz = 50.0;

  int filter_count() const { return int(theta_low.size()); }
  double nyquist() const { return sample_rate_hz / 2.0; }

  void validate() const {
    if (theta_low.size() != theta_band.size())
      throw ConfigError("theta_low/theta_band length mismatch");
    if (theta_low.empty()) throw ConfigError("filterbank needs at least one filter");
    if (kernel_length <= 0 || kernel_length % 2 == 0)
      throw ConfigError("kernel_length must be odd and positive, got " +
                        std::to_string(kernel_length));
    if (sample_rate_hz <= 0) throw ConfigError("sample_rate_hz must be positive");
  }
};

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Cutoffs spaced on the mel scale over [30 Hz, nyquist], one contiguous band
// per filter. Bands narrower than the minimum width collapse to it.
template <class S>
inline SincFilterbankParams<S> mel_initialized_filterbank(int filter_count, int kernel_length,
                                                          int sample_rate_hz) {
  if (filter_count <= 0) throw ConfigError("filter_count must be positive");
  SincFilterbankParams<S> p;
  p.kernel_length = kernel_length;
  p.sample_rate_hz = sample_rate_hz;
  const double lo = hz_to_mel(30.0);
  const double hi = hz_to_mel(sample_rate_hz / 2.0);
  for (int i = 0; i < filter_count; ++i) {
    double f1 = mel_to_hz(lo + (hi - lo) * i / filter_count);
    double f2 = mel_to_hz(lo + (hi - lo) * (i + 1) / filter_count);
    p.theta_low.push_back(S(f1));
    p.theta_band.push_back(S(std::max(0.0, f2 - f1 - SincFilterbankParams<S>::kMinBandHz)));
  }
  p.validate();
  return p;
}

namespace detail {

struct Cutoffs {
  double f1 = 0.0, f2 = 0.0;
  double df1_dlow = 0.0;           // d f1 / d theta_low
  double df2_dlow = 0.0, df2_dband = 0.0;
};

inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

template <class S>
inline Cutoffs cutoffs_from_theta(const SincFilterbankParams<S>& p, int i) {
  const double nyq = p.nyquist();
  const double min_band = SincFilterbankParams<S>::kMinBandHz;
  const double tl = double(p.theta_low[i]);
  const double tb = double(p.theta_band[i]);

  Cutoffs c;
  double f1 = std::abs(tl);
  c.df1_dlow = sign_of(tl);
  if (f1 > nyq) {
    f1 = nyq;
    c.df1_dlow = 0.0;
  }
  double f2 = f1 + std::abs(tb) + min_band;
  c.df2_dlow = c.df1_dlow;
  c.df2_dband = sign_of(tb);
  if (f2 > nyq) {
    f2 = nyq;
    c.df2_dlow = 0.0;
    c.df2_dband = 0.0;
  }
  c.f1 = f1;
  c.f2 = f2;  // f2 >= f1 by construction
  return c;
}

}  // namespace detail

// Everything needed to push gradients back through one materialized kernel.
struct SincKernelRecord {
  detail::Cutoffs cut;
  std::vector<double> windowed;  // Hamming-windowed difference-of-sincs, pre-normalization
  double norm = 0.0;             // peak DFT magnitude; 0 marks the degenerate zero kernel
  int peak_bin = 0;
  int nfft = 0;
};

inline int sinc_normalization_nfft(int kernel_length) {
  return std::max(1024, next_power_of_two(kernel_length));
}

// Builds one normalized kernel from explicit cutoffs. Eq: difference of two
// scaled sincs evaluated at integer offsets, frequencies normalized by the
// sample rate. f1 == f2 cancels exactly to the zero kernel.
template <class S>
inline FilterKernel<S> sinc_kernel(double f1_hz, double f2_hz, int kernel_length,
                                   int sample_rate_hz, SincKernelRecord* record = nullptr) {
  if (kernel_length <= 0 || kernel_length % 2 == 0)
    throw ConfigError("kernel_length must be odd and positive");
  const int half = (kernel_length - 1) / 2;
  const double nu1 = f1_hz / sample_rate_hz;
  const double nu2 = f2_hz / sample_rate_hz;

  std::vector<double> windowed(kernel_length);
  for (int u = 0; u < kernel_length; ++u) {
    const double t = double(u - half);
    const double g = 2.0 * nu2 * sinc(2.0 * kPi * nu2 * t) - 2.0 * nu1 * sinc(2.0 * kPi * nu1 * t);
    const double w = 0.54 + 0.46 * std::cos(2.0 * kPi * t / (kernel_length - 1));
    windowed[u] = w * g;
  }

  const int nfft = sinc_normalization_nfft(kernel_length);
  const std::vector<double> mag = dft_magnitude(windowed, nfft);
  int peak_bin = 0;
  for (int k = 1; k < int(mag.size()); ++k)
    if (mag[k] > mag[peak_bin]) peak_bin = k;
  const double norm = mag[peak_bin];

  FilterKernel<S> kernel;
  kernel.taps.resize(kernel_length);
  if (norm > 0.0) {
    for (int u = 0; u < kernel_length; ++u) kernel.taps[u] = S(windowed[u] / norm);
  } else {
    for (int u = 0; u < kernel_length; ++u) kernel.taps[u] = S(0);
  }

  if (record) {
    record->windowed = std::move(windowed);
    record->norm = norm;
    record->peak_bin = peak_bin;
    record->nfft = nfft;
  }
  return kernel;
}

// One kernel per filter, cutoffs derived from the learnable parameters.
template <class S>
inline std::vector<FilterKernel<S>> materialize_filters(
    const SincFilterbankParams<S>& params, std::vector<SincKernelRecord>* records = nullptr) {
  params.validate();
  std::vector<FilterKernel<S>> kernels;
  kernels.reserve(params.filter_count());
  if (records) records->assign(params.filter_count(), {});
  for (int i = 0; i < params.filter_count(); ++i) {
    const detail::Cutoffs cut = detail::cutoffs_from_theta(params, i);
    SincKernelRecord rec;
    kernels.push_back(
        sinc_kernel<S>(cut.f1, cut.f2, params.kernel_length, params.sample_rate_hz, &rec));
    rec.cut = cut;
    if (records) (*records)[i] = std::move(rec);
  }
  return kernels;
}

// Magnitude response of a kernel on the nfft/2 + 1 non-negative frequency
// bins of its zero-padded DFT.
template <class S>
inline std::vector<std::pair<double, double>> measured_frequency_response(
    const FilterKernel<S>& kernel, int nfft, int sample_rate_hz) {
  if (nfft < kernel.length()) throw ConfigError("nfft must be >= kernel length");
  if (!is_power_of_two(nfft)) throw ConfigError("nfft must be a power of two");
  const std::vector<double> mag = dft_magnitude(kernel.taps, nfft);
  std::vector<std::pair<double, double>> out(mag.size());
  for (int k = 0; k < int(mag.size()); ++k)
    out[k] = {double(k) * sample_rate_hz / nfft, mag[k]};
  return out;
}

namespace detail {

// d(peak magnitude)/d(windowed tap u) at the recorded peak bin:
// with Z = sum_u w[u] e^{-i 2 pi b u / nfft}, d|Z|/dw[u] = (A cos - B sin)/|Z|.
inline std::vector<double> norm_grad_wrt_windowed(const SincKernelRecord& rec) {
  const int len = int(rec.windowed.size());
  std::vector<double> out(len, 0.0);
  if (rec.norm <= 0.0) return out;
  double a = 0.0, b = 0.0;
  const double step = 2.0 * kPi * rec.peak_bin / rec.nfft;
  for (int u = 0; u < len; ++u) {
    a += rec.windowed[u] * std::cos(step * u);
    b -= rec.windowed[u] * std::sin(step * u);
  }
  const double mag = std::sqrt(a * a + b * b);
  if (mag == 0.0) return out;
  for (int u = 0; u < len; ++u)
    out[u] = (a * std::cos(step * u) - b * std::sin(step * u)) / mag;
  return out;
}

}  // namespace detail

// Accumulates d(loss)/d(theta_low), d(loss)/d(theta_band) for one filter
// given d(loss)/d(normalized taps). The chain runs through normalization,
// windowing and the closed-form cutoff derivatives
//   d g[t] / d f1 = -(2/fs) cos(2 pi f1 t / fs),
//   d g[t] / d f2 = +(2/fs) cos(2 pi f2 t / fs).
template <class S>
inline void sinc_kernel_backward(const SincKernelRecord& rec, const S* upstream, int kernel_length,
                                 int sample_rate_hz, S* dtheta_low, S* dtheta_band) {
  if (rec.norm <= 0.0) return;  // degenerate zero kernel: flat, no gradient
  const int half = (kernel_length - 1) / 2;
  const double fs = double(sample_rate_hz);
  const double nu1 = rec.cut.f1 / fs;
  const double nu2 = rec.cut.f2 / fs;

  const std::vector<double> dnorm = detail::norm_grad_wrt_windowed(rec);

  // dL/df = ( sum_t up[t] dwind[t]/df - (sum_t up[t] k[t]) * dM/df ) / M
  double up_dot_k = 0.0;
  for (int u = 0; u < kernel_length; ++u)
    up_dot_k += double(upstream[u]) * (rec.windowed[u] / rec.norm);

  double up_dot_dw1 = 0.0, up_dot_dw2 = 0.0;  // sum_t up[t] * d windowed[t]/df
  double dm_df1 = 0.0, dm_df2 = 0.0;
  for (int u = 0; u < kernel_length; ++u) {
    const double t = double(u - half);
    const double w = 0.54 + 0.46 * std::cos(2.0 * kPi * t / (kernel_length - 1));
    const double dg_df1 = -(2.0 / fs) * std::cos(2.0 * kPi * nu1 * t);
    const double dg_df2 = (2.0 / fs) * std::cos(2.0 * kPi * nu2 * t);
    up_dot_dw1 += double(upstream[u]) * w * dg_df1;
    up_dot_dw2 += double(upstream[u]) * w * dg_df2;
    dm_df1 += dnorm[u] * w * dg_df1;
    dm_df2 += dnorm[u] * w * dg_df2;
  }

  const double dl_df1 = (up_dot_dw1 - up_dot_k * dm_df1) / rec.norm;
  const double dl_df2 = (up_dot_dw2 - up_dot_k * dm_df2) / rec.norm;

  *dtheta_low += S(dl_df1 * rec.cut.df1_dlow + dl_df2 * rec.cut.df2_dlow);
  *dtheta_band += S(dl_df2 * rec.cut.df2_dband);
}

// CSV export of per-filter magnitude responses plus a normalized average
// response section (filter_id = -1, peak scaled to 1).
template <class S>
inline void export_filters(const SincFilterbankParams<S>& params, const std::string& path,
                           int nfft = 1024) {
  const auto kernels = materialize_filters(params);
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "filter_id,freq_hz,magnitude\n";
  f << std::setprecision(12);

  std::vector<double> average(nfft / 2 + 1, 0.0);
  for (int i = 0; i < int(kernels.size()); ++i) {
    const auto resp = measured_frequency_response(kernels[i], nfft, params.sample_rate_hz);
    for (int k = 0; k < int(resp.size()); ++k) {
      f << i << ',' << resp[k].first << ',' << resp[k].second << '\n';
      average[k] += resp[k].second;
    }
  }
  double peak = 0.0;
  for (double& v : average) {
    v /= double(kernels.size());
    peak = std::max(peak, v);
  }
  if (peak > 0.0)
    for (double& v : average) v /= peak;
  for (int k = 0; k <= nfft / 2; ++k)
    f << -1 << ',' << double(k) * params.sample_rate_hz / nfft << ',' << average[k] << '\n';
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace mddkit
