// Raw-waveform front-end: strided convolution with the materialized sinc
// kernels, abs -> max-pool -> log compression, a learnable per-channel
// affine, then a small same-padded conv stack. The fbank features from
// fbank.hpp are the fixed baseline alternative.
//
// Length arithmetic (all documented, no hidden padding):
//   P = floor((N - kernel_length) / sinc_stride) + 1   (valid convolution)
//   F = floor(P / sinc_pool_factor)
//   after conv layer i (same padding): length divides by conv_pool_factors[i]
#pragma once

#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/matrix.hpp"
#include "mddkit/nn.hpp"
#include "mddkit/sinc_filterbank.hpp"
#include "mddkit/wav.hpp"

namespace mddkit {

struct FrontendConfig {
  std::vector<int> conv_layer_filters = {128, 128};
  std::vector<int> conv_kernel_sizes = {3, 3};
  std::vector<int> conv_pool_factors = {1, 1};
  Nonlinearity nonlinearity = Nonlinearity::Tanh;
  int sinc_stride = 16;
  int sinc_pool_factor = 10;
  double log_offset = 1e-6;

  void validate() const {
    if (conv_layer_filters.size() != conv_kernel_sizes.size() ||
        conv_layer_filters.size() != conv_pool_factors.size())
      throw ConfigError("frontend conv layer lists must have equal lengths");
    for (int f : conv_pool_factors)
      if (f < 1) throw ConfigError("conv pool factors must be >= 1");
    if (sinc_stride < 1 || sinc_pool_factor < 1)
      throw ConfigError("sinc stride and pool factor must be >= 1");
    if (log_offset <= 0.0) throw ConfigError("log offset must be positive");
  }

  int output_dim() const {
    return conv_layer_filters.empty() ? 0 : conv_layer_filters.back();
  }
};

template <class S>
struct SincFrontend {
  SincFilterbankParams<S> filterbank;
  FrontendConfig cfg;
  // Per-channel affine after the log compression; recenters the log energies.
  std::vector<S> affine_gain;
  std::vector<S> affine_bias;
  std::vector<Matrix<S>> conv_weights;       // (out_ch, in_ch * kernel) per layer
  std::vector<std::vector<S>> conv_biases;

  double frame_rate_hz() const {
    double rate = double(filterbank.sample_rate_hz) / (cfg.sinc_stride * cfg.sinc_pool_factor);
    for (int f : cfg.conv_pool_factors) rate /= f;
    return rate;
  }

  static SincFrontend make(const SincFilterbankParams<S>& fb, const FrontendConfig& cfg) {
    cfg.validate();
    fb.validate();
    SincFrontend fe;
    fe.filterbank = fb;
    fe.cfg = cfg;
    fe.affine_gain.assign(fb.filter_count(), S(1));
    fe.affine_bias.assign(fb.filter_count(), S(0));
    int in_ch = fb.filter_count();
    for (std::size_t i = 0; i < cfg.conv_layer_filters.size(); ++i) {
      const int out_ch = cfg.conv_layer_filters[i];
      fe.conv_weights.emplace_back(out_ch, in_ch * cfg.conv_kernel_sizes[i], S(0));
      fe.conv_biases.emplace_back(out_ch, S(0));
      in_ch = out_ch;
    }
    return fe;
  }

  // A same-shape gradient buffer with every learnable entry zeroed.
  static SincFrontend zero_like(const SincFrontend& fe) {
    SincFrontend g = fe;
    ParamRegistry<S> reg;
    g.register_params(reg, nullptr);
    for (const auto& v : reg.views()) std::fill(v.values, v.values + v.size, S(0));
    return g;
  }

  void register_params(ParamRegistry<S>& reg, SincFrontend* grads) {
    reg.add("frontend.theta_low", &filterbank.theta_low,
            grads ? &grads->filterbank.theta_low : nullptr);
    reg.add("frontend.theta_band", &filterbank.theta_band,
            grads ? &grads->filterbank.theta_band : nullptr);
    reg.add("frontend.affine_gain", &affine_gain, grads ? &grads->affine_gain : nullptr);
    reg.add("frontend.affine_bias", &affine_bias, grads ? &grads->affine_bias : nullptr);
    for (std::size_t i = 0; i < conv_weights.size(); ++i) {
      const std::string tag = "frontend.conv" + std::to_string(i);
      reg.add(tag + ".weight", &conv_weights[i], grads ? &grads->conv_weights[i] : nullptr);
      reg.add(tag + ".bias", &conv_biases[i], grads ? &grads->conv_biases[i] : nullptr);
    }
  }
};

template <class S>
struct SincFrontendCache {
  std::vector<S> wave;                   // input cast to S
  std::vector<SincKernelRecord> records;
  std::vector<FilterKernel<S>> kernels;
  Matrix<S> conv_out;                    // filters x P, pre-compression
  Matrix<S> abs_out;
  MaxPoolCache<S> sinc_pool;
  Matrix<S> pooled;                      // filters x F
  Matrix<S> affined;                     // after log + affine
  std::vector<Matrix<S>> layer_inputs;   // channel-major input per conv layer
  std::vector<Matrix<S>> layer_act;      // post-nonlinearity, pre-pool
  std::vector<MaxPoolCache<S>> layer_pools;
  Matrix<S> final_channels;              // channel-major output
};

// Strided valid correlation of the waveform against each kernel. Kernels are
// even-symmetric, so this equals the time-domain convolution form.
template <class S>
inline Matrix<S> sinc_convolve(const std::vector<S>& wave,
                               const std::vector<FilterKernel<S>>& kernels, int stride) {
  const int n = int(wave.size());
  const int len = kernels.empty() ? 0 : kernels[0].length();
  if (n < len) throw InputError("waveform shorter than the sinc kernel");
  const int out_len = (n - len) / stride + 1;
  Matrix<S> out(int(kernels.size()), out_len);
  for (int i = 0; i < int(kernels.size()); ++i) {
    const S* taps = kernels[i].taps.data();
    S* row = out.row(i);
    for (int p = 0; p < out_len; ++p) {
      const S* x = wave.data() + std::size_t(p) * stride;
      S acc = S(0);
      for (int u = 0; u < len; ++u) acc += x[u] * taps[u];
      row[p] = acc;
    }
  }
  return out;
}

// Full front-end forward pass; returns frame-major features (T x D).
template <class S>
inline Matrix<S> sinc_forward(const Waveform& wave, const SincFrontend<S>& fe,
                              SincFrontendCache<S>* cache) {
  fe.cfg.validate();
  SincFrontendCache<S> local;
  SincFrontendCache<S>& c = cache ? *cache : local;

  c.wave.resize(wave.samples.size());
  for (std::size_t i = 0; i < wave.samples.size(); ++i) c.wave[i] = S(wave.samples[i]);
  if (wave.sample_rate_hz != fe.filterbank.sample_rate_hz)
    throw InputError("waveform sample rate does not match the filterbank");

  c.kernels = materialize_filters(fe.filterbank, &c.records);
  c.conv_out = sinc_convolve(c.wave, c.kernels, fe.cfg.sinc_stride);

  c.abs_out = Matrix<S>(c.conv_out.rows, c.conv_out.cols);
  for (std::size_t i = 0; i < c.conv_out.size(); ++i)
    c.abs_out.data[i] = std::abs(c.conv_out.data[i]);

  c.pooled = max_pool1d(c.abs_out, fe.cfg.sinc_pool_factor, &c.sinc_pool);

  c.affined = Matrix<S>(c.pooled.rows, c.pooled.cols);
  const S offset = S(fe.cfg.log_offset);
  for (int ch = 0; ch < c.pooled.rows; ++ch)
    for (int t = 0; t < c.pooled.cols; ++t)
      c.affined(ch, t) =
          fe.affine_gain[ch] * std::log(c.pooled(ch, t) + offset) + fe.affine_bias[ch];

  Matrix<S> current = c.affined;
  c.layer_inputs.clear();
  c.layer_act.clear();
  c.layer_pools.clear();
  for (std::size_t layer = 0; layer < fe.conv_weights.size(); ++layer) {
    c.layer_inputs.push_back(current);
    Matrix<S> pre = conv1d_same(current, fe.conv_weights[layer], fe.conv_biases[layer],
                                fe.cfg.conv_kernel_sizes[layer]);
    for (S& x : pre.data) x = apply_nonlinearity(fe.cfg.nonlinearity, x);
    c.layer_act.push_back(pre);
    c.layer_pools.emplace_back();
    current = fe.cfg.conv_pool_factors[layer] > 1
                  ? max_pool1d(pre, fe.cfg.conv_pool_factors[layer], &c.layer_pools.back())
                  : pre;
  }
  c.final_channels = current;

  Matrix<S> features(current.cols, current.rows);
  for (int ch = 0; ch < current.rows; ++ch)
    for (int t = 0; t < current.cols; ++t) features(t, ch) = current(ch, t);
  return features;
}

// Accumulates gradients for every front-end parameter given d loss /
// d features. The waveform itself is input data and gets no gradient.
template <class S>
inline void sinc_backward(const SincFrontend<S>& fe, const SincFrontendCache<S>& c,
                          const Matrix<S>& dfeatures, SincFrontend<S>* grads) {
  if (dfeatures.rows != c.final_channels.cols || dfeatures.cols != c.final_channels.rows)
    throw ContractError("sinc_backward: upstream gradient shape mismatch");

  Matrix<S> dcur(c.final_channels.rows, c.final_channels.cols, S(0));
  for (int ch = 0; ch < dcur.rows; ++ch)
    for (int t = 0; t < dcur.cols; ++t) dcur(ch, t) = dfeatures(t, ch);

  for (int layer = int(fe.conv_weights.size()) - 1; layer >= 0; --layer) {
    if (fe.cfg.conv_pool_factors[layer] > 1) {
      Matrix<S> dact(c.layer_act[layer].rows, c.layer_act[layer].cols, S(0));
      max_pool1d_backward(c.layer_pools[layer], dcur, &dact);
      dcur = std::move(dact);
    }
    for (std::size_t i = 0; i < dcur.size(); ++i)
      dcur.data[i] *= nonlinearity_grad_from_output(fe.cfg.nonlinearity, c.layer_act[layer].data[i]);
    Matrix<S> dinput(c.layer_inputs[layer].rows, c.layer_inputs[layer].cols, S(0));
    conv1d_same_backward(c.layer_inputs[layer], fe.conv_weights[layer],
                         fe.cfg.conv_kernel_sizes[layer], dcur, &dinput,
                         &grads->conv_weights[layer], &grads->conv_biases[layer]);
    dcur = std::move(dinput);
  }

  // affine + log + pool + abs
  Matrix<S> dpooled(c.pooled.rows, c.pooled.cols, S(0));
  const S offset = S(fe.cfg.log_offset);
  for (int ch = 0; ch < c.pooled.rows; ++ch) {
    for (int t = 0; t < c.pooled.cols; ++t) {
      const S logged = std::log(c.pooled(ch, t) + offset);
      grads->affine_gain[ch] += dcur(ch, t) * logged;
      grads->affine_bias[ch] += dcur(ch, t);
      dpooled(ch, t) = dcur(ch, t) * fe.affine_gain[ch] / (c.pooled(ch, t) + offset);
    }
  }

  Matrix<S> dabs(c.abs_out.rows, c.abs_out.cols, S(0));
  max_pool1d_backward(c.sinc_pool, dpooled, &dabs);

  Matrix<S> dconv(c.conv_out.rows, c.conv_out.cols, S(0));
  for (std::size_t i = 0; i < dconv.size(); ++i) {
    const S x = c.conv_out.data[i];
    dconv.data[i] = dabs.data[i] * (x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)));
  }

  // d loss / d kernel taps, then through the kernel materialization.
  const int len = fe.filterbank.kernel_length;
  const int stride = fe.cfg.sinc_stride;
  std::vector<S> dkernel(len);
  for (int i = 0; i < dconv.rows; ++i) {
    std::fill(dkernel.begin(), dkernel.end(), S(0));
    const S* drow = dconv.row(i);
    for (int p = 0; p < dconv.cols; ++p) {
      const S g = drow[p];
      if (g == S(0)) continue;
      const S* x = c.wave.data() + std::size_t(p) * stride;
      for (int u = 0; u < len; ++u) dkernel[u] += g * x[u];
    }
    sinc_kernel_backward(c.records[i], dkernel.data(), len, fe.filterbank.sample_rate_hz,
                         &grads->filterbank.theta_low[i], &grads->filterbank.theta_band[i]);
  }
}

}  // namespace mddkit
