// Hand-rolled layer primitives with explicit backward passes. Every forward
// keeps whatever the matching backward needs; nothing here allocates global
// state, so concurrent evaluation on shared parameters is safe.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/matrix.hpp"
#include "mddkit/rng.hpp"

namespace mddkit {

enum class Nonlinearity { Tanh, Relu };

template <class S>
inline S apply_nonlinearity(Nonlinearity nl, S x) {
  return nl == Nonlinearity::Tanh ? std::tanh(x) : (x > S(0) ? x : S(0));
}

// Derivative expressed through the activation output.
template <class S>
inline S nonlinearity_grad_from_output(Nonlinearity nl, S y) {
  return nl == Nonlinearity::Tanh ? S(1) - y * y : (y > S(0) ? S(1) : S(0));
}

template <class S>
inline void softmax_inplace(std::vector<S>& v) {
  S m = v[0];
  for (S x : v) m = std::max(m, x);
  S total = S(0);
  for (S& x : v) {
    x = std::exp(x - m);
    total += x;
  }
  for (S& x : v) x /= total;
}

template <class S>
inline std::vector<S> log_softmax(const std::vector<S>& v) {
  S m = v[0];
  for (S x : v) m = std::max(m, x);
  S total = S(0);
  for (S x : v) total += std::exp(x - m);
  const S lse = m + std::log(total);
  std::vector<S> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  return out;
}

// d loss/d scores given d loss/d probs, where probs = softmax(scores).
template <class S>
inline std::vector<S> softmax_backward(const std::vector<S>& probs, const std::vector<S>& dprobs) {
  S dot = S(0);
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * dprobs[i];
  std::vector<S> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * (dprobs[i] - dot);
  return out;
}

// --- 1-D convolution over channel-major maps (channels x time) ------------

// Same-padding correlation: out[o][t] = b[o] + sum_{c,k} w[o](c,k) in[c][t+k-K/2].
// Weights are stored as one matrix per output channel row: w has shape
// (out_channels, in_channels * kernel).
template <class S>
inline Matrix<S> conv1d_same(const Matrix<S>& input, const Matrix<S>& weights,
                             const std::vector<S>& bias, int kernel) {
  const int in_ch = input.rows;
  const int time = input.cols;
  const int out_ch = weights.rows;
  if (weights.cols != in_ch * kernel) throw ContractError("conv1d_same: weight shape mismatch");
  const int offset = kernel / 2;

  Matrix<S> out(out_ch, time, S(0));
  for (int o = 0; o < out_ch; ++o) {
    const S* wrow = weights.row(o);
    for (int c = 0; c < in_ch; ++c) {
      const S* in_row = input.row(c);
      const S* wk = wrow + c * kernel;
      S* out_row = out.row(o);
      for (int t = 0; t < time; ++t) {
        S acc = S(0);
        const int k_lo = std::max(0, offset - t);
        const int k_hi = std::min(kernel, time + offset - t);
        for (int k = k_lo; k < k_hi; ++k) acc += wk[k] * in_row[t + k - offset];
        out_row[t] += acc;
      }
    }
    if (!bias.empty()) {
      S* out_row = out.row(o);
      for (int t = 0; t < time; ++t) out_row[t] += bias[o];
    }
  }
  return out;
}

template <class S>
inline void conv1d_same_backward(const Matrix<S>& input, const Matrix<S>& weights, int kernel,
                                 const Matrix<S>& dout, Matrix<S>* dinput, Matrix<S>* dweights,
                                 std::vector<S>* dbias) {
  const int in_ch = input.rows;
  const int time = input.cols;
  const int out_ch = weights.rows;
  const int offset = kernel / 2;

  for (int o = 0; o < out_ch; ++o) {
    const S* drow = dout.row(o);
    if (dbias) {
      S acc = S(0);
      for (int t = 0; t < time; ++t) acc += drow[t];
      (*dbias)[o] += acc;
    }
    for (int c = 0; c < in_ch; ++c) {
      const S* in_row = input.row(c);
      const S* wk = weights.row(o) + c * kernel;
      S* dwk = dweights ? dweights->row(o) + c * kernel : nullptr;
      S* din_row = dinput ? dinput->row(c) : nullptr;
      for (int t = 0; t < time; ++t) {
        const S g = drow[t];
        if (g == S(0)) continue;
        const int k_lo = std::max(0, offset - t);
        const int k_hi = std::min(kernel, time + offset - t);
        for (int k = k_lo; k < k_hi; ++k) {
          const int u = t + k - offset;
          if (dwk) dwk[k] += g * in_row[u];
          if (din_row) din_row[u] += g * wk[k];
        }
      }
    }
  }
}

// Non-overlapping max pooling along time; floor(time/factor) windows, the
// tail remainder is dropped. Ties route the gradient to the first maximum.
template <class S>
struct MaxPoolCache {
  Matrix<int> argmax;
};

template <class S>
inline Matrix<S> max_pool1d(const Matrix<S>& input, int factor, MaxPoolCache<S>* cache) {
  if (factor < 1) throw ConfigError("pooling factor must be >= 1");
  const int out_time = input.cols / factor;
  if (out_time < 1) throw InputError("max_pool1d: input shorter than one pooling window");
  Matrix<S> out(input.rows, out_time);
  if (cache) cache->argmax = Matrix<int>(input.rows, out_time, 0);
  for (int c = 0; c < input.rows; ++c) {
    const S* in_row = input.row(c);
    for (int f = 0; f < out_time; ++f) {
      int best = f * factor;
      for (int j = 1; j < factor; ++j)
        if (in_row[f * factor + j] > in_row[best]) best = f * factor + j;
      out(c, f) = in_row[best];
      if (cache) cache->argmax(c, f) = best;
    }
  }
  return out;
}

template <class S>
inline void max_pool1d_backward(const MaxPoolCache<S>& cache, const Matrix<S>& dout,
                                Matrix<S>* dinput) {
  for (int c = 0; c < dout.rows; ++c)
    for (int f = 0; f < dout.cols; ++f) (*dinput)(c, cache.argmax(c, f)) += dout(c, f);
}

// --- parameter registry ----------------------------------------------------

// Flat view over every learnable array of a model, in one fixed order. The
// same enumeration drives initialization, SGD updates, serialization and the
// finite-difference checker, so the order is part of the reproducibility
// contract.
template <class S>
struct ParamView {
  std::string name;
  S* values = nullptr;
  S* grads = nullptr;  // may be null when no gradient buffer is attached
  std::vector<int> dims;
  std::size_t size = 0;
};

template <class S>
class ParamRegistry {
 public:
  void add(const std::string& name, std::vector<S>* v, std::vector<S>* g) {
    views_.push_back({name, v->data(), g ? g->data() : nullptr, {int(v->size())}, v->size()});
  }
  void add(const std::string& name, Matrix<S>* m, Matrix<S>* g) {
    views_.push_back({name, m->data.data(), g ? g->data.data() : nullptr,
                      {m->rows, m->cols}, m->data.size()});
  }

  const std::vector<ParamView<S>>& views() const { return views_; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& v : views_) n += v.size;
    return n;
  }

  void init_uniform(Rng& rng, double lo, double hi) {
    for (auto& v : views_)
      for (std::size_t i = 0; i < v.size; ++i) v.values[i] = S(rng.uniform(lo, hi));
  }

  void zero_grads() {
    for (auto& v : views_)
      if (v.grads)
        for (std::size_t i = 0; i < v.size; ++i) v.grads[i] = S(0);
  }

  std::vector<S> flatten_values() const {
    std::vector<S> out;
    out.reserve(total_size());
    for (const auto& v : views_) out.insert(out.end(), v.values, v.values + v.size);
    return out;
  }

  std::vector<S> flatten_grads() const {
    std::vector<S> out;
    out.reserve(total_size());
    for (const auto& v : views_) {
      if (!v.grads) throw ContractError("registry view '" + v.name + "' has no gradient buffer");
      out.insert(out.end(), v.grads, v.grads + v.size);
    }
    return out;
  }

  void assign_values(const std::vector<S>& flat) {
    if (flat.size() != total_size()) throw ContractError("flat parameter size mismatch");
    std::size_t pos = 0;
    for (auto& v : views_) {
      std::copy(flat.begin() + pos, flat.begin() + pos + v.size, v.values);
      pos += v.size;
    }
  }

 private:
  std::vector<ParamView<S>> views_;
};

}  // namespace mddkit
