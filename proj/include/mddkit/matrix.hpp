// Minimal dense row-major matrix. Deliberately small: the models here are
// desk-scale and every hot loop is written out explicitly anyway.
#pragma once

#include <cstddef>
#include <vector>

#include "mddkit/common.hpp"

namespace mddkit {

template <class S>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<S> data;

  Matrix() = default;
  Matrix(int r, int c, S fill = S(0)) : rows(r), cols(c), data(std::size_t(r) * c, fill) {}

  S& operator()(int r, int c) { return data[std::size_t(r) * cols + c]; }
  const S& operator()(int r, int c) const { return data[std::size_t(r) * cols + c]; }

  S* row(int r) { return data.data() + std::size_t(r) * cols; }
  const S* row(int r) const { return data.data() + std::size_t(r) * cols; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// y += W * x  (W: out x in)
template <class S>
inline void matvec_acc(const Matrix<S>& w, const S* x, S* y) {
  for (int r = 0; r < w.rows; ++r) {
    const S* wr = w.row(r);
    S acc = S(0);
    for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] += acc;
  }
}

// x_grad += W^T * dy
template <class S>
inline void matvec_t_acc(const Matrix<S>& w, const S* dy, S* x_grad) {
  for (int r = 0; r < w.rows; ++r) {
    const S* wr = w.row(r);
    const S g = dy[r];
    for (int c = 0; c < w.cols; ++c) x_grad[c] += wr[c] * g;
  }
}

// W_grad += dy * x^T
template <class S>
inline void outer_acc(Matrix<S>& w_grad, const S* dy, const S* x) {
  for (int r = 0; r < w_grad.rows; ++r) {
    S* wr = w_grad.row(r);
    const S g = dy[r];
    for (int c = 0; c < w_grad.cols; ++c) wr[c] += g * x[c];
  }
}

}  // namespace mddkit
