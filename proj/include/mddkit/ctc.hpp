// CTC loss over blank-interleaved targets, computed as a log-domain
// forward-backward pass, plus a path-enumeration oracle, greedy decoding and
// the prefix scorer used in joint decoding. Class 0 is blank everywhere.
#pragma once

#include <cstdint>
#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/matrix.hpp"

namespace mddkit {

inline constexpr int kCtcBlank = 0;

template <class S>
struct CtcLossResult {
  S loss = S(0);                 // -log p(target | input); +inf-like when infeasible
  Matrix<S> grad_logits;         // d loss / d logits, assuming log_probs = log_softmax(logits)
  bool feasible = true;
  S log_total_forward = S(0);    // log p from the alpha termination
  S log_total_backward = S(0);   // log p from the beta initialization
};

namespace detail {

inline std::vector<int> extend_with_blanks(const std::vector<int>& target) {
  std::vector<int> ext(2 * target.size() + 1, kCtcBlank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  return ext;
}

template <class S>
inline void check_log_prob_rows(const Matrix<S>& log_probs) {
  for (int t = 0; t < log_probs.rows; ++t) {
    S total = S(kLogZero);
    for (int k = 0; k < log_probs.cols; ++k) total = log_sum_exp(total, log_probs(t, k));
    if (std::abs(double(total)) > 1e-3)
      throw ContractError("log-prob frame " + std::to_string(t) + " is not normalized");
  }
}

inline void check_target(const std::vector<int>& target, int num_classes) {
  for (int y : target)
    if (y <= 0 || y >= num_classes)
      throw ContractError("ctc target symbol " + std::to_string(y) + " out of range");
}

}  // namespace detail

// Forward-backward CTC. An infeasible target (T too short for the required
// alignment) yields loss = -kLogZero with zero gradients and feasible=false
// rather than an error, so a training batch can skip it and continue.
template <class S>
inline CtcLossResult<S> ctc_loss(const Matrix<S>& log_probs, const std::vector<int>& target) {
  if (log_probs.rows < 1) throw InputError("ctc_loss: empty input");
  detail::check_log_prob_rows(log_probs);
  detail::check_target(target, log_probs.cols);

  const int T = log_probs.rows;
  const std::vector<int> ext = detail::extend_with_blanks(target);
  const int R = int(ext.size());

  CtcLossResult<S> result;
  result.grad_logits = Matrix<S>(T, log_probs.cols, S(0));

  Matrix<S> alpha(T, R, S(kLogZero));
  Matrix<S> beta(T, R, S(kLogZero));

  alpha(0, 0) = log_probs(0, ext[0]);
  if (R > 1) alpha(0, 1) = log_probs(0, ext[1]);
  for (int t = 1; t < T; ++t) {
    for (int r = 0; r < R; ++r) {
      S acc = alpha(t - 1, r);
      if (r >= 1) acc = log_sum_exp(acc, alpha(t - 1, r - 1));
      if (r >= 2 && ext[r] != kCtcBlank && ext[r] != ext[r - 2])
        acc = log_sum_exp(acc, alpha(t - 1, r - 2));
      alpha(t, r) = is_log_zero(acc) ? S(kLogZero) : acc + log_probs(t, ext[r]);
    }
  }

  beta(T - 1, R - 1) = log_probs(T - 1, ext[R - 1]);
  if (R > 1) beta(T - 1, R - 2) = log_probs(T - 1, ext[R - 2]);
  for (int t = T - 2; t >= 0; --t) {
    for (int r = 0; r < R; ++r) {
      S acc = beta(t + 1, r);
      if (r + 1 < R) acc = log_sum_exp(acc, beta(t + 1, r + 1));
      if (r + 2 < R && ext[r + 2] != kCtcBlank && ext[r + 2] != ext[r])
        acc = log_sum_exp(acc, beta(t + 1, r + 2));
      beta(t, r) = is_log_zero(acc) ? S(kLogZero) : acc + log_probs(t, ext[r]);
    }
  }

  S log_p = log_sum_exp(alpha(T - 1, R - 1), R > 1 ? alpha(T - 1, R - 2) : S(kLogZero));
  S log_p_beta = log_sum_exp(beta(0, 0), R > 1 ? beta(0, 1) : S(kLogZero));
  result.log_total_forward = log_p;
  result.log_total_backward = log_p_beta;

  if (is_log_zero(log_p)) {
    result.loss = S(-kLogZero);
    result.feasible = false;
    return result;  // zero gradients
  }
  result.loss = -log_p;

  // grad wrt logits: softmax(t,k) - sum_{r: ext[r]=k} alpha*beta / (p_t(k) * p(y|X))
  for (int t = 0; t < T; ++t) {
    std::vector<S> occupancy(log_probs.cols, S(kLogZero));
    for (int r = 0; r < R; ++r) {
      if (is_log_zero(alpha(t, r)) || is_log_zero(beta(t, r))) continue;
      const S term = alpha(t, r) + beta(t, r) - log_probs(t, ext[r]);
      occupancy[ext[r]] = log_sum_exp(occupancy[ext[r]], term);
    }
    for (int k = 0; k < log_probs.cols; ++k) {
      const S posterior = std::exp(log_probs(t, k));
      const S gamma = is_log_zero(occupancy[k]) ? S(0) : std::exp(occupancy[k] - log_p);
      result.grad_logits(t, k) = posterior - gamma;
    }
  }
  return result;
}

// Enumerates every frame-label path, collapses repeats, removes blanks, and
// sums the probability of paths collapsing to the target. Oracle only;
// refuses instances beyond T <= 8, |U| <= 4.
template <class S>
inline S ctc_brute_force(const Matrix<S>& log_probs, const std::vector<int>& target) {
  const int T = log_probs.rows;
  const int classes = log_probs.cols;
  if (T > 8 || classes > 5)
    throw ContractError("ctc_brute_force limited to T <= 8 and |U| <= 4");
  detail::check_target(target, classes);

  double total = 0.0;
  std::vector<int> path(T, 0);
  std::uint64_t count = 1;
  for (int t = 0; t < T; ++t) count *= std::uint64_t(classes);
  for (std::uint64_t idx = 0; idx < count; ++idx) {
    std::uint64_t v = idx;
    for (int t = 0; t < T; ++t) {
      path[t] = int(v % classes);
      v /= classes;
    }
    std::vector<int> collapsed;
    int prev = -1;
    for (int t = 0; t < T; ++t) {
      if (path[t] != prev && path[t] != kCtcBlank) collapsed.push_back(path[t]);
      prev = path[t];
    }
    if (collapsed != target) continue;
    double lp = 0.0;
    for (int t = 0; t < T; ++t) lp += double(log_probs(t, path[t]));
    total += std::exp(lp);
  }
  return total > 0.0 ? S(-std::log(total)) : S(-kLogZero);
}

// Per-frame argmax, collapse consecutive repeats, drop blanks. Ties pick the
// lowest class index.
template <class S>
inline std::vector<int> ctc_greedy_decode(const Matrix<S>& log_probs) {
  std::vector<int> out;
  int prev = -1;
  for (int t = 0; t < log_probs.rows; ++t) {
    int best = 0;
    for (int k = 1; k < log_probs.cols; ++k)
      if (log_probs(t, k) > log_probs(t, best)) best = k;
    if (best != prev && best != kCtcBlank) out.push_back(best);
    prev = best;
  }
  return out;
}

// Incremental CTC prefix probabilities: log mass of all complete paths whose
// collapsed labeling extends a given prefix. Used by the joint beam search.
//
// State per prefix g: gamma_n[t] / gamma_b[t] = log prob that frames 0..t
// emit exactly g with the path ending in g's last label / in blank.
template <class S>
class CtcPrefixScorer {
 public:
  struct State {
    std::vector<S> gamma_n;  // length T
    std::vector<S> gamma_b;
    int last_symbol = -1;    // -1 for the empty prefix
    S prefix_log_prob = S(0);
  };

  explicit CtcPrefixScorer(const Matrix<S>& log_probs) : lp_(log_probs) {
    if (lp_.rows < 1) throw InputError("ctc prefix scorer: empty input");
  }

  State initial_state() const {
    State s;
    const int T = lp_.rows;
    s.gamma_n.assign(T, S(kLogZero));
    s.gamma_b.resize(T);
    S run = S(0);
    for (int t = 0; t < T; ++t) {
      run += lp_(t, kCtcBlank);
      s.gamma_b[t] = run;
    }
    s.prefix_log_prob = S(0);  // every path extends the empty prefix
    return s;
  }

  // Extends g by symbol c, returning the new state; the new state's
  // prefix_log_prob is log p(all sequences extending g.c).
  State extend(const State& g, int c) const {
    if (c <= kCtcBlank || c >= lp_.cols) throw ContractError("ctc prefix: bad symbol");
    const int T = lp_.rows;
    State h;
    h.last_symbol = c;
    h.gamma_n.assign(T, S(kLogZero));
    h.gamma_b.assign(T, S(kLogZero));

    S mass = S(kLogZero);
    for (int t = 0; t < T; ++t) {
      // phi_{t-1}: prob of having emitted exactly g by t-1 in a way that can
      // newly emit c at t (after a blank, or after a different label).
      S phi;
      if (t == 0) {
        phi = g.last_symbol == -1 ? S(0) : S(kLogZero);
      } else {
        phi = g.gamma_b[t - 1];
        if (g.last_symbol != c) phi = log_sum_exp(phi, g.gamma_n[t - 1]);
      }
      const S emit_new = is_log_zero(phi) ? S(kLogZero) : phi + lp_(t, c);
      mass = log_sum_exp(mass, emit_new);

      const S repeat = t > 0 && !is_log_zero(h.gamma_n[t - 1])
                           ? h.gamma_n[t - 1] + lp_(t, c)
                           : S(kLogZero);
      h.gamma_n[t] = log_sum_exp(repeat, emit_new);

      if (t > 0) {
        const S stay = log_sum_exp(h.gamma_b[t - 1], h.gamma_n[t - 1]);
        h.gamma_b[t] = is_log_zero(stay) ? S(kLogZero) : stay + lp_(t, kCtcBlank);
      }
    }
    h.prefix_log_prob = mass;
    return h;
  }

  // log p of the prefix as a *complete* labeling (used when eos closes a
  // hypothesis).
  S complete_log_prob(const State& g) const {
    const int T = lp_.rows;
    return log_sum_exp(g.gamma_n[T - 1], g.gamma_b[T - 1]);
  }

 private:
  const Matrix<S>& lp_;
};

// log p(all label sequences extending prefix); 0 for the empty prefix.
template <class S>
inline S ctc_prefix_logprob(const Matrix<S>& log_probs, const std::vector<int>& prefix) {
  CtcPrefixScorer<S> scorer(log_probs);
  auto state = scorer.initial_state();
  for (int c : prefix) state = scorer.extend(state, c);
  return state.prefix_log_prob;
}

}  // namespace mddkit
