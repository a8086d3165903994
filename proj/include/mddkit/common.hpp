// Shared error types and log-domain numerics.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mddkit {

// Bad configuration values (invalid kernel length, fractions not summing to 1, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unusable input data (too-short waveform, unknown phone, empty sequence, ...).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents (WAV header, TSV layout, checkpoint container).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse between modules (shape mismatches, blank fed to the decoder, ...).
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Log-domain "zero". A large negative sentinel rather than -inf so that
// arithmetic on unreachable trellis cells stays finite.
inline constexpr double kLogZero = -1e30;

template <class S>
inline bool is_log_zero(S x) {
  return x <= S(kLogZero) / 2;
}

template <class S>
inline S log_sum_exp(S a, S b) {
  if (is_log_zero(a)) return b;
  if (is_log_zero(b)) return a;
  S hi = std::max(a, b);
  S lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

template <class S>
inline S log_sum_exp(S a, S b, S c) {
  return log_sum_exp(log_sum_exp(a, b), c);
}

inline constexpr double kPi = 3.14159265358979323846;

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream iss(s);
  std::vector<std::string> out;
  for (std::string tok; iss >> tok;) out.push_back(tok);
  return out;
}

}  // namespace mddkit
