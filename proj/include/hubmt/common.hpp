#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hubmt {

#ifdef HUBMT_REAL32
using real = float;
#else
using real = double;
#endif

// Error taxonomy maps onto the CLI exit codes: config 2, data 3,
// format/integrity 4. Contract violations are programming errors and
// carry no stable exit code.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Shape mismatches in tensor math. A kind of contract violation, but kept
// separate so messages can name both shapes.
class DimensionError : public ContractError {
 public:
  explicit DimensionError(const std::string& msg) : ContractError(msg) {}
};

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Deterministic RNG. Distributions are hand-rolled so that a seed pins the
// exact sample sequence independent of the standard library build.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  real uniform() {
    return static_cast<real>(next_u64() >> 11) *
           static_cast<real>(1.0 / 9007199254740992.0);  // 2^-53
  }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    if (n == 0) return 0;
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Standard normal via Box-Muller.
  real normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    real u1 = uniform();
    real u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    real r = std::sqrt(real(-2) * std::log(u1));
    real theta = real(2) * real(3.14159265358979323846) * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  real spare_ = 0;
};

// FNV-1a over raw bytes; used for parameter freeze checks and determinism
// assertions in tests.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::vector<real>& v, uint64_t h = 1469598103934665603ull) {
  return v.empty() ? h : fnv1a64(v.data(), v.size() * sizeof(real), h);
}

}  // namespace hubmt
