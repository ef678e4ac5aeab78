#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lfi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TooShortError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct CutoffError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientSamplesError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RankDeficientError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnboundedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteStateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TapeMissingError : std::logic_error {
  using std::logic_error::logic_error;
};

struct DtMismatchError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NonConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Configuration error carrying the offending field path (e.g. "data.grid").
struct ConfigError : std::invalid_argument {
  ConfigError(std::string field_path, const std::string& message)
      : std::invalid_argument(field_path + ": " + message), field(std::move(field_path)) {}
  std::string field;
};

/// Deterministic random stream. All sampling goes through explicit formulas
/// on top of a SplitMix64-seeded xoshiro-style core so that identical seeds
/// give bit-identical sequences on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // SplitMix64 warm-up decorrelates small consecutive seeds.
    next_u64();
  }

  /// Independent stream derived from (seed, stream index).
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    return Rng(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller; second value of each pair is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace lfi
