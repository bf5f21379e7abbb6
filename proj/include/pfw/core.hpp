#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace pfw {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Base class for all library errors; subclasses select the CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration / arguments (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: blow-up, non-finite loss or gradient (CLI exit code 3).
class NumericsError : public Error {
 public:
  using Error::Error;
};

/// File-format or filesystem failure (CLI exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A requested mode needs engine capabilities that are not configured.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Spatial dimension supported throughout the library.
inline constexpr int kMaxDim = 2;

/// A point in space-time; x[1] is ignored for one-dimensional problems.
struct Point {
  double t = 0.0;
  std::array<double, kMaxDim> x = {0.0, 0.0};
};

/// Axis-aligned periodic box.
struct Domain {
  int dim = 1;
  std::array<double, kMaxDim> lo = {-1.0, -1.0};
  std::array<double, kMaxDim> hi = {1.0, 1.0};

  double extent(int axis) const { return hi[axis] - lo[axis]; }

  void validate() const {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("domain dimension must be 1 or 2");
    for (int a = 0; a < dim; ++a) {
      if (!(hi[a] > lo[a])) throw ConfigError("domain upper bound must exceed lower bound");
    }
  }
};

/// Volume of the unit ball: 2 on the line, pi in the plane.
inline double unit_ball_volume(int dim) {
  if (dim == 1) return 2.0;
  if (dim == 2) return kPi;
  throw ConfigError("unit ball volume defined for dimensions 1 and 2 only");
}

/// SplitMix64 step; used to derive independent seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministically combines a master seed with stream labels so that
/// every consumer (sampling, init, noise, ...) gets an independent stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s ^= stream * 0x9e3779b97f4a7c15ULL;
  std::uint64_t b = splitmix64(s);
  s ^= index * 0xda942042e4dd58b5ULL;
  std::uint64_t c = splitmix64(s);
  return a ^ (b << 1) ^ c;
}

/// Deterministic random source. Wraps mt19937_64 but performs all variate
/// transformations itself so that streams are identical across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform01() * static_cast<double>(n)) % n;
  }

  /// Standard normal via Box-Muller; caches the paired variate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * kPi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Named RNG streams hanging off one master seed.
namespace stream {
inline constexpr std::uint64_t kNetworkInit = 1;
inline constexpr std::uint64_t kParticles = 2;
inline constexpr std::uint64_t kBallPoints = 3;
inline constexpr std::uint64_t kInitPoints = 4;
inline constexpr std::uint64_t kMeasurementNoise = 5;
inline constexpr std::uint64_t kGradCheck = 6;
inline constexpr std::uint64_t kStage = 7;
inline constexpr std::uint64_t kFit = 8;
}  // namespace stream

}  // namespace pfw
