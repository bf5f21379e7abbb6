#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "pfw/core.hpp"
#include "pfw/wendland.hpp"

namespace pfw {

/// Linear descent of the radius-range upper end over a training run:
/// starts at r_max_initial, reaches r_min at `total_iterations`, and clamps
/// there for any later iteration.
inline double r_max_schedule(long iteration, long total_iterations, double r_min,
                             double r_max_initial) {
  if (r_min <= 0.0 || r_max_initial < r_min)
    throw ConfigError("radius schedule requires 0 < r_min <= r_max_initial");
  if (total_iterations <= 0) throw ConfigError("radius schedule requires a positive horizon");
  if (iteration < 0) throw ConfigError("radius schedule: negative iteration");
  double frac = static_cast<double>(iteration) / static_cast<double>(total_iterations);
  if (frac > 1.0) frac = 1.0;
  double value = r_max_initial + (r_min - r_max_initial) * frac;
  return value < r_min ? r_min : value;
}

namespace detail {

/// Fisher-Yates shuffle of 0..n-1 driven by our own Rng so the permutation
/// stream is identical across standard libraries.
inline std::vector<int> random_permutation(Rng& rng, int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(p[i], p[j]);
  }
  return p;
}

/// Latin-hypercube latents: per axis, one sample in each of the n strata,
/// stratum order randomly permuted.
inline std::vector<std::array<double, kMaxDim>> lhs_latents(Rng& rng, int n, int dim) {
  std::vector<std::array<double, kMaxDim>> u(static_cast<std::size_t>(n), {0.0, 0.0});
  for (int a = 0; a < dim; ++a) {
    std::vector<int> perm = random_permutation(rng, n);
    for (int i = 0; i < n; ++i) {
      u[static_cast<std::size_t>(i)][a] =
          (static_cast<double>(perm[static_cast<std::size_t>(i)]) + rng.uniform01()) /
          static_cast<double>(n);
    }
  }
  return u;
}

}  // namespace detail

/// Latin-hypercube sample of n points over the whole domain.
inline std::vector<std::array<double, kMaxDim>> sample_lhs_points(Rng& rng, int n,
                                                                  const Domain& domain) {
  if (n <= 0) throw ConfigError("sample_lhs_points: n must be positive");
  domain.validate();
  auto latents = detail::lhs_latents(rng, n, domain.dim);
  std::vector<std::array<double, kMaxDim>> pts(static_cast<std::size_t>(n), {0.0, 0.0});
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < domain.dim; ++a) {
      pts[static_cast<std::size_t>(i)][a] =
          domain.lo[a] + latents[static_cast<std::size_t>(i)][a] * domain.extent(a);
    }
  }
  return pts;
}

/// Draws n particles: radii uniform on [r_min, r_max], then Latin-hypercube
/// centres restricted per particle to the box at distance >= radius from the
/// domain boundary, so every support ball stays inside the domain.
inline std::vector<Particle> sample_particles(Rng& rng, int n, const Domain& domain,
                                              double r_min, double r_max) {
  if (n <= 0) throw ConfigError("sample_particles: n must be positive");
  domain.validate();
  if (r_min <= 0.0 || r_max < r_min) throw ConfigError("sample_particles: need 0 < r_min <= r_max");
  for (int a = 0; a < domain.dim; ++a) {
    if (2.0 * r_max >= domain.extent(a))
      throw ConfigError("sample_particles: radius range too large for the domain");
  }
  std::vector<Particle> particles(static_cast<std::size_t>(n));
  for (auto& p : particles) p.radius = rng.uniform(r_min, r_max);
  auto latents = detail::lhs_latents(rng, n, domain.dim);
  for (int i = 0; i < n; ++i) {
    auto& p = particles[static_cast<std::size_t>(i)];
    for (int a = 0; a < domain.dim; ++a) {
      double lo = domain.lo[a] + p.radius;
      double hi = domain.hi[a] - p.radius;
      p.center[a] = lo + latents[static_cast<std::size_t>(i)][a] * (hi - lo);
    }
  }
  return particles;
}

/// Uniform samples from the open unit ball, by rejection from the bounding
/// cube; every returned point has norm strictly below 1.
inline std::vector<std::array<double, kMaxDim>> sample_unit_ball(Rng& rng, int n, int dim) {
  if (n <= 0) throw ConfigError("sample_unit_ball: n must be positive");
  if (dim < 1 || dim > kMaxDim) throw ConfigError("sample_unit_ball: dimension must be 1 or 2");
  std::vector<std::array<double, kMaxDim>> pts(static_cast<std::size_t>(n), {0.0, 0.0});
  for (auto& s : pts) {
    while (true) {
      double rr = 0.0;
      for (int a = 0; a < dim; ++a) {
        s[a] = rng.uniform(-1.0, 1.0);
        rr += s[a] * s[a];
      }
      if (rr < 1.0) break;
    }
  }
  return pts;
}

/// Uniform collocation instants t_begin = t_1 < ... < t_n = t_end.
inline std::vector<double> time_grid(double t_begin, double t_end, int n) {
  if (n < 2) throw ConfigError("time_grid: need at least two instants");
  if (!(t_end > t_begin)) throw ConfigError("time_grid: end must exceed begin");
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    double frac = static_cast<double>(k) / static_cast<double>(n - 1);
    t[static_cast<std::size_t>(k)] = t_begin + frac * (t_end - t_begin);
  }
  t.front() = t_begin;
  t.back() = t_end;
  return t;
}

}  // namespace pfw
