#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pfw/core.hpp"
#include "pfw/sampling.hpp"

using namespace pfw;

TEST_CASE("radius schedule endpoints, midpoint, clamp") {
  const double r_min = 1e-6, r_max = 1e-4;
  CHECK(r_max_schedule(0, 20000, r_min, r_max) == r_max);
  CHECK(r_max_schedule(20000, 20000, r_min, r_max) == Catch::Approx(r_min).margin(1e-18));
  CHECK(r_max_schedule(10000, 20000, r_min, r_max) ==
        Catch::Approx(0.5 * (r_min + r_max)).margin(1e-15));
  CHECK(r_max_schedule(50000, 20000, r_min, r_max) == r_min);
  CHECK_THROWS_AS(r_max_schedule(-1, 20000, r_min, r_max), ConfigError);
  CHECK_THROWS_AS(r_max_schedule(0, 0, r_min, r_max), ConfigError);
  CHECK_THROWS_AS(r_max_schedule(0, 100, 0.0, r_max), ConfigError);
  CHECK_THROWS_AS(r_max_schedule(0, 100, r_max, r_min), ConfigError);
}

TEST_CASE("Latin hypercube sampling stratifies each axis") {
  Domain d;
  d.dim = 2;
  d.lo = {-1.0, 2.0};
  d.hi = {1.0, 5.0};
  const int n = 64;
  Rng rng(11);
  auto pts = sample_lhs_points(rng, n, d);
  REQUIRE(pts.size() == static_cast<std::size_t>(n));
  for (int a = 0; a < 2; ++a) {
    std::vector<int> hits(n, 0);
    for (const auto& p : pts) {
      CHECK(p[a] >= d.lo[a]);
      CHECK(p[a] < d.hi[a]);
      double u = (p[a] - d.lo[a]) / d.extent(a);
      int stratum = std::min(n - 1, static_cast<int>(u * n));
      hits[static_cast<std::size_t>(stratum)]++;
    }
    // Exactly one sample per stratum per axis.
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  }
}

TEST_CASE("LHS sampling is deterministic in the seed") {
  Domain d;
  d.dim = 1;
  Rng a(5), b(5), c(6);
  auto pa = sample_lhs_points(a, 32, d);
  auto pb = sample_lhs_points(b, 32, d);
  auto pc = sample_lhs_points(c, 32, d);
  CHECK(pa == pb);
  CHECK(pa != pc);
}

TEST_CASE("particles stay inside the domain with their whole support") {
  Domain d;
  d.dim = 2;
  d.lo = {-1.0, -1.0};
  d.hi = {1.0, 1.0};
  Rng rng(17);
  const double r_min = 1e-4, r_max = 1e-2;
  auto particles = sample_particles(rng, 200, d, r_min, r_max);
  REQUIRE(particles.size() == 200);
  for (const auto& p : particles) {
    CHECK(p.radius >= r_min);
    CHECK(p.radius <= r_max);
    for (int a = 0; a < 2; ++a) {
      CHECK(p.center[a] - p.radius >= d.lo[a]);
      CHECK(p.center[a] + p.radius <= d.hi[a]);
    }
  }
  CHECK_THROWS_AS(sample_particles(rng, 10, d, 0.5, 1.0), ConfigError);
  CHECK_THROWS_AS(sample_particles(rng, 10, d, -1.0, 0.01), ConfigError);
}

TEST_CASE("unit ball samples have norm strictly below one") {
  for (int dim : {1, 2}) {
    Rng rng(23);
    auto pts = sample_unit_ball(rng, 5000, dim);
    double mean0 = 0.0;
    for (const auto& s : pts) {
      double rr = 0.0;
      for (int a = 0; a < dim; ++a) rr += s[a] * s[a];
      CHECK(rr < 1.0);
      mean0 += s[0];
    }
    CHECK(std::fabs(mean0 / 5000.0) < 0.03);
    if (dim == 1) {
      for (const auto& s : pts) CHECK(s[1] == 0.0);
    }
  }
  Rng rng(1);
  CHECK_THROWS_AS(sample_unit_ball(rng, 0, 1), ConfigError);
  CHECK_THROWS_AS(sample_unit_ball(rng, 5, 3), ConfigError);
}

TEST_CASE("time grid is inclusive and uniform") {
  auto t = time_grid(0.2, 1.0, 5);
  REQUIRE(t.size() == 5);
  CHECK(t.front() == 0.2);
  CHECK(t.back() == 1.0);
  for (int k = 1; k < 5; ++k)
    CHECK(t[static_cast<std::size_t>(k)] - t[static_cast<std::size_t>(k - 1)] ==
          Catch::Approx(0.2).margin(1e-15));
  CHECK_THROWS_AS(time_grid(0.0, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(time_grid(1.0, 1.0, 3), ConfigError);
}
