#pragma once

#include <array>
#include <cmath>

#include "pfw/core.hpp"

namespace pfw {

/// Compactly supported Wendland radial basis function used as the weak-form
/// test function. With l = floor(d/2) + 3 the kernel is
///   v(r) = (1-r)^(l+2)/3 * [(l^2+4l+3) r^2 + (3l+6) r + 3]   for r in [0,1)
///   v(r) = 0                                                  for r >= 1,
/// which is positive inside the unit ball, has v(0) = 1, and vanishes
/// together with its first derivative at the support boundary.
class WendlandKernel {
 public:
  explicit WendlandKernel(int dim)
      : dim_(dim), l_(dim / 2 + 3) {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("Wendland kernel: dimension must be 1 or 2");
  }

  int dim() const { return dim_; }
  int smoothness_index() const { return l_; }

  double value(double r) const {
    if (r >= 1.0) return 0.0;
    double base = 1.0 - r;
    double poly = (c2_() * r + c1_()) * r + 3.0;
    return int_pow(base, l_ + 2) * poly / 3.0;
  }

  /// d/dr of value(); identically 0 outside the support and at r = 0.
  double deriv(double r) const {
    if (r >= 1.0) return 0.0;
    double base = 1.0 - r;
    double poly = (c2_() * r + c1_()) * r + 3.0;
    double dpoly = 2.0 * c2_() * r + c1_();
    return int_pow(base, l_ + 1) * (base * dpoly - (l_ + 2) * poly) / 3.0;
  }

 private:
  double c2_() const { return static_cast<double>(l_ * l_ + 4 * l_ + 3); }
  double c1_() const { return static_cast<double>(3 * l_ + 6); }

  static double int_pow(double b, int e) {
    double acc = 1.0;
    for (int i = 0; i < e; ++i) acc *= b;
    return acc;
  }

  int dim_;
  int l_;
};

/// One test-function site: a ball of radius `radius` centred at `center`.
struct Particle {
  std::array<double, kMaxDim> center = {0.0, 0.0};
  double radius = 0.0;
};

/// Kernel value at physical point x for a particle; arguments beyond `dim`
/// axes are ignored.
inline double test_fn_value(const WendlandKernel& kernel, const Particle& p,
                            const std::array<double, kMaxDim>& x) {
  double rr = 0.0;
  for (int a = 0; a < kernel.dim(); ++a) {
    double d = x[a] - p.center[a];
    rr += d * d;
  }
  double r = std::sqrt(rr) / p.radius;
  return kernel.value(r);
}

/// Physical-space gradient of the test function at x:
///   grad v = v'(r) * (x - c) / (R * |x - c|),
/// defined as 0 at the centre (v'(0) = 0) and outside the support.
inline std::array<double, kMaxDim> test_fn_gradient(const WendlandKernel& kernel,
                                                    const Particle& p,
                                                    const std::array<double, kMaxDim>& x) {
  std::array<double, kMaxDim> g = {0.0, 0.0};
  double rr = 0.0;
  for (int a = 0; a < kernel.dim(); ++a) {
    double d = x[a] - p.center[a];
    rr += d * d;
  }
  double dist = std::sqrt(rr);
  if (dist == 0.0) return g;
  double r = dist / p.radius;
  if (r >= 1.0) return g;
  double scale = kernel.deriv(r) / (p.radius * dist);
  for (int a = 0; a < kernel.dim(); ++a) g[a] = scale * (x[a] - p.center[a]);
  return g;
}

}  // namespace pfw
