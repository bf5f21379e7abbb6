#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "pfw/core.hpp"

namespace pfw {

/// Configuration of the periodic (Fourier) feature map that precedes the
/// first affine layer of a periodic network.
struct FourierConfig {
  int dim = 1;
  std::array<int, kMaxDim> modes = {5, 5};       // modes per axis
  std::array<double, kMaxDim> period = {2.0, 2.0};  // domain extent per axis

  void validate() const {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("fourier: dimension must be 1 or 2");
    for (int a = 0; a < dim; ++a) {
      if (modes[a] < 1) throw ConfigError("fourier: need at least one mode per axis");
      if (!(period[a] > 0.0)) throw ConfigError("fourier: period must be positive");
    }
  }

  /// 1D: constant plus sin/cos pairs (2m+1). 2D: the four sin/cos product
  /// blocks (4*mx*my), no constant.
  int feature_count() const {
    if (dim == 1) return 2 * modes[0] + 1;
    return 4 * modes[0] * modes[1];
  }
};

namespace detail {

/// Phase of axis `a` reduced to [0, 2*pi). Reducing before multiplying by
/// the mode index makes the map exactly periodic: inputs one period apart
/// produce bit-identical features.
inline double reduced_phase(const FourierConfig& cfg, int a, double x) {
  double u = x / cfg.period[a];
  double w = u - std::floor(u);
  if (w >= 1.0) w = 0.0;  // guards against floor rounding at the seam
  return 2.0 * kPi * w;
}

struct AxisTable {
  // s[k-1], c[k-1] hold sin/cos of k * theta for k = 1..modes
  std::array<double, 16> s;
  std::array<double, 16> c;
};

inline void fill_axis_table(const FourierConfig& cfg, int a, double x, AxisTable& tab) {
  double theta = reduced_phase(cfg, a, x);
  for (int k = 1; k <= cfg.modes[a]; ++k) {
    double arg = static_cast<double>(k) * theta;
    tab.s[static_cast<std::size_t>(k - 1)] = std::sin(arg);
    tab.c[static_cast<std::size_t>(k - 1)] = std::cos(arg);
  }
}

}  // namespace detail

/// Raw periodic features at x.
/// 1D layout: (1, sin(w x), cos(w x), ..., sin(m w x), cos(m w x)), w = 2*pi/L.
/// 2D layout: four blocks [sin*sin, sin*cos, cos*cos, cos*sin], each over
/// mode pairs (k, l) with k outer (1..mx) and l inner (1..my).
inline void periodic_features(const FourierConfig& cfg, const std::array<double, kMaxDim>& x,
                              double* out) {
  cfg.validate();
  if (cfg.modes[0] > 16 || (cfg.dim == 2 && cfg.modes[1] > 16))
    throw ConfigError("fourier: at most 16 modes per axis supported");
  detail::AxisTable tx;
  detail::fill_axis_table(cfg, 0, x[0], tx);
  if (cfg.dim == 1) {
    out[0] = 1.0;
    for (int k = 1; k <= cfg.modes[0]; ++k) {
      out[2 * k - 1] = tx.s[static_cast<std::size_t>(k - 1)];
      out[2 * k] = tx.c[static_cast<std::size_t>(k - 1)];
    }
    return;
  }
  detail::AxisTable ty;
  detail::fill_axis_table(cfg, 1, x[1], ty);
  int mx = cfg.modes[0];
  int my = cfg.modes[1];
  int block = mx * my;
  int idx = 0;
  for (int k = 0; k < mx; ++k) {
    for (int l = 0; l < my; ++l, ++idx) {
      std::size_t ks = static_cast<std::size_t>(k);
      std::size_t ls = static_cast<std::size_t>(l);
      out[idx] = tx.s[ks] * ty.s[ls];
      out[block + idx] = tx.s[ks] * ty.c[ls];
      out[2 * block + idx] = tx.c[ks] * ty.c[ls];
      out[3 * block + idx] = tx.c[ks] * ty.s[ls];
    }
  }
}

/// Features together with their exact space derivatives. Any of the output
/// pointers may be null to skip that component; `lap` is the spatial
/// Laplacian (each feature is an eigenfunction of it).
inline void periodic_feature_jets(const FourierConfig& cfg, const std::array<double, kMaxDim>& x,
                                  double* value, double* dx0, double* dx1, double* lap) {
  cfg.validate();
  if (cfg.modes[0] > 16 || (cfg.dim == 2 && cfg.modes[1] > 16))
    throw ConfigError("fourier: at most 16 modes per axis supported");
  detail::AxisTable tx;
  detail::fill_axis_table(cfg, 0, x[0], tx);
  double w0 = 2.0 * kPi / cfg.period[0];
  if (cfg.dim == 1) {
    if (value) value[0] = 1.0;
    if (dx0) dx0[0] = 0.0;
    if (lap) lap[0] = 0.0;
    for (int k = 1; k <= cfg.modes[0]; ++k) {
      std::size_t ks = static_cast<std::size_t>(k - 1);
      double kw = static_cast<double>(k) * w0;
      double s = tx.s[ks];
      double c = tx.c[ks];
      int is = 2 * k - 1;
      int ic = 2 * k;
      if (value) {
        value[is] = s;
        value[ic] = c;
      }
      if (dx0) {
        dx0[is] = kw * c;
        dx0[ic] = -kw * s;
      }
      if (lap) {
        lap[is] = -kw * kw * s;
        lap[ic] = -kw * kw * c;
      }
    }
    return;
  }
  detail::AxisTable ty;
  detail::fill_axis_table(cfg, 1, x[1], ty);
  double w1 = 2.0 * kPi / cfg.period[1];
  int mx = cfg.modes[0];
  int my = cfg.modes[1];
  int block = mx * my;
  int idx = 0;
  for (int k = 0; k < mx; ++k) {
    for (int l = 0; l < my; ++l, ++idx) {
      std::size_t ks = static_cast<std::size_t>(k);
      std::size_t ls = static_cast<std::size_t>(l);
      double kw = static_cast<double>(k + 1) * w0;
      double lw = static_cast<double>(l + 1) * w1;
      double sx = tx.s[ks], cx = tx.c[ks];
      double sy = ty.s[ls], cy = ty.c[ls];
      double eig = -(kw * kw + lw * lw);
      int i0 = idx, i1 = block + idx, i2 = 2 * block + idx, i3 = 3 * block + idx;
      if (value) {
        value[i0] = sx * sy;
        value[i1] = sx * cy;
        value[i2] = cx * cy;
        value[i3] = cx * sy;
      }
      if (dx0) {
        dx0[i0] = kw * cx * sy;
        dx0[i1] = kw * cx * cy;
        dx0[i2] = -kw * sx * cy;
        dx0[i3] = -kw * sx * sy;
      }
      if (dx1) {
        dx1[i0] = lw * sx * cy;
        dx1[i1] = -lw * sx * sy;
        dx1[i2] = -lw * cx * sy;
        dx1[i3] = lw * cx * cy;
      }
      if (lap) {
        lap[i0] = eig * sx * sy;
        lap[i1] = eig * sx * cy;
        lap[i2] = eig * cx * cy;
        lap[i3] = eig * cx * sy;
      }
    }
  }
}

}  // namespace pfw
