#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "pfw/core.hpp"
#include "pfw/io.hpp"
#include "pfw/residual.hpp"

namespace pfw::spectral {

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Uniform periodic grid: node a of axis i sits at lo_i + a * L_i / n_i
/// (the right endpoint is the wrapped image of the left one).
struct Grid {
  int dim = 1;
  std::array<int, 2> n = {512, 1};
  Domain domain;

  void validate() const {
    domain.validate();
    if (dim != domain.dim) throw ConfigError("grid/domain dimension mismatch");
    for (int a = 0; a < dim; ++a)
      if (n[static_cast<std::size_t>(a)] < 2) throw ConfigError("grid needs at least 2 nodes per axis");
  }

  int total() const { return dim == 2 ? n[0] * n[1] : n[0]; }

  double spacing(int axis) const {
    return domain.extent(axis) / n[static_cast<std::size_t>(axis)];
  }

  /// Row-major flattening: index = a0 * n1 + a1 in 2D.
  std::array<double, 2> node(int flat) const {
    if (dim == 2) {
      int a0 = flat / n[1], a1 = flat % n[1];
      return {domain.lo[0] + a0 * spacing(0), domain.lo[1] + a1 * spacing(1)};
    }
    return {domain.lo[0] + flat * spacing(0), 0.0};
  }

  /// Signed integer mode index in the standard symmetric layout.
  static int mode_index(int i, int n) { return i <= n / 2 ? i : i - n; }

  /// |k|^2 of the flattened mode, with k_a = 2*pi*m_a / L_a.
  double k_squared(int flat) const {
    if (dim == 2) {
      int i0 = flat / n[1], i1 = flat % n[1];
      double k0 = 2.0 * kPi * mode_index(i0, n[0]) / domain.extent(0);
      double k1 = 2.0 * kPi * mode_index(i1, n[1]) / domain.extent(1);
      return k0 * k0 + k1 * k1;
    }
    double k0 = 2.0 * kPi * mode_index(flat, n[0]) / domain.extent(0);
    return k0 * k0;
  }
};

// ---------------------------------------------------------------------------
// FFT wrapper (complex-to-complex, deterministic plans)
// ---------------------------------------------------------------------------

/// Owns FFTW plans and buffers for one grid shape. Complex-to-complex
/// transforms with FFTW_ESTIMATE keep plan creation deterministic.
class SpectralTransform {
 public:
  explicit SpectralTransform(const Grid& grid) : total_(grid.total()) {
    in_ = fftw_alloc_complex(static_cast<std::size_t>(total_));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(total_));
    if (in_ == nullptr || out_ == nullptr) throw NumericsError("FFT buffer allocation failed");
    if (grid.dim == 2) {
      fwd_ = fftw_plan_dft_2d(grid.n[0], grid.n[1], in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
      bwd_ = fftw_plan_dft_2d(grid.n[0], grid.n[1], in_, out_, FFTW_BACKWARD, FFTW_ESTIMATE);
    } else {
      fwd_ = fftw_plan_dft_1d(grid.n[0], in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
      bwd_ = fftw_plan_dft_1d(grid.n[0], in_, out_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
  }

  SpectralTransform(const SpectralTransform&) = delete;
  SpectralTransform& operator=(const SpectralTransform&) = delete;

  ~SpectralTransform() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(in_);
    fftw_free(out_);
  }

  /// Real field -> unnormalized Fourier coefficients.
  void forward(const double* field, std::complex<double>* coeff) {
    for (int i = 0; i < total_; ++i) {
      in_[i][0] = field[i];
      in_[i][1] = 0.0;
    }
    fftw_execute(fwd_);
    for (int i = 0; i < total_; ++i) coeff[i] = {out_[i][0], out_[i][1]};
  }

  /// Coefficients -> real field (normalized); returns the largest imaginary
  /// residue seen before it is dropped.
  double inverse(const std::complex<double>* coeff, double* field) {
    for (int i = 0; i < total_; ++i) {
      in_[i][0] = coeff[i].real();
      in_[i][1] = coeff[i].imag();
    }
    fftw_execute(bwd_);
    const double scale = 1.0 / total_;
    double imag_residue = 0.0;
    for (int i = 0; i < total_; ++i) {
      field[i] = out_[i][0] * scale;
      imag_residue = std::max(imag_residue, std::fabs(out_[i][1]) * scale);
    }
    return imag_residue;
  }

 private:
  int total_;
  fftw_complex* in_;
  fftw_complex* out_;
  fftw_plan fwd_;
  fftw_plan bwd_;
};

// ---------------------------------------------------------------------------
// Semi-implicit solver
// ---------------------------------------------------------------------------

/// Pointwise nonlinearity; empty means the built-in double-well derivative.
using PotentialFn = std::function<double(double)>;

/// Semi-implicit per-mode update
///   phi_hat' = (phi_hat - ksq^alpha * M * dt * f_hat)
///              / (1 + ksq^(alpha+1) * M * lambda^2 * dt),
/// with f evaluated pointwise in physical space. The gradient-energy
/// coefficient enters as lambda^2, matching the model equations.
class ReferenceSolver {
 public:
  ReferenceSolver(Grid grid, PdeSpec pde, double dt, PotentialFn potential = {})
      : grid_(grid), pde_(pde), dt_(dt), potential_(std::move(potential)), fft_(grid) {
    grid_.validate();
    pde_.validate();
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    const int total = grid_.total();
    inv_denom_.resize(static_cast<std::size_t>(total));
    num_coef_.resize(static_cast<std::size_t>(total));
    phi_hat_.resize(static_cast<std::size_t>(total));
    f_hat_.resize(static_cast<std::size_t>(total));
    f_phys_.resize(static_cast<std::size_t>(total));
    const int alpha = pde_.alpha();
    for (int i = 0; i < total; ++i) {
      double ksq = grid_.k_squared(i);
      double k2a = alpha == 0 ? 1.0 : ksq;          // ksq^alpha
      double k2a2 = alpha == 0 ? ksq : ksq * ksq;   // ksq^(alpha+1)
      num_coef_[static_cast<std::size_t>(i)] = k2a * pde_.mobility * dt_;
      inv_denom_[static_cast<std::size_t>(i)] =
          1.0 / (1.0 + k2a2 * pde_.mobility * pde_.lambda_sq * dt_);
    }
  }

  const Grid& grid() const { return grid_; }
  const PdeSpec& pde() const { return pde_; }
  double dt() const { return dt_; }
  double last_imag_residue() const { return imag_residue_; }

  /// One time step in place.
  void step(std::vector<double>& field) {
    const int total = grid_.total();
    if (static_cast<int>(field.size()) != total)
      throw ConfigError("field size does not match the grid");
    for (int i = 0; i < total; ++i) {
      double phi = field[static_cast<std::size_t>(i)];
      if (!std::isfinite(phi)) throw NumericsError("non-finite field entering a spectral step");
      f_phys_[static_cast<std::size_t>(i)] =
          potential_ ? potential_(phi) : double_well_deriv(phi);
    }
    fft_.forward(field.data(), phi_hat_.data());
    fft_.forward(f_phys_.data(), f_hat_.data());
    for (int i = 0; i < total; ++i) {
      std::size_t s = static_cast<std::size_t>(i);
      phi_hat_[s] = (phi_hat_[s] - num_coef_[s] * f_hat_[s]) * inv_denom_[s];
    }
    imag_residue_ = fft_.inverse(phi_hat_.data(), field.data());
  }

 private:
  Grid grid_;
  PdeSpec pde_;
  double dt_;
  PotentialFn potential_;
  SpectralTransform fft_;
  std::vector<double> inv_denom_, num_coef_, f_phys_;
  std::vector<std::complex<double>> phi_hat_, f_hat_;
  double imag_residue_ = 0.0;
};

/// Free energy E = integral of F(phi) + (lambda^2/2)|grad phi|^2 with
/// F(phi) = (phi^2-1)^2 / 4; the gradient is evaluated spectrally and the
/// integral by the (periodic-exact) rectangle rule.
inline double free_energy(const Grid& grid, const PdeSpec& pde, std::span<const double> field) {
  const int total = grid.total();
  if (static_cast<int>(field.size()) != total)
    throw ConfigError("field size does not match the grid");
  SpectralTransform fft(grid);
  std::vector<std::complex<double>> hat(static_cast<std::size_t>(total));
  std::vector<std::complex<double>> dhat(static_cast<std::size_t>(total));
  std::vector<double> deriv(static_cast<std::size_t>(total));
  fft.forward(field.data(), hat.data());
  double grad_sq_integral = 0.0;
  double cell = grid.spacing(0) * (grid.dim == 2 ? grid.spacing(1) : 1.0);
  for (int axis = 0; axis < grid.dim; ++axis) {
    for (int i = 0; i < total; ++i) {
      int idx = grid.dim == 2 ? (axis == 0 ? i / grid.n[1] : i % grid.n[1]) : i;
      int m = Grid::mode_index(idx, grid.n[static_cast<std::size_t>(axis)]);
      double k = 2.0 * kPi * m / grid.domain.extent(axis);
      dhat[static_cast<std::size_t>(i)] =
          hat[static_cast<std::size_t>(i)] * std::complex<double>(0.0, k);
    }
    fft.inverse(dhat.data(), deriv.data());
    for (int i = 0; i < total; ++i)
      grad_sq_integral += deriv[static_cast<std::size_t>(i)] * deriv[static_cast<std::size_t>(i)];
  }
  grad_sq_integral *= cell;
  double well = 0.0;
  for (int i = 0; i < total; ++i) {
    double p = field[static_cast<std::size_t>(i)];
    double w = p * p - 1.0;
    well += 0.25 * w * w;
  }
  well *= cell;
  return well + 0.5 * pde.lambda_sq * grad_sq_integral;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct Trajectory {
  Grid grid;
  PdeSpec pde;
  double dt = 0.0;
  std::vector<double> times;
  std::vector<std::vector<double>> snapshots;  // row-major fields

  void validate() const {
    if (times.size() != snapshots.size()) throw ConfigError("trajectory times/snapshots mismatch");
    if (times.empty()) throw ConfigError("empty trajectory");
    for (const auto& s : snapshots)
      if (static_cast<int>(s.size()) != grid.total())
        throw ConfigError("trajectory snapshot size does not match the grid");
  }
};

/// Runs the solver from a nodal sampling of `initial`, saving every
/// `save_every` steps (which must divide the step count so the final state
/// is captured). `guard` aborts on |phi| blow-up.
inline Trajectory simulate(const Grid& grid, const PdeSpec& pde,
                           const std::function<double(const std::array<double, 2>&)>& initial,
                           double dt, double t_end, int save_every, PotentialFn potential = {},
                           double guard = 10.0) {
  grid.validate();
  if (!(t_end > 0.0)) throw ConfigError("t_end must be positive");
  if (save_every < 1) throw ConfigError("save_every must be >= 1");
  const double steps_real = t_end / dt;
  const long long n_steps = std::llround(steps_real);
  if (n_steps < 1 || std::fabs(n_steps * dt - t_end) > 1e-9 * std::max(1.0, t_end))
    throw ConfigError("t_end must be an integer number of time steps");
  if (n_steps % save_every != 0)
    throw ConfigError("save_every must divide the total step count");
  ReferenceSolver solver(grid, pde, dt, std::move(potential));
  Trajectory traj;
  traj.grid = grid;
  traj.pde = pde;
  traj.dt = dt;
  std::vector<double> field(static_cast<std::size_t>(grid.total()));
  for (int i = 0; i < grid.total(); ++i)
    field[static_cast<std::size_t>(i)] = initial(grid.node(i));
  traj.times.push_back(0.0);
  traj.snapshots.push_back(field);
  for (long long s = 1; s <= n_steps; ++s) {
    solver.step(field);
    for (double v : field) {
      if (!std::isfinite(v) || std::fabs(v) > guard)
        throw NumericsError("field blow-up at step " + std::to_string(s) + " (t=" +
                            std::to_string(s * dt) + ")");
    }
    if (s % save_every == 0) {
      traj.times.push_back(s * dt);
      traj.snapshots.push_back(field);
    }
  }
  return traj;
}

inline constexpr std::array<char, 8> kTrajectoryMagic = {'P', 'F', 'W', 'T', 'R', 'J', '0', '1'};

inline void write_trajectory(const std::string& path, const Trajectory& traj) {
  traj.validate();
  nlohmann::json header = {
      {"format", "pfw-trajectory"},
      {"format_version", 1},
      {"endianness", "little"},
      {"equation", equation_name(traj.pde.equation)},
      {"mobility", traj.pde.mobility},
      {"lambda_sq", traj.pde.lambda_sq},
      {"dim", traj.grid.dim},
      {"n", std::vector<int>(traj.grid.n.begin(), traj.grid.n.begin() + traj.grid.dim)},
      {"lo", std::vector<double>(traj.grid.domain.lo.begin(),
                                 traj.grid.domain.lo.begin() + traj.grid.dim)},
      {"hi", std::vector<double>(traj.grid.domain.hi.begin(),
                                 traj.grid.domain.hi.begin() + traj.grid.dim)},
      {"dt", traj.dt},
      {"times", traj.times},
  };
  std::vector<double> payload;
  payload.reserve(traj.times.size() * static_cast<std::size_t>(traj.grid.total()));
  for (const auto& snap : traj.snapshots) payload.insert(payload.end(), snap.begin(), snap.end());
  io::write_framed(path, kTrajectoryMagic, header, payload);
}

inline Trajectory read_trajectory(const std::string& path) {
  io::FramedFile file = io::read_framed(path, kTrajectoryMagic);
  const nlohmann::json& h = file.header;
  try {
    if (h.at("format").get<std::string>() != "pfw-trajectory")
      throw IoError(path + ": not a trajectory file");
    if (h.at("endianness").get<std::string>() != "little")
      throw IoError(path + ": unsupported endianness");
    Trajectory traj;
    traj.grid.dim = h.at("dim").get<int>();
    if (traj.grid.dim < 1 || traj.grid.dim > 2) throw IoError(path + ": unsupported dimension");
    auto n = h.at("n").get<std::vector<int>>();
    auto lo = h.at("lo").get<std::vector<double>>();
    auto hi = h.at("hi").get<std::vector<double>>();
    if (static_cast<int>(n.size()) != traj.grid.dim || lo.size() != n.size() ||
        hi.size() != n.size())
      throw IoError(path + ": grid arrays have the wrong length");
    traj.grid.domain.dim = traj.grid.dim;
    traj.grid.n = {1, 1};
    for (int a = 0; a < traj.grid.dim; ++a) {
      traj.grid.n[static_cast<std::size_t>(a)] = n[static_cast<std::size_t>(a)];
      traj.grid.domain.lo[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)];
      traj.grid.domain.hi[static_cast<std::size_t>(a)] = hi[static_cast<std::size_t>(a)];
    }
    traj.pde.equation = parse_equation(h.at("equation").get<std::string>());
    traj.pde.mobility = h.at("mobility").get<double>();
    traj.pde.lambda_sq = h.at("lambda_sq").get<double>();
    traj.dt = h.at("dt").get<double>();
    traj.times = h.at("times").get<std::vector<double>>();
    const std::size_t total = static_cast<std::size_t>(traj.grid.total());
    if (file.payload.size() != traj.times.size() * total)
      throw IoError(path + ": payload size does not match times x grid");
    traj.snapshots.resize(traj.times.size());
    for (std::size_t s = 0; s < traj.times.size(); ++s)
      traj.snapshots[s].assign(file.payload.begin() + static_cast<std::ptrdiff_t>(s * total),
                               file.payload.begin() + static_cast<std::ptrdiff_t>((s + 1) * total));
    traj.validate();
    return traj;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed trajectory header: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Measurements
// ---------------------------------------------------------------------------

/// Sensor layout: uniform spatial subgrids (node strides) at a set of saved
/// times. Spatial counts must divide the grid so sensors sit exactly on
/// nodes; times must match saved stamps.
struct SensorSpec {
  std::array<int, 2> nx = {0, 0};  // per-axis sensor counts; 0 = every node
  int nt = 0;                      // uniform time count over the span; 0 = use `times`
  std::vector<double> times;       // explicit time stamps (overrides nt)
};

struct MeasurementSet {
  int dim = 1;
  std::vector<Point> points;
  std::vector<double> values;
  double noise_level = 0.0;
  double sigma_ref = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {
inline std::size_t find_time(const std::vector<double>& times, double t, const std::string& what) {
  for (std::size_t i = 0; i < times.size(); ++i)
    if (std::fabs(times[i] - t) <= 1e-9 * std::max(1.0, std::fabs(t))) return i;
  throw ConfigError("requested " + what + " t=" + std::to_string(t) +
                    " is not among the saved trajectory times");
}
}  // namespace detail

/// Index of the saved snapshot at time t (1e-9 relative tolerance); exact
/// saved times only — asking between snapshots is an error, not interpolation.
inline std::size_t snapshot_index(const Trajectory& traj, double t) {
  return detail::find_time(traj.times, t, "snapshot time");
}

/// Samples the trajectory at the sensor layout and adds Gaussian noise
/// value += noise_level * sigma_ref * eta with sigma_ref the largest |clean|
/// value over the selected dataset.
inline MeasurementSet make_measurements(const Trajectory& traj, const SensorSpec& sensors,
                                        double noise_level, std::uint64_t seed) {
  traj.validate();
  if (!(noise_level >= 0.0)) throw ConfigError("noise_level must be non-negative");
  std::vector<std::size_t> time_idx;
  if (!sensors.times.empty()) {
    for (double t : sensors.times) time_idx.push_back(detail::find_time(traj.times, t, "sensor time"));
  } else if (sensors.nt > 0) {
    if (sensors.nt == 1) {
      time_idx.push_back(0);
    } else {
      double t0 = traj.times.front(), t1 = traj.times.back();
      for (int j = 0; j < sensors.nt; ++j)
        time_idx.push_back(detail::find_time(traj.times, t0 + (t1 - t0) * j / (sensors.nt - 1),
                                             "sensor time"));
    }
  } else {
    for (std::size_t i = 0; i < traj.times.size(); ++i) time_idx.push_back(i);
  }

  std::array<int, 2> counts = {1, 1};
  std::array<int, 2> strides = {1, 1};
  for (int a = 0; a < traj.grid.dim; ++a) {
    std::size_t as = static_cast<std::size_t>(a);
    int n = traj.grid.n[as];
    int want = sensors.nx[as] <= 0 ? n : sensors.nx[as];
    if (want > n || n % want != 0)
      throw ConfigError("sensor count " + std::to_string(want) + " must divide the grid size " +
                        std::to_string(n));
    counts[as] = want;
    strides[as] = n / want;
  }

  MeasurementSet set;
  set.dim = traj.grid.dim;
  set.noise_level = noise_level;
  set.seed = seed;
  for (std::size_t ti : time_idx) {
    const std::vector<double>& snap = traj.snapshots[ti];
    for (int i0 = 0; i0 < counts[0]; ++i0) {
      for (int i1 = 0; i1 < counts[1]; ++i1) {
        int flat = traj.grid.dim == 2 ? (i0 * strides[0]) * traj.grid.n[1] + i1 * strides[1]
                                      : i0 * strides[0];
        set.points.push_back(Point{traj.times[ti], traj.grid.node(flat)});
        set.values.push_back(snap[static_cast<std::size_t>(flat)]);
      }
    }
  }
  for (double v : set.values) set.sigma_ref = std::max(set.sigma_ref, std::fabs(v));
  if (noise_level > 0.0 && set.sigma_ref > 0.0) {
    Rng rng(derive_seed(seed, stream::kMeasurementNoise));
    for (double& v : set.values) v += noise_level * set.sigma_ref * rng.normal();
  }
  return set;
}

/// Tab-delimited sensor table: columns t, x (, y), value.
inline void write_measurements(const std::string& path, const MeasurementSet& set) {
  std::vector<std::string> comments = {
      "pfw-measurements",
      "dim=" + std::to_string(set.dim),
      "noise_level=" + io::format_double(set.noise_level),
      "sigma_ref=" + io::format_double(set.sigma_ref),
      "seed=" + std::to_string(set.seed),
      set.dim == 2 ? "columns: t\tx\ty\tvalue" : "columns: t\tx\tvalue",
  };
  std::vector<std::vector<double>> rows;
  rows.reserve(set.points.size());
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    const Point& p = set.points[i];
    if (set.dim == 2)
      rows.push_back({p.t, p.x[0], p.x[1], set.values[i]});
    else
      rows.push_back({p.t, p.x[0], set.values[i]});
  }
  io::write_table(path, comments, rows);
}

inline MeasurementSet read_measurements(const std::string& path, int expected_dim) {
  const std::size_t cols = expected_dim == 2 ? 4 : 3;
  std::vector<std::vector<double>> rows = io::read_table(path, cols);
  if (rows.empty()) throw IoError(path + ": no measurement rows");
  MeasurementSet set;
  set.dim = expected_dim;
  for (const auto& row : rows) {
    Point p{row[0], {row[1], expected_dim == 2 ? row[2] : 0.0}};
    set.points.push_back(p);
    set.values.push_back(row.back());
  }
  return set;
}

}  // namespace pfw::spectral
