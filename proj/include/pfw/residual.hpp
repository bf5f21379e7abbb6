#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pfw/core.hpp"
#include "pfw/jets.hpp"
#include "pfw/network.hpp"
#include "pfw/sampling.hpp"
#include "pfw/wendland.hpp"

namespace pfw {

// ---------------------------------------------------------------------------
// Equation description
// ---------------------------------------------------------------------------

enum class Equation { kAllenCahn, kCahnHilliard };

inline const char* equation_name(Equation e) {
  return e == Equation::kCahnHilliard ? "cahn-hilliard" : "allen-cahn";
}

inline Equation parse_equation(const std::string& name) {
  if (name == "allen-cahn") return Equation::kAllenCahn;
  if (name == "cahn-hilliard") return Equation::kCahnHilliard;
  throw ConfigError("unknown equation '" + name + "' (expected allen-cahn or cahn-hilliard)");
}

/// How the chemical potential enters the mixed-form residual: as its own
/// trainable network (default), or derived from the field network as
/// mu = f(phi) - lambda^2 * lap(phi).
enum class MuMode { kAuxiliaryNetwork, kDerivedFromPhi };

/// Derivative of the double-well potential F(phi) = (phi^2-1)^2/4.
inline double double_well_deriv(double phi) { return (phi * phi - 1.0) * phi; }
inline double double_well_curvature(double phi) { return 3.0 * phi * phi - 1.0; }

struct PdeSpec {
  Equation equation = Equation::kAllenCahn;
  double mobility = 1.0;   // M
  double lambda_sq = 1.0;  // lambda^2, coefficient of the gradient energy

  int alpha() const { return equation == Equation::kCahnHilliard ? 1 : 0; }
  void validate() const {
    if (!(mobility > 0.0)) throw ConfigError("mobility must be positive");
    if (!(lambda_sq > 0.0)) throw ConfigError("lambda_sq must be positive");
  }
};

// ---------------------------------------------------------------------------
// Test-function batches: particles + unit-ball points + kernel tables
// ---------------------------------------------------------------------------

/// Per-iteration quadrature geometry: N_p particles, each with its own set of
/// unit-ball collocation points, with the Wendland test-function value and
/// unit-ball gradient tabulated at every point. The mapped evaluation
/// abscissae are x_ij = c_i + R_i * s_ij.
struct TestFunctionBatch {
  int dim = 1;
  /// Evaluation slots per particle. Batches built by make_test_function_batch
  /// hold the sampled points plus one control slot (see there); hand-built
  /// batches may use any layout.
  int points_per_particle = 0;
  /// Monte-Carlo mean divisor: how many of each particle's slots are random
  /// samples. Zero means every slot is a sample.
  int mc_points = 0;
  std::vector<Particle> particles;
  // Flattened per (particle, point), index k = i * points_per_particle + j.
  std::vector<std::array<double, 2>> x;       // mapped abscissae
  std::vector<double> value;                  // v(s_ij)
  std::vector<std::array<double, 2>> grad_s;  // d v / d s at s_ij

  int total_points() const { return static_cast<int>(particles.size()) * points_per_particle; }
  int samples_per_particle() const { return mc_points > 0 ? mc_points : points_per_particle; }
};

/// Draws fresh unit-ball points for every particle and tabulates the kernel.
/// The gradient entries are with respect to the unit-ball coordinate s; the
/// 1/R factor from the coordinate map is applied in the residual assembly.
///
/// Each particle carries one extra control slot located at the ball centre,
/// with kernel value zero and stored gradient equal to minus the sum of the
/// sampled kernel gradients. Because the kernel gradient integrates to
/// exactly zero over the ball (compact support), the slot subtracts the
/// centre gradient from every gradient-type term without changing the
/// estimator's expectation. The payoff is variance: the gradient terms'
/// noise then scales with how much the field gradient varies across the tiny
/// ball rather than with the gradient itself. Without this, those terms'
/// sampling noise buries the time-derivative and potential terms (which
/// carry a factor of the radius) and the squared loss rewards flattening
/// the field instead of satisfying the equation.
inline TestFunctionBatch make_test_function_batch(const WendlandKernel& kernel,
                                                  std::span<const Particle> particles, Rng& rng,
                                                  int n_samples, int dim) {
  if (n_samples < 1) throw ConfigError("points_per_particle must be >= 1");
  TestFunctionBatch batch;
  batch.dim = dim;
  batch.points_per_particle = n_samples + 1;
  batch.mc_points = n_samples;
  batch.particles.assign(particles.begin(), particles.end());
  const std::size_t total =
      particles.size() * static_cast<std::size_t>(n_samples + 1);
  batch.x.resize(total);
  batch.value.resize(total);
  batch.grad_s.resize(total);
  std::size_t k = 0;
  for (const Particle& p : particles) {
    std::vector<std::array<double, 2>> s = sample_unit_ball(rng, n_samples, dim);
    double gsum0 = 0.0, gsum1 = 0.0;
    for (int j = 0; j < n_samples; ++j, ++k) {
      double norm_sq = s[j][0] * s[j][0] + s[j][1] * s[j][1];
      double r = std::sqrt(norm_sq);
      batch.value[k] = kernel.value(r);
      double slope = r > 0.0 ? kernel.deriv(r) / r : 0.0;  // dv/dr * s/|s|
      batch.grad_s[k] = {slope * s[j][0], slope * s[j][1]};
      gsum0 += batch.grad_s[k][0];
      gsum1 += batch.grad_s[k][1];
      batch.x[k] = {p.center[0] + p.radius * s[j][0], p.center[1] + p.radius * s[j][1]};
    }
    batch.value[k] = 0.0;
    batch.grad_s[k] = {-gsum0, -gsum1};
    batch.x[k] = p.center;
    ++k;
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Weak residuals (Monte-Carlo means over the unit ball)
// ---------------------------------------------------------------------------

/// Field samples at the batch abscissae for the second-order equation
/// (alpha = 0). Spans are indexed like TestFunctionBatch (k = i*N+j);
/// grad_x1 stays empty in 1D.
struct SecondOrderSamples {
  std::span<const double> dtime;    // phi_t
  std::span<const double> grad_x0;  // d phi / d x0
  std::span<const double> grad_x1;  // d phi / d x1 (2D only)
  std::span<const double> f_value;  // f(phi)
};

/// Mutable adjoint accumulators matching SecondOrderSamples.
struct SecondOrderAdjoints {
  std::span<double> dtime;
  std::span<double> grad_x0;
  std::span<double> grad_x1;
  std::span<double> f_value;
};

/// Per-particle weak residual of phi_t = M(lambda^2 lap(phi) - f(phi)):
///   r_i = R_i^d V(d) mean_j[ phi_t v + (M lambda^2 / R_i) grad(phi).grad_s(v)
///                            + M f(phi) v ],
/// the integration-by-parts form with one 1/R per test-function derivative.
/// The mean runs over the sampled points; a batch's control slot folds the
/// centre-gradient subtraction into the same sum (see TestFunctionBatch).
inline void weak_residual_second_order(const TestFunctionBatch& tf, const PdeSpec& pde,
                                       const SecondOrderSamples& s, std::span<double> out) {
  const int np = static_cast<int>(tf.particles.size());
  const int n = tf.points_per_particle;
  const int m = tf.samples_per_particle();
  const double vd = unit_ball_volume(tf.dim);
  for (int i = 0; i < np; ++i) {
    const Particle& p = tf.particles[i];
    const double grad_coef = pde.mobility * pde.lambda_sq / p.radius;
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * n + j;
      double dot = s.grad_x0[k] * tf.grad_s[k][0];
      if (tf.dim == 2) dot += s.grad_x1[k] * tf.grad_s[k][1];
      acc += s.dtime[k] * tf.value[k] + grad_coef * dot + pde.mobility * s.f_value[k] * tf.value[k];
    }
    double prefactor = (tf.dim == 2 ? p.radius * p.radius : p.radius) * vd / m;
    out[static_cast<std::size_t>(i)] = prefactor * acc;
  }
}

/// Accumulates d(sum_i bar_i * r_i)/d(samples) into the adjoint spans.
inline void weak_residual_second_order_backward(const TestFunctionBatch& tf, const PdeSpec& pde,
                                                std::span<const double> residual_bar,
                                                SecondOrderAdjoints adj) {
  const int np = static_cast<int>(tf.particles.size());
  const int n = tf.points_per_particle;
  const int m = tf.samples_per_particle();
  const double vd = unit_ball_volume(tf.dim);
  for (int i = 0; i < np; ++i) {
    const Particle& p = tf.particles[i];
    double prefactor = (tf.dim == 2 ? p.radius * p.radius : p.radius) * vd / m;
    const double rb = residual_bar[static_cast<std::size_t>(i)] * prefactor;
    if (rb == 0.0) continue;
    const double grad_coef = pde.mobility * pde.lambda_sq / p.radius;
    for (int j = 0; j < n; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * n + j;
      adj.dtime[k] += rb * tf.value[k];
      adj.grad_x0[k] += rb * grad_coef * tf.grad_s[k][0];
      if (tf.dim == 2) adj.grad_x1[k] += rb * grad_coef * tf.grad_s[k][1];
      adj.f_value[k] += rb * pde.mobility * tf.value[k];
    }
  }
}

/// Field samples for the mixed fourth-order form (alpha = 1), splitting
/// phi_t = M lap(mu), mu = f(phi) - lambda^2 lap(phi).
struct MixedFormSamples {
  std::span<const double> phi_dtime;
  std::span<const double> phi_grad_x0;
  std::span<const double> phi_grad_x1;  // 2D only
  std::span<const double> mu_value;
  std::span<const double> mu_grad_x0;
  std::span<const double> mu_grad_x1;  // 2D only
  std::span<const double> f_value;     // f(phi)
};

struct MixedFormAdjoints {
  std::span<double> phi_dtime;
  std::span<double> phi_grad_x0;
  std::span<double> phi_grad_x1;
  std::span<double> mu_value;
  std::span<double> mu_grad_x0;
  std::span<double> mu_grad_x1;
  std::span<double> f_value;
};

/// Per-particle weak residual pair of the mixed form:
///   r1_i = R^d V(d) mean_j[ phi_t v + (M/R) grad(mu).grad_s(v) ]
///   r2_i = R^d V(d) mean_j[ mu v - f(phi) v - (lambda^2/R) grad(phi).grad_s(v) ]
/// Both vanish at an exact solution: testing the defining relation of mu
/// against v and integrating the lap(phi) term by parts gives the minus sign
/// on the gradient term.
inline void weak_residual_mixed(const TestFunctionBatch& tf, const PdeSpec& pde,
                                const MixedFormSamples& s, std::span<double> out1,
                                std::span<double> out2) {
  const int np = static_cast<int>(tf.particles.size());
  const int n = tf.points_per_particle;
  const int m = tf.samples_per_particle();
  const double vd = unit_ball_volume(tf.dim);
  for (int i = 0; i < np; ++i) {
    const Particle& p = tf.particles[i];
    const double mob_coef = pde.mobility / p.radius;
    const double lam_coef = pde.lambda_sq / p.radius;
    double acc1 = 0.0, acc2 = 0.0;
    for (int j = 0; j < n; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * n + j;
      double mu_dot = s.mu_grad_x0[k] * tf.grad_s[k][0];
      double phi_dot = s.phi_grad_x0[k] * tf.grad_s[k][0];
      if (tf.dim == 2) {
        mu_dot += s.mu_grad_x1[k] * tf.grad_s[k][1];
        phi_dot += s.phi_grad_x1[k] * tf.grad_s[k][1];
      }
      acc1 += s.phi_dtime[k] * tf.value[k] + mob_coef * mu_dot;
      acc2 += (s.mu_value[k] - s.f_value[k]) * tf.value[k] - lam_coef * phi_dot;
    }
    double prefactor = (tf.dim == 2 ? p.radius * p.radius : p.radius) * vd / n;
    out1[static_cast<std::size_t>(i)] = prefactor * acc1;
    out2[static_cast<std::size_t>(i)] = prefactor * acc2;
  }
}

inline void weak_residual_mixed_backward(const TestFunctionBatch& tf, const PdeSpec& pde,
                                         std::span<const double> residual1_bar,
                                         std::span<const double> residual2_bar,
                                         MixedFormAdjoints adj) {
  const int np = static_cast<int>(tf.particles.size());
  const int n = tf.points_per_particle;
  const double vd = unit_ball_volume(tf.dim);
  for (int i = 0; i < np; ++i) {
    const Particle& p = tf.particles[i];
    double prefactor = (tf.dim == 2 ? p.radius * p.radius : p.radius) * vd / n;
    const double rb1 = residual1_bar[static_cast<std::size_t>(i)] * prefactor;
    const double rb2 = residual2_bar[static_cast<std::size_t>(i)] * prefactor;
    if (rb1 == 0.0 && rb2 == 0.0) continue;
    const double mob_coef = pde.mobility / p.radius;
    const double lam_coef = pde.lambda_sq / p.radius;
    for (int j = 0; j < n; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * n + j;
      adj.phi_dtime[k] += rb1 * tf.value[k];
      adj.mu_grad_x0[k] += rb1 * mob_coef * tf.grad_s[k][0];
      adj.mu_value[k] += rb2 * tf.value[k];
      adj.f_value[k] -= rb2 * tf.value[k];
      adj.phi_grad_x0[k] -= rb2 * lam_coef * tf.grad_s[k][0];
      if (tf.dim == 2) {
        adj.mu_grad_x1[k] += rb1 * mob_coef * tf.grad_s[k][1];
        adj.phi_grad_x1[k] -= rb2 * lam_coef * tf.grad_s[k][1];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Slice losses and causal weights
// ---------------------------------------------------------------------------

/// Mean-square of the per-particle residuals at one time slice.
inline double loss_spatial(std::span<const double> residuals) {
  if (residuals.empty()) throw ConfigError("loss_spatial needs at least one residual");
  double acc = 0.0;
  for (double r : residuals) acc += r * r;
  return acc / static_cast<double>(residuals.size());
}

/// Causal weights: w_1 = 1, w_k = exp(-eps * sum_{j<k} L_j). Weights are
/// treated as constants in parameter gradients (no gradient flows through).
inline std::vector<double> causal_weights(std::span<const double> slice_losses, double eps) {
  std::vector<double> w(slice_losses.size());
  double cum = 0.0;
  for (std::size_t k = 0; k < slice_losses.size(); ++k) {
    w[k] = std::exp(-eps * cum);
    cum += slice_losses[k];
  }
  return w;
}

// ---------------------------------------------------------------------------
// Training loss graph
// ---------------------------------------------------------------------------

/// Batched initial-condition provider: fills target field values at the
/// given space-time points (all at the stage's start time).
using InitialCondition = std::function<void(std::span<const Point>, std::span<double>)>;

/// Wraps a pointwise x -> value function as an InitialCondition.
inline InitialCondition make_pointwise_ic(std::function<double(const std::array<double, 2>&)> fn) {
  return [fn = std::move(fn)](std::span<const Point> pts, std::span<double> out) {
    for (std::size_t j = 0; j < pts.size(); ++j) out[j] = fn(pts[j].x);
  };
}

/// Wraps a frozen copy of a trained field network as an InitialCondition
/// (used to hand a stage's final state to the next stage).
inline InitialCondition make_network_ic(PeriodicNet net) {
  return [net = std::move(net)](std::span<const Point> pts, std::span<double> out) {
    ad::JetBatch jets(net, ad::DerivSpec{});
    jets.forward(pts);
    for (std::size_t j = 0; j < pts.size(); ++j) out[j] = jets.value()[static_cast<int>(j)];
  };
}

/// Per-evaluation breakdown of the training loss.
struct LossBreakdown {
  double total = 0.0;
  double residual = 0.0;  // (1/N_T) sum_k w_k L_k, unweighted by omega_R
  double initial = 0.0;   // L_I, unweighted
  double data = 0.0;      // L_D, unweighted
  std::vector<double> slice_losses;
  std::vector<double> causal;
};

/// Static description of one training loss instance (one stage of a forward
/// solve, or a whole-domain inverse problem).
struct WeakFormLossSpec {
  PdeSpec pde;
  Domain domain;
  double t_begin = 0.0;
  double t_end = 1.0;
  int n_particles = 50;       // N_p
  int n_ball_points = 5;      // N_int
  int n_time_slices = 50;     // N_T
  int n_init_points = 100;    // N_init
  double r_min = 1e-6;
  double r_max_initial = 1e-4;
  int total_iterations = 20000;  // horizon of the radius schedule
  bool causal = true;
  double causal_eps = 0.1;
  double weight_residual = 2.0;  // omega_R
  double weight_initial = 1.0;   // omega_I
  double weight_data = 1.0;      // omega_D
  MuMode mu_mode = MuMode::kAuxiliaryNetwork;
  std::uint64_t seed = 0;  // stage-level seed; per-iteration streams derive from it

  void validate() const {
    pde.validate();
    domain.validate();
    if (!(t_end > t_begin)) throw ConfigError("stage needs t_end > t_begin");
    if (n_particles < 1 || n_ball_points < 1 || n_init_points < 1)
      throw ConfigError("sample counts must be positive");
    if (n_time_slices < 2) throw ConfigError("need at least two time slices");
    if (total_iterations < 1) throw ConfigError("total_iterations must be positive");
    if (!(causal_eps >= 0.0)) throw ConfigError("causal_eps must be non-negative");
    if (!(weight_residual > 0.0) || !(weight_initial > 0.0) || !(weight_data > 0.0))
      throw ConfigError("loss weights must be positive");
  }
};

/// The full weak-form training loss
///   L = omega_R (1/N_T) sum_k w_k L_k + omega_I L_I [+ omega_D L_D]
/// over the joint parameters of the field network, the auxiliary chemical
/// potential network (mixed form), and the potential network (identification
/// runs). Owns the per-iteration sampling; call resample(iteration) before
/// evaluating, then value()/value_and_gradient() any number of times on the
/// frozen sample set.
///
/// The causal weights w_k are constants of each optimization step: the first
/// evaluation after resample() computes them from its own slice losses and
/// later evaluations on the same sample set reuse them. This makes the
/// objective a fixed weighted sum between resamples, so the analytic gradient
/// (which never differentiates through the weights) agrees with finite
/// differences of value().
class WeakFormLoss final : public ad::LossGraph {
 public:
  WeakFormLoss(WeakFormLossSpec spec, PeriodicNet& phi, PeriodicNet* mu, PotentialNet* f,
               InitialCondition ic, std::vector<Point> sensor_points = {},
               std::vector<double> sensor_values = {})
      : spec_(std::move(spec)),
        phi_(&phi),
        mu_(mu),
        f_(f),
        ic_(std::move(ic)),
        kernel_(spec_.domain.dim),
        sensor_points_(std::move(sensor_points)),
        sensor_values_(std::move(sensor_values)),
        phi_jets_(phi, ad::DerivSpec{.time = true, .grad = true}) {
    spec_.validate();
    if (phi.dim() != spec_.domain.dim) throw ConfigError("field network dimension mismatch");
    const bool ch = spec_.pde.equation == Equation::kCahnHilliard;
    if (ch && spec_.mu_mode == MuMode::kDerivedFromPhi)
      throw CapabilityError(
          "derived chemical potential needs third-order spatial derivatives of the field "
          "network, which the derivative engine does not provide; use the auxiliary network");
    if (ch && mu_ == nullptr)
      throw ConfigError("the mixed form requires an auxiliary chemical-potential network");
    if (!ch && mu_ != nullptr)
      throw ConfigError("a chemical-potential network is only used by the fourth-order equation");
    if (ch && mu_->dim() != spec_.domain.dim)
      throw ConfigError("chemical-potential network dimension mismatch");
    if (sensor_points_.size() != sensor_values_.size())
      throw ConfigError("sensor points and values differ in length");
    if (!ic_) throw ConfigError("an initial-condition provider is required");
    if (ch) mu_jets_.emplace(*mu_, ad::DerivSpec{.grad = true});
    if (f_ != nullptr) f_jets_.emplace(*f_);
    slice_times_ = time_grid(spec_.t_begin, spec_.t_end, spec_.n_time_slices);
    offsets_.phi = 0;
    offsets_.mu = phi.core().param_count();
    offsets_.f = offsets_.mu + (ch ? mu_->core().param_count() : 0);
    offsets_.total = offsets_.f + (f_ != nullptr ? f_->core().param_count() : 0);
  }

  const WeakFormLossSpec& spec() const { return spec_; }
  const std::vector<double>& slice_times() const { return slice_times_; }

  /// Draws this iteration's particles, ball points, and initial points.
  void resample(int iteration) {
    if (iteration < 0) throw ConfigError("iteration must be non-negative");
    double r_max = r_max_schedule(iteration, spec_.total_iterations, spec_.r_min,
                                  spec_.r_max_initial);
    Rng particle_rng(derive_seed(spec_.seed, stream::kParticles, static_cast<std::uint64_t>(iteration)));
    std::vector<Particle> particles = sample_particles(particle_rng, spec_.n_particles,
                                                       spec_.domain, spec_.r_min, r_max);
    Rng ball_rng(derive_seed(spec_.seed, stream::kBallPoints, static_cast<std::uint64_t>(iteration)));
    tf_ = make_test_function_batch(kernel_, particles, ball_rng, spec_.n_ball_points,
                                   spec_.domain.dim);
    Rng init_rng(derive_seed(spec_.seed, stream::kInitPoints, static_cast<std::uint64_t>(iteration)));
    std::vector<std::array<double, 2>> xs =
        sample_lhs_points(init_rng, spec_.n_init_points, spec_.domain);
    init_points_.resize(xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j) init_points_[j] = Point{spec_.t_begin, xs[j]};
    init_targets_.resize(xs.size());
    ic_(init_points_, init_targets_);
    frozen_causal_.clear();
    staged_ = true;
    last_r_max_ = r_max;
  }

  double last_r_max() const { return last_r_max_; }
  const LossBreakdown& breakdown() const { return breakdown_; }

  // LossGraph interface ------------------------------------------------------
  std::size_t param_count() const override { return offsets_.total; }

  double get_param(std::size_t i) const override {
    auto [core, local] = locate(i);
    return core->params()[local];
  }

  void set_param(std::size_t i, double v) override {
    auto [core, local] = locate(i);
    core->params()[local] = v;
  }

  std::string block_name(std::size_t i) const override {
    if (i >= offsets_.total) throw ConfigError("parameter index out of range");
    if (i >= offsets_.f && f_ != nullptr)
      return "potential." + f_->core().block_name(i - offsets_.f);
    if (i >= offsets_.mu && mu_ != nullptr)
      return "chemical_potential." + mu_->core().block_name(i - offsets_.mu);
    return "field." + phi_->core().block_name(i);
  }

  double value() override { return evaluate(false, {}); }

  double value_and_gradient(std::span<double> grad) override {
    if (grad.size() != offsets_.total) throw ConfigError("gradient span has the wrong length");
    return evaluate(true, grad);
  }

 private:
  struct Offsets {
    std::size_t phi = 0, mu = 0, f = 0, total = 0;
  };

  std::pair<DenseCore*, std::size_t> locate(std::size_t i) const {
    if (i >= offsets_.total) throw ConfigError("parameter index out of range");
    if (f_ != nullptr && i >= offsets_.f) return {&f_->core(), i - offsets_.f};
    if (mu_ != nullptr && i >= offsets_.mu) return {&mu_->core(), i - offsets_.mu};
    return {&phi_->core(), i};
  }

  double evaluate(bool with_grad, std::span<double> grad) {
    if (!staged_) throw ConfigError("resample() must be called before evaluating the loss");
    const int np = spec_.n_particles;
    const int total_pts = tf_.total_points();
    const int nt = spec_.n_time_slices;
    const bool ch = spec_.pde.equation == Equation::kCahnHilliard;
    breakdown_ = LossBreakdown{};
    breakdown_.slice_losses.resize(static_cast<std::size_t>(nt));
    breakdown_.causal.resize(static_cast<std::size_t>(nt));
    pts_.resize(static_cast<std::size_t>(total_pts));
    res1_.resize(static_cast<std::size_t>(np));
    res2_.resize(static_cast<std::size_t>(np));
    rbar1_.resize(static_cast<std::size_t>(np));
    rbar2_.resize(static_cast<std::size_t>(np));
    f_vals_.resize(static_cast<std::size_t>(total_pts));
    std::span<double> grad_phi, grad_mu, grad_f;
    if (with_grad) {
      grad_phi = grad.subspan(offsets_.phi, phi_->core().param_count());
      if (mu_ != nullptr) grad_mu = grad.subspan(offsets_.mu, mu_->core().param_count());
      if (f_ != nullptr) grad_f = grad.subspan(offsets_.f, f_->core().param_count());
    }

    const bool reuse_weights =
        spec_.causal && frozen_causal_.size() == static_cast<std::size_t>(nt);
    if (spec_.causal && !reuse_weights) frozen_causal_.assign(static_cast<std::size_t>(nt), 1.0);

    double weighted_sum = 0.0;  // sum_k w_k L_k
    double cum = 0.0;           // sum of earlier slice losses for causal weights
    for (int k = 0; k < nt; ++k) {
      const double t = slice_times_[static_cast<std::size_t>(k)];
      for (int q = 0; q < total_pts; ++q)
        pts_[static_cast<std::size_t>(q)] = Point{t, tf_.x[static_cast<std::size_t>(q)]};
      phi_jets_.forward(pts_);
      if (ch) mu_jets_->forward(pts_);
      fill_f_values();

      const double* gx1 = spec_.domain.dim == 2 ? phi_jets_.grad(1).data() : nullptr;
      if (!ch) {
        SecondOrderSamples s{
            {phi_jets_.dtime().data(), static_cast<std::size_t>(total_pts)},
            {phi_jets_.grad(0).data(), static_cast<std::size_t>(total_pts)},
            gx1 ? std::span<const double>{gx1, static_cast<std::size_t>(total_pts)}
                : std::span<const double>{},
            f_vals_};
        weak_residual_second_order(tf_, spec_.pde, s, res1_);
      } else {
        const double* mgx1 = spec_.domain.dim == 2 ? mu_jets_->grad(1).data() : nullptr;
        MixedFormSamples s{
            {phi_jets_.dtime().data(), static_cast<std::size_t>(total_pts)},
            {phi_jets_.grad(0).data(), static_cast<std::size_t>(total_pts)},
            gx1 ? std::span<const double>{gx1, static_cast<std::size_t>(total_pts)}
                : std::span<const double>{},
            {mu_jets_->value().data(), static_cast<std::size_t>(total_pts)},
            {mu_jets_->grad(0).data(), static_cast<std::size_t>(total_pts)},
            mgx1 ? std::span<const double>{mgx1, static_cast<std::size_t>(total_pts)}
                 : std::span<const double>{},
            f_vals_};
        weak_residual_mixed(tf_, spec_.pde, s, res1_, res2_);
      }

      double slice_loss = loss_spatial(res1_);
      if (ch) slice_loss += loss_spatial(res2_);
      const double w = !spec_.causal ? 1.0
                       : reuse_weights
                           ? frozen_causal_[static_cast<std::size_t>(k)]
                           : (frozen_causal_[static_cast<std::size_t>(k)] =
                                  std::exp(-spec_.causal_eps * cum));
      breakdown_.slice_losses[static_cast<std::size_t>(k)] = slice_loss;
      breakdown_.causal[static_cast<std::size_t>(k)] = w;
      weighted_sum += w * slice_loss;

      if (with_grad) {
        // d total / d r_i = omega_R * w_k / N_T * 2 r_i / N_p  (w_k detached).
        const double coef = spec_.weight_residual * w / nt * 2.0 / np;
        for (int i = 0; i < np; ++i) {
          rbar1_[static_cast<std::size_t>(i)] = coef * res1_[static_cast<std::size_t>(i)];
          if (ch) rbar2_[static_cast<std::size_t>(i)] = coef * res2_[static_cast<std::size_t>(i)];
        }
        backward_slice(ch, total_pts, grad_phi, grad_mu, grad_f);
      }
      cum += slice_loss;
    }
    breakdown_.residual = weighted_sum / nt;

    // Initial mismatch at the stage start.
    phi_jets_.forward(init_points_);
    double li = 0.0;
    const int ni = static_cast<int>(init_points_.size());
    for (int j = 0; j < ni; ++j) {
      double m = phi_jets_.value()[j] - init_targets_[static_cast<std::size_t>(j)];
      li += m * m;
      if (with_grad)
        phi_jets_.value_bar()[j] = spec_.weight_initial * 2.0 * m / ni;
    }
    li /= ni;
    breakdown_.initial = li;
    if (with_grad) phi_jets_.backward(grad_phi);

    // Sensor mismatch (identification runs).
    double ld = 0.0;
    if (!sensor_points_.empty()) {
      phi_jets_.forward(sensor_points_);
      const int ns = static_cast<int>(sensor_points_.size());
      for (int j = 0; j < ns; ++j) {
        double m = phi_jets_.value()[j] - sensor_values_[static_cast<std::size_t>(j)];
        ld += m * m;
        if (with_grad) phi_jets_.value_bar()[j] = spec_.weight_data * 2.0 * m / ns;
      }
      ld /= ns;
      if (with_grad) phi_jets_.backward(grad_phi);
    }
    breakdown_.data = ld;

    breakdown_.total = spec_.weight_residual * breakdown_.residual +
                       spec_.weight_initial * breakdown_.initial +
                       (sensor_points_.empty() ? 0.0 : spec_.weight_data * breakdown_.data);
    return breakdown_.total;
  }

  /// Potential values at the current slice's field values: built-in
  /// double-well, or the potential network fed with the field output.
  void fill_f_values() {
    const auto& phi = phi_jets_.value();
    const int n = static_cast<int>(f_vals_.size());
    if (f_ == nullptr) {
      for (int k = 0; k < n; ++k) f_vals_[static_cast<std::size_t>(k)] = double_well_deriv(phi[k]);
    } else {
      f_jets_->forward_values({phi.data(), f_vals_.size()});
      for (int k = 0; k < n; ++k) f_vals_[static_cast<std::size_t>(k)] = f_jets_->value()[k];
    }
  }

  void backward_slice(bool ch, int total_pts, std::span<double> grad_phi,
                      std::span<double> grad_mu, std::span<double> grad_f) {
    f_bar_.assign(static_cast<std::size_t>(total_pts), 0.0);
    if (!ch) {
      SecondOrderAdjoints adj{
          {phi_jets_.dtime_bar().data(), static_cast<std::size_t>(total_pts)},
          {phi_jets_.grad_bar(0).data(), static_cast<std::size_t>(total_pts)},
          spec_.domain.dim == 2
              ? std::span<double>{phi_jets_.grad_bar(1).data(), static_cast<std::size_t>(total_pts)}
              : std::span<double>{},
          f_bar_};
      weak_residual_second_order_backward(tf_, spec_.pde, rbar1_, adj);
    } else {
      MixedFormAdjoints adj{
          {phi_jets_.dtime_bar().data(), static_cast<std::size_t>(total_pts)},
          {phi_jets_.grad_bar(0).data(), static_cast<std::size_t>(total_pts)},
          spec_.domain.dim == 2
              ? std::span<double>{phi_jets_.grad_bar(1).data(), static_cast<std::size_t>(total_pts)}
              : std::span<double>{},
          {mu_jets_->value_bar().data(), static_cast<std::size_t>(total_pts)},
          {mu_jets_->grad_bar(0).data(), static_cast<std::size_t>(total_pts)},
          spec_.domain.dim == 2
              ? std::span<double>{mu_jets_->grad_bar(1).data(), static_cast<std::size_t>(total_pts)}
              : std::span<double>{},
          f_bar_};
      weak_residual_mixed_backward(tf_, spec_.pde, rbar1_, rbar2_, adj);
    }
    // Chain f(phi) into the field values.
    if (f_ == nullptr) {
      const auto& phi = phi_jets_.value();
      for (int k = 0; k < total_pts; ++k)
        phi_jets_.value_bar()[k] +=
            f_bar_[static_cast<std::size_t>(k)] * double_well_curvature(phi[k]);
    } else {
      for (int k = 0; k < total_pts; ++k)
        f_jets_->value_bar()[k] = f_bar_[static_cast<std::size_t>(k)];
      f_jets_->backward(grad_f, &f_input_bar_);
      for (int k = 0; k < total_pts; ++k) phi_jets_.value_bar()[k] += f_input_bar_[k];
    }
    phi_jets_.backward(grad_phi);
    if (ch) mu_jets_->backward(grad_mu);
  }

  WeakFormLossSpec spec_;
  PeriodicNet* phi_;
  PeriodicNet* mu_;
  PotentialNet* f_;
  InitialCondition ic_;
  WendlandKernel kernel_;
  std::vector<Point> sensor_points_;
  std::vector<double> sensor_values_;
  std::vector<double> slice_times_;
  Offsets offsets_;

  ad::JetBatch phi_jets_;
  std::optional<ad::JetBatch> mu_jets_;
  std::optional<ad::JetBatch> f_jets_;

  bool staged_ = false;
  double last_r_max_ = 0.0;
  std::vector<double> frozen_causal_;  // weights of the current sample set
  TestFunctionBatch tf_;
  std::vector<Point> init_points_, pts_;
  std::vector<double> init_targets_;
  std::vector<double> res1_, res2_, rbar1_, rbar2_, f_vals_, f_bar_;
  Eigen::ArrayXd f_input_bar_;
  LossBreakdown breakdown_;
};

}  // namespace pfw
