#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfw/core.hpp"
#include "pfw/jets.hpp"
#include "pfw/network.hpp"
#include "pfw/residual.hpp"
#include "pfw/spectral.hpp"

namespace pfw::train {

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw ConfigError("Adam betas must lie in (0, 1)");
    if (!(eps > 0.0)) throw ConfigError("Adam eps must be positive");
  }
};

/// Standard Adam with bias correction. Rejects non-finite gradients before
/// touching any state, so a failed step leaves parameters and moments intact.
class Adam {
 public:
  explicit Adam(std::size_t param_count, AdamConfig cfg = {})
      : cfg_(cfg), m_(param_count, 0.0), v_(param_count, 0.0) {
    cfg_.validate();
  }

  int steps_taken() const { return t_; }

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw ConfigError("Adam buffers do not match the parameter count");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    for (double g : grad)
      if (!std::isfinite(g)) throw NumericsError("non-finite gradient reached the optimizer");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

/// Per-iteration exponential decay: lr(i) = tau * (1 - 1/Iters)^i.
inline double lr_schedule(int iteration, double tau, int iters) {
  if (iteration < 0) throw ConfigError("iteration must be non-negative");
  if (iters < 2) throw ConfigError("lr schedule needs at least 2 iterations");
  return tau * std::pow(1.0 - 1.0 / iters, iteration);
}

// ---------------------------------------------------------------------------
// Flat parameter shuttling between networks and the optimizer
// ---------------------------------------------------------------------------

inline std::vector<double> gather_params(const ad::LossGraph& graph) {
  std::vector<double> out(graph.param_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = graph.get_param(i);
  return out;
}

inline void scatter_params(ad::LossGraph& graph, std::span<const double> params) {
  if (params.size() != graph.param_count()) throw ConfigError("parameter vector length mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) graph.set_param(i, params[i]);
}

// ---------------------------------------------------------------------------
// Training configuration and records
// ---------------------------------------------------------------------------

struct TrainConfig {
  int iterations = 20000;     // per stage
  int sub_intervals = 5;      // forward marching stages (inverse runs use 1)
  double learning_rate = 1e-3;
  AdamConfig adam;
  bool warm_start = true;     // initialize stage s+1 from stage s parameters
  int n_particles = 50;
  int n_ball_points = 5;
  int n_time_slices = 50;
  int n_init_points = 100;
  double r_min = 1e-6;
  double r_max_initial = 1e-4;
  bool causal = true;
  double causal_eps = 0.1;
  double weight_residual = 2.0;
  double weight_initial = 1.0;
  double weight_data = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    adam.validate();
    if (iterations < 2) throw ConfigError("iterations must be >= 2");
    if (sub_intervals < 1) throw ConfigError("sub_intervals must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  }
};

struct IterationRecord {
  int iteration = 0;
  double total = 0.0;
  double residual = 0.0;
  double initial = 0.0;
  double data = 0.0;
  double lr = 0.0;
  double r_max = 0.0;
};

struct StageResult {
  int stage = 0;
  double t_begin = 0.0;
  double t_end = 0.0;
  std::vector<IterationRecord> history;
  double wall_seconds = 0.0;
};

/// Loss-history table: iteration, total, residual, initial, data, lr, r_max.
inline void write_history(const std::string& path, const StageResult& stage) {
  std::vector<std::string> comments = {
      "pfw-loss-history",
      "stage=" + std::to_string(stage.stage),
      "t_begin=" + io::format_double(stage.t_begin),
      "t_end=" + io::format_double(stage.t_end),
      "columns: iteration\ttotal\tresidual\tinitial\tdata\tlr\tr_max",
  };
  std::vector<std::vector<double>> rows;
  rows.reserve(stage.history.size());
  for (const IterationRecord& r : stage.history)
    rows.push_back({static_cast<double>(r.iteration), r.total, r.residual, r.initial, r.data,
                    r.lr, r.r_max});
  io::write_table(path, comments, rows);
}

using ProgressFn = std::function<void(int stage, const IterationRecord&)>;

namespace detail {

/// Runs the Adam loop for one loss graph. On a non-finite loss or gradient
/// the parameters are rolled back to the last finite state and a numerical
/// error is thrown (the caller owns checkpointing that state).
inline StageResult optimize(WeakFormLoss& graph, const TrainConfig& cfg, int stage_index,
                            const ProgressFn& progress) {
  const auto t_start = std::chrono::steady_clock::now();
  StageResult result;
  result.stage = stage_index;
  result.t_begin = graph.spec().t_begin;
  result.t_end = graph.spec().t_end;
  result.history.reserve(static_cast<std::size_t>(cfg.iterations));
  Adam adam(graph.param_count(), cfg.adam);
  std::vector<double> params = gather_params(graph);
  std::vector<double> last_good = params;
  std::vector<double> grad(graph.param_count());
  for (int it = 0; it < cfg.iterations; ++it) {
    graph.resample(it);
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = graph.value_and_gradient(grad);
    bool finite = std::isfinite(loss);
    for (std::size_t i = 0; finite && i < grad.size(); ++i) finite = std::isfinite(grad[i]);
    if (!finite) {
      scatter_params(graph, last_good);
      throw NumericsError("non-finite loss or gradient at stage " + std::to_string(stage_index) +
                          ", iteration " + std::to_string(it));
    }
    last_good = params;
    const double lr = lr_schedule(it, cfg.learning_rate, cfg.iterations);
    adam.step(params, grad, lr);
    scatter_params(graph, params);
    IterationRecord rec{it,
                        loss,
                        graph.breakdown().residual,
                        graph.breakdown().initial,
                        graph.breakdown().data,
                        lr,
                        graph.last_r_max()};
    result.history.push_back(rec);
    if (progress) progress(stage_index, rec);
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace detail

/// Optimizes an already-constructed loss graph in place: the building block
/// behind the forward and inverse drivers, exposed so callers can train
/// externally prepared networks (e.g. self-consistency runs that start from
/// regression-fit parameters).
inline StageResult optimize_graph(WeakFormLoss& graph, const TrainConfig& cfg,
                                  const ProgressFn& progress = {}) {
  cfg.validate();
  return detail::optimize(graph, cfg, 0, progress);
}

// ---------------------------------------------------------------------------
// Piecewise-in-time model
// ---------------------------------------------------------------------------

/// The forward solver's output: one field network per time sub-interval,
/// dispatched on t (interface times resolve to the earlier stage).
struct PiecewiseModel {
  std::vector<double> boundaries;  // size = stages + 1, boundaries[0] = 0
  std::vector<PeriodicNet> stages;

  void validate() const {
    if (stages.empty() || boundaries.size() != stages.size() + 1)
      throw ConfigError("piecewise model needs stages+1 boundaries");
    for (std::size_t s = 1; s < boundaries.size(); ++s)
      if (!(boundaries[s] > boundaries[s - 1]))
        throw ConfigError("piecewise model boundaries must increase");
  }

  int dim() const { return stages.front().dim(); }

  std::size_t stage_at(double t) const {
    for (std::size_t s = 1; s + 1 < boundaries.size(); ++s)
      if (t <= boundaries[s]) return s - 1;
    return stages.size() - 1;
  }

  double eval(const Point& p) const {
    return ad::eval_with_input_derivs(stages[stage_at(p.t)], p, ad::DerivSpec{}).value;
  }

  /// Batched evaluation, grouping points by owning stage.
  void eval_batch(std::span<const Point> pts, std::span<double> out) const {
    if (pts.size() != out.size()) throw ConfigError("eval_batch spans differ in length");
    std::vector<std::vector<int>> buckets(stages.size());
    for (int i = 0; i < static_cast<int>(pts.size()); ++i)
      buckets[stage_at(pts[static_cast<std::size_t>(i)].t)].push_back(i);
    std::vector<Point> gathered;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      if (buckets[s].empty()) continue;
      gathered.clear();
      for (int i : buckets[s]) gathered.push_back(pts[static_cast<std::size_t>(i)]);
      ad::JetBatch jets(stages[s], ad::DerivSpec{});
      jets.forward(gathered);
      for (std::size_t j = 0; j < buckets[s].size(); ++j)
        out[static_cast<std::size_t>(buckets[s][j])] = jets.value()[static_cast<int>(j)];
    }
  }
};

/// Writes the stage checkpoints plus a JSON manifest tying them together.
/// Returns the manifest path.
inline std::string save_model(const std::string& dir, const std::string& name,
                              const PiecewiseModel& model,
                              const std::vector<PeriodicNet>* mu_stages = nullptr) {
  model.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  nlohmann::json manifest = {{"format", "pfw-model"},
                             {"format_version", 1},
                             {"boundaries", model.boundaries},
                             {"dim", model.dim()}};
  std::vector<std::string> files;
  for (std::size_t s = 0; s < model.stages.size(); ++s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "_stage_%03zu.net", s + 1);
    std::string file = name + buf;
    save_checkpoint((fs::path(dir) / file).string(), model.stages[s]);
    files.push_back(file);
  }
  manifest["stages"] = files;
  if (mu_stages != nullptr && !mu_stages->empty()) {
    std::vector<std::string> mu_files;
    for (std::size_t s = 0; s < mu_stages->size(); ++s) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "_mu_stage_%03zu.net", s + 1);
      std::string file = name + buf;
      save_checkpoint((fs::path(dir) / file).string(), (*mu_stages)[s]);
      mu_files.push_back(file);
    }
    manifest["chemical_potential_stages"] = mu_files;
  }
  std::string manifest_path = (fs::path(dir) / (name + ".json")).string();
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + manifest_path);
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + manifest_path);
  return manifest_path;
}

inline PiecewiseModel load_model(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open for reading: " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
    if (manifest.at("format").get<std::string>() != "pfw-model")
      throw IoError(manifest_path + ": not a model manifest");
    PiecewiseModel model;
    model.boundaries = manifest.at("boundaries").get<std::vector<double>>();
    fs::path base = fs::path(manifest_path).parent_path();
    for (const auto& file : manifest.at("stages").get<std::vector<std::string>>())
      model.stages.push_back(load_periodic_checkpoint((base / file).string()));
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path + ": malformed model manifest: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Forward training (sequence-to-sequence marching)
// ---------------------------------------------------------------------------

struct ForwardProblem {
  PdeSpec pde;
  Domain domain;
  double t_end = 1.0;
  FourierConfig fourier;
  std::vector<int> hidden = {50, 50, 50};
  bool skips = true;
  std::function<double(const std::array<double, 2>&)> initial_condition;
};

struct ForwardResult {
  PiecewiseModel model;
  std::vector<PeriodicNet> mu_stages;  // mixed form only
  std::vector<StageResult> stages;
};

/// Trains one network per sub-interval in time order. Stage s > 0 warm-starts
/// from stage s-1 and fits its initial data to the previous network's
/// prediction at the interface, sampled afresh every iteration.
inline ForwardResult train_forward(const ForwardProblem& problem, const TrainConfig& cfg,
                                   const ProgressFn& progress = {}) {
  cfg.validate();
  problem.pde.validate();
  if (!problem.initial_condition) throw ConfigError("forward training needs an initial condition");
  const bool ch = problem.pde.equation == Equation::kCahnHilliard;
  ForwardResult result;
  const double stage_len = problem.t_end / cfg.sub_intervals;

  PeriodicNet phi(problem.fourier, problem.hidden, problem.skips);
  phi.init_kaiming(derive_seed(cfg.seed, stream::kNetworkInit, 0));
  std::optional<PeriodicNet> mu;
  if (ch) {
    mu.emplace(problem.fourier, problem.hidden, problem.skips);
    mu->init_kaiming(derive_seed(cfg.seed, stream::kNetworkInit, 1));
  }

  for (int s = 0; s < cfg.sub_intervals; ++s) {
    if (!cfg.warm_start && s > 0) {
      phi.init_kaiming(derive_seed(cfg.seed, stream::kNetworkInit, 2 * s));
      if (ch) mu->init_kaiming(derive_seed(cfg.seed, stream::kNetworkInit, 2 * s + 1));
    }
    WeakFormLossSpec spec;
    spec.pde = problem.pde;
    spec.domain = problem.domain;
    spec.t_begin = s * stage_len;
    spec.t_end = (s + 1) * stage_len;
    spec.n_particles = cfg.n_particles;
    spec.n_ball_points = cfg.n_ball_points;
    spec.n_time_slices = cfg.n_time_slices;
    spec.n_init_points = cfg.n_init_points;
    spec.r_min = cfg.r_min;
    spec.r_max_initial = cfg.r_max_initial;
    spec.total_iterations = cfg.iterations;
    spec.causal = cfg.causal;
    spec.causal_eps = cfg.causal_eps;
    spec.weight_residual = cfg.weight_residual;
    spec.weight_initial = cfg.weight_initial;
    spec.weight_data = cfg.weight_data;
    spec.seed = derive_seed(cfg.seed, stream::kStage, static_cast<std::uint64_t>(s));
    InitialCondition ic =
        s == 0 ? make_pointwise_ic(problem.initial_condition)
               : make_network_ic(result.model.stages.back());
    WeakFormLoss graph(spec, phi, ch ? &*mu : nullptr, nullptr, std::move(ic));
    StageResult stage = detail::optimize(graph, cfg, s, progress);
    phi.iterations += cfg.iterations;
    result.stages.push_back(std::move(stage));
    result.model.stages.push_back(phi);
    if (ch) result.mu_stages.push_back(*mu);
    if (s == 0) result.model.boundaries.push_back(0.0);
    result.model.boundaries.push_back(spec.t_end);
  }
  result.model.validate();
  return result;
}

// ---------------------------------------------------------------------------
// Inverse training (potential identification)
// ---------------------------------------------------------------------------

struct InverseProblem {
  PdeSpec pde;  // mobility and lambda_sq known; the potential is identified
  Domain domain;
  double t_end = 1.0;
  FourierConfig fourier;
  std::vector<int> hidden = {50, 50, 50};
  std::vector<int> hidden_potential = {20, 20, 20};
  bool skips = true;
  std::function<double(const std::array<double, 2>&)> initial_condition;
};

struct InverseResult {
  PeriodicNet phi;
  std::optional<PeriodicNet> mu;
  PotentialNet potential;
  StageResult history;
};

/// Joint training of the field network(s) and the potential network on the
/// whole space-time domain against sensor data.
inline InverseResult train_inverse(const InverseProblem& problem,
                                   const spectral::MeasurementSet& measurements,
                                   const TrainConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  problem.pde.validate();
  if (measurements.points.empty())
    throw ConfigError("inverse training needs a nonempty measurement set");
  if (measurements.dim != problem.domain.dim)
    throw ConfigError("measurement dimension does not match the domain");
  if (!problem.initial_condition) throw ConfigError("inverse training needs an initial condition");
  const bool ch = problem.pde.equation == Equation::kCahnHilliard;

  PeriodicNet phi(problem.fourier, problem.hidden, problem.skips);
  phi.init_kaiming(derive_seed(cfg.seed, stream::kNetworkInit, 0));
  std::optional<PeriodicNet> mu;
  if (ch) {
    mu.emplace(problem.fourier, problem.hidden, problem.skips);
    mu->init_kaiming(derive_seed(cfg.seed, stream::kNetworkInit, 1));
  }
  PotentialNet f(problem.hidden_potential, problem.skips);
  f.init_kaiming(derive_seed(cfg.seed, stream::kNetworkInit, 2));

  WeakFormLossSpec spec;
  spec.pde = problem.pde;
  spec.domain = problem.domain;
  spec.t_begin = 0.0;
  spec.t_end = problem.t_end;
  spec.n_particles = cfg.n_particles;
  spec.n_ball_points = cfg.n_ball_points;
  spec.n_time_slices = cfg.n_time_slices;
  spec.n_init_points = cfg.n_init_points;
  spec.r_min = cfg.r_min;
  spec.r_max_initial = cfg.r_max_initial;
  spec.total_iterations = cfg.iterations;
  spec.causal = cfg.causal;
  spec.causal_eps = cfg.causal_eps;
  spec.weight_residual = cfg.weight_residual;
  spec.weight_initial = cfg.weight_initial;
  spec.weight_data = cfg.weight_data;
  spec.seed = derive_seed(cfg.seed, stream::kStage, 0);

  WeakFormLoss graph(spec, phi, ch ? &*mu : nullptr, &f,
                     make_pointwise_ic(problem.initial_condition), measurements.points,
                     measurements.values);
  StageResult history = detail::optimize(graph, cfg, 0, progress);
  phi.iterations += cfg.iterations;
  f.iterations += cfg.iterations;
  InverseResult result{std::move(phi), std::move(mu), std::move(f), std::move(history)};
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation metrics
// ---------------------------------------------------------------------------

struct Metrics {
  double rel_l2 = 0.0;
  double max_abs = 0.0;
};

/// Field error over all reference nodes and saved times: the ratio of error
/// norm to reference norm, and the largest pointwise deviation.
inline Metrics evaluate_field(const PiecewiseModel& model, const spectral::Trajectory& ref) {
  ref.validate();
  model.validate();
  if (model.dim() != ref.grid.dim) throw ConfigError("model/reference dimension mismatch");
  double err_sq = 0.0, ref_sq = 0.0, max_abs = 0.0;
  std::vector<Point> pts(static_cast<std::size_t>(ref.grid.total()));
  std::vector<double> pred(pts.size());
  for (std::size_t s = 0; s < ref.times.size(); ++s) {
    for (int i = 0; i < ref.grid.total(); ++i)
      pts[static_cast<std::size_t>(i)] = Point{ref.times[s], ref.grid.node(i)};
    model.eval_batch(pts, pred);
    const std::vector<double>& snap = ref.snapshots[s];
    for (std::size_t i = 0; i < pred.size(); ++i) {
      double e = pred[i] - snap[i];
      err_sq += e * e;
      ref_sq += snap[i] * snap[i];
      max_abs = std::max(max_abs, std::fabs(e));
    }
  }
  if (ref_sq == 0.0) throw NumericsError("reference trajectory has zero norm");
  return Metrics{std::sqrt(err_sq) / std::sqrt(ref_sq), max_abs};
}

/// Identified potential versus the double-well truth on a uniform grid over
/// the observed field range. `mean_shift` applies the conserved-dynamics
/// convention (identification is unique only up to an additive constant):
/// the prediction is shifted so its mean over the grid matches the truth.
struct PotentialComparison {
  std::vector<double> phi;     // evaluation grid
  std::vector<double> f_pred;  // shifted prediction
  std::vector<double> f_true;
  double shift = 0.0;
  double rel_l2 = 0.0;
};

inline PotentialComparison compare_potential(const PotentialNet& net, double phi_min,
                                             double phi_max, int n_grid, bool mean_shift) {
  if (n_grid < 2) throw ConfigError("potential comparison needs at least 2 grid points");
  if (!(phi_max > phi_min)) throw ConfigError("potential comparison needs phi_max > phi_min");
  PotentialComparison cmp;
  cmp.phi.resize(static_cast<std::size_t>(n_grid));
  cmp.f_true.resize(static_cast<std::size_t>(n_grid));
  for (int i = 0; i < n_grid; ++i) {
    double u = phi_min + (phi_max - phi_min) * i / (n_grid - 1);
    cmp.phi[static_cast<std::size_t>(i)] = u;
    cmp.f_true[static_cast<std::size_t>(i)] = double_well_deriv(u);
  }
  cmp.f_pred = ad::potential_values(net, cmp.phi);
  if (mean_shift) {
    double acc = 0.0;
    for (int i = 0; i < n_grid; ++i)
      acc += cmp.f_true[static_cast<std::size_t>(i)] - cmp.f_pred[static_cast<std::size_t>(i)];
    cmp.shift = acc / n_grid;
    for (double& v : cmp.f_pred) v += cmp.shift;
  }
  double err_sq = 0.0, ref_sq = 0.0;
  for (int i = 0; i < n_grid; ++i) {
    double e = cmp.f_pred[static_cast<std::size_t>(i)] - cmp.f_true[static_cast<std::size_t>(i)];
    err_sq += e * e;
    ref_sq += cmp.f_true[static_cast<std::size_t>(i)] * cmp.f_true[static_cast<std::size_t>(i)];
  }
  if (ref_sq == 0.0) throw NumericsError("reference potential has zero norm on the grid");
  cmp.rel_l2 = std::sqrt(err_sq) / std::sqrt(ref_sq);
  return cmp;
}

/// Observed field range of a measurement set (for the potential export grid).
inline std::pair<double, double> observed_range(const spectral::MeasurementSet& set) {
  if (set.values.empty()) throw ConfigError("empty measurement set");
  double lo = set.values.front(), hi = set.values.front();
  for (double v : set.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) throw ConfigError("degenerate observed field range");
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Direct regression fits (used to seed self-consistency experiments)
// ---------------------------------------------------------------------------

/// Fits the field network to target values at fixed space-time points by
/// full-batch Adam on the mean squared error. Returns the final loss.
inline double fit_field(PeriodicNet& net, std::span<const Point> pts,
                        std::span<const double> targets, int iterations, double lr) {
  if (pts.size() != targets.size() || pts.empty())
    throw ConfigError("fit_field needs matching nonempty points and targets");
  if (iterations < 2) throw ConfigError("fit_field needs at least 2 iterations");
  ad::JetBatch jets(net, ad::DerivSpec{});
  Adam adam(net.core().param_count());
  std::vector<double> grad(net.core().param_count());
  const int n = static_cast<int>(pts.size());
  double loss = 0.0;
  for (int it = 0; it < iterations; ++it) {
    jets.forward(pts);
    loss = 0.0;
    for (int j = 0; j < n; ++j) {
      double m = jets.value()[j] - targets[static_cast<std::size_t>(j)];
      loss += m * m;
      jets.value_bar()[j] = 2.0 * m / n;
    }
    loss /= n;
    std::fill(grad.begin(), grad.end(), 0.0);
    jets.backward(grad);
    adam.step(net.core().params(), grad, lr_schedule(it, lr, iterations));
  }
  return loss;
}

/// Fits the potential network to samples (u, target(u)); same scheme.
inline double fit_potential(PotentialNet& net, std::span<const double> inputs,
                            std::span<const double> targets, int iterations, double lr) {
  if (inputs.size() != targets.size() || inputs.empty())
    throw ConfigError("fit_potential needs matching nonempty inputs and targets");
  if (iterations < 2) throw ConfigError("fit_potential needs at least 2 iterations");
  ad::JetBatch jets(net);
  Adam adam(net.core().param_count());
  std::vector<double> grad(net.core().param_count());
  const int n = static_cast<int>(inputs.size());
  double loss = 0.0;
  for (int it = 0; it < iterations; ++it) {
    jets.forward_values(inputs);
    loss = 0.0;
    for (int j = 0; j < n; ++j) {
      double m = jets.value()[j] - targets[static_cast<std::size_t>(j)];
      loss += m * m;
      jets.value_bar()[j] = 2.0 * m / n;
    }
    loss /= n;
    std::fill(grad.begin(), grad.end(), 0.0);
    jets.backward(grad);
    adam.step(net.core().params(), grad, lr_schedule(it, lr, iterations));
  }
  return loss;
}

}  // namespace pfw::train
