#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "pfw/core.hpp"
#include "pfw/io.hpp"
#include "pfw/jets.hpp"
#include "pfw/network.hpp"
#include "pfw/residual.hpp"
#include "pfw/spectral.hpp"
#include "pfw/train.hpp"

using namespace pfw;
using namespace pfw::train;

namespace {

FourierConfig fourier_1d(int modes = 1) {
  FourierConfig f;
  f.dim = 1;
  f.modes = {modes, modes};
  f.period = {2.0, 2.0};
  return f;
}

Domain domain_1d() {
  Domain d;
  d.dim = 1;
  return d;
}

std::string temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(p);
  return p.string();
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.iterations = 30;
  cfg.sub_intervals = 2;
  cfg.learning_rate = 1e-3;
  cfg.n_particles = 6;
  cfg.n_ball_points = 4;
  cfg.n_time_slices = 4;
  cfg.n_init_points = 10;
  cfg.r_min = 1e-4;
  cfg.r_max_initial = 1e-3;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

TEST_CASE("Adam follows the textbook recurrence") {
  const std::size_t n = 3;
  AdamConfig cfg;
  Adam adam(n, cfg);
  std::vector<double> params = {0.5, -0.2, 1.0};
  std::vector<double> ref = params;
  std::vector<double> m(n, 0.0), v(n, 0.0);

  for (int t = 1; t <= 100; ++t) {
    std::vector<double> grad(n);
    for (std::size_t i = 0; i < n; ++i)
      grad[i] = std::sin(0.1 * t + static_cast<double>(i)) + 0.3;
    const double lr = 1e-2;
    adam.step(params, grad, lr);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grad[i];
      v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
      double mh = m[i] / (1.0 - std::pow(0.9, t));
      double vh = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(adam.steps_taken() == 100);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(params[i] == Catch::Approx(ref[i]).margin(1e-12));
}

TEST_CASE("Adam's first step is a signed unit step scaled by the rate") {
  Adam adam(2);
  std::vector<double> params = {0.0, 0.0};
  std::vector<double> grad = {3.0, -0.004};
  adam.step(params, grad, 0.01);
  // mhat = g, vhat = g^2, so the update is -lr * g / (|g| + eps).
  CHECK(params[0] == Catch::Approx(-0.01).epsilon(1e-6));
  CHECK(params[1] == Catch::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("Adam validates inputs and rejects poisoned gradients atomically") {
  Adam adam(2);
  std::vector<double> params = {1.0, 2.0};
  std::vector<double> good = {0.1, 0.2};
  std::vector<double> bad = {0.1, std::nan("")};

  CHECK_THROWS_AS(adam.step(params, std::vector<double>{0.1}, 1e-3), ConfigError);
  CHECK_THROWS_AS(adam.step(params, good, 0.0), ConfigError);
  CHECK_THROWS_AS(adam.step(params, bad, 1e-3), NumericsError);
  CHECK(params[0] == 1.0);
  CHECK(params[1] == 2.0);
  CHECK(adam.steps_taken() == 0);  // the failed attempt left no trace

  adam.step(params, good, 1e-3);
  CHECK(adam.steps_taken() == 1);

  CHECK_THROWS_AS(Adam(2, AdamConfig{1.0, 0.999, 1e-8}), ConfigError);
  CHECK_THROWS_AS(Adam(2, AdamConfig{0.9, 0.999, 0.0}), ConfigError);
}

TEST_CASE("learning-rate schedule") {
  CHECK(lr_schedule(0, 1e-3, 20000) == 1e-3);
  // tau * (1 - 1/N)^N at the horizon; evaluated independently via log1p.
  double expect = 1e-3 * std::exp(20000.0 * std::log1p(-1.0 / 20000.0));
  CHECK(lr_schedule(20000, 1e-3, 20000) == Catch::Approx(expect).epsilon(1e-12));
  CHECK(lr_schedule(20000, 1e-3, 20000) == Catch::Approx(1e-3 / 2.718281828).epsilon(1e-4));
  CHECK(lr_schedule(1, 2.0, 2) == 1.0);
  CHECK_THROWS_AS(lr_schedule(-1, 1e-3, 100), ConfigError);
  CHECK_THROWS_AS(lr_schedule(0, 1e-3, 1), ConfigError);
}

TEST_CASE("training configuration validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  TrainConfig bad = cfg;
  bad.iterations = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.sub_intervals = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// Parameter shuttling and history files
// ---------------------------------------------------------------------------

TEST_CASE("gather and scatter round-trip the joint parameter vector") {
  WeakFormLossSpec spec;
  spec.domain = domain_1d();
  spec.n_particles = 2;
  spec.n_ball_points = 2;
  spec.n_time_slices = 2;
  spec.n_init_points = 2;
  spec.r_min = 1e-4;
  spec.r_max_initial = 1e-3;
  PeriodicNet phi(fourier_1d(), {4});
  PotentialNet f({3});
  phi.init_kaiming(derive_seed(2, stream::kNetworkInit, 0));
  f.init_kaiming(derive_seed(2, stream::kNetworkInit, 1));
  auto ic = make_pointwise_ic([](const std::array<double, 2>&) { return 0.0; });
  WeakFormLoss graph(spec, phi, nullptr, &f, ic, {Point{0.1, {0.0, 0.0}}}, {0.5});

  auto params = gather_params(graph);
  REQUIRE(params.size() == phi.core().param_count() + f.core().param_count());
  CHECK(params[0] == phi.core().params()[0]);
  CHECK(params.back() == f.core().params().back());

  std::vector<double> shifted = params;
  for (double& p : shifted) p += 0.25;
  scatter_params(graph, shifted);
  CHECK(phi.core().params()[0] == params[0] + 0.25);
  CHECK(f.core().params().back() == params.back() + 0.25);

  CHECK_THROWS_AS(scatter_params(graph, std::vector<double>(3, 0.0)), ConfigError);
}

TEST_CASE("history files carry the full iteration table") {
  StageResult stage;
  stage.stage = 2;
  stage.t_begin = 0.4;
  stage.t_end = 0.6;
  stage.history = {IterationRecord{0, 1.5, 0.5, 0.25, 0.0, 1e-3, 1e-4},
                   IterationRecord{1, 1.2, 0.4, 0.2, 0.0, 9e-4, 9e-5}};
  std::string path = (std::filesystem::temp_directory_path() / "pfw_hist.tsv").string();
  write_history(path, stage);

  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  CHECK(first == "# pfw-loss-history");

  auto rows = io::read_table(path, 7);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][0] == 0.0);
  CHECK(rows[0][1] == 1.5);
  CHECK(rows[1][5] == 9e-4);
  CHECK(rows[1][6] == 9e-5);
  std::remove(path.c_str());
}

// ---------------------------------------------------------------------------
// Piecewise model
// ---------------------------------------------------------------------------

TEST_CASE("piecewise model dispatches on time with earlier-stage ties") {
  PiecewiseModel model;
  model.boundaries = {0.0, 0.5, 1.0};
  model.stages.push_back(PeriodicNet::constant(fourier_1d(), {4}, 1.0));
  model.stages.push_back(PeriodicNet::constant(fourier_1d(), {4}, 2.0));
  model.validate();

  CHECK(model.stage_at(0.0) == 0);
  CHECK(model.stage_at(0.3) == 0);
  CHECK(model.stage_at(0.5) == 0);  // interface resolves to the earlier stage
  CHECK(model.stage_at(0.7) == 1);
  CHECK(model.stage_at(1.0) == 1);
  CHECK(model.stage_at(1.5) == 1);  // clamps beyond the trained span

  CHECK(model.eval(Point{0.2, {0.1, 0.0}}) == 1.0);
  CHECK(model.eval(Point{0.9, {0.1, 0.0}}) == 2.0);

  std::vector<Point> pts = {Point{0.9, {0.0, 0.0}}, Point{0.1, {0.5, 0.0}},
                            Point{0.5, {-0.5, 0.0}}, Point{0.6, {0.2, 0.0}}};
  std::vector<double> out(4);
  model.eval_batch(pts, out);
  CHECK(out[0] == 2.0);
  CHECK(out[1] == 1.0);
  CHECK(out[2] == 1.0);
  CHECK(out[3] == 2.0);
  CHECK_THROWS_AS(model.eval_batch(pts, std::span<double>(out.data(), 3)), ConfigError);

  PiecewiseModel bad;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.stages.push_back(PeriodicNet::constant(fourier_1d(), {4}, 0.0));
  bad.boundaries = {0.0, 0.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("model checkpoints round-trip through the manifest") {
  PiecewiseModel model;
  model.boundaries = {0.0, 0.5, 1.0};
  PeriodicNet a(fourier_1d(2), {5, 5});
  PeriodicNet b(fourier_1d(2), {5, 5});
  a.init_kaiming(derive_seed(3, stream::kNetworkInit, 0));
  b.init_kaiming(derive_seed(3, stream::kNetworkInit, 1));
  a.iterations = 100;
  b.iterations = 200;
  model.stages = {a, b};

  std::vector<PeriodicNet> mu_stages;
  PeriodicNet m1(fourier_1d(2), {5, 5});
  m1.init_kaiming(derive_seed(3, stream::kNetworkInit, 2));
  mu_stages = {m1, m1};

  std::string dir = temp_dir("pfw_model_rt");
  std::string manifest = save_model(dir, "model", model, &mu_stages);
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "model_stage_001.net"));
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "model_stage_002.net"));
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "model_mu_stage_001.net"));

  PiecewiseModel back = load_model(manifest);
  REQUIRE(back.stages.size() == 2);
  CHECK(back.boundaries == model.boundaries);
  CHECK(back.stages[0].iterations == 100);
  CHECK(back.stages[1].iterations == 200);
  for (std::size_t i = 0; i < a.core().param_count(); ++i) {
    CHECK(back.stages[0].core().params()[i] == a.core().params()[i]);
    CHECK(back.stages[1].core().params()[i] == b.core().params()[i]);
  }
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(load_model("/nonexistent/manifest.json"), IoError);
}

// ---------------------------------------------------------------------------
// Optimizing loss graphs
// ---------------------------------------------------------------------------

TEST_CASE("an exact equilibrium is a fixed point of the optimizer") {
  WeakFormLossSpec spec;
  spec.domain = domain_1d();
  spec.t_end = 0.5;
  spec.n_particles = 4;
  spec.n_ball_points = 3;
  spec.n_time_slices = 3;
  spec.n_init_points = 5;
  spec.r_min = 1e-4;
  spec.r_max_initial = 1e-3;
  spec.total_iterations = 10;
  PeriodicNet phi = PeriodicNet::constant(fourier_1d(), {4}, 1.0);
  auto ic = make_pointwise_ic([](const std::array<double, 2>&) { return 1.0; });
  WeakFormLoss graph(spec, phi, nullptr, nullptr, ic);
  std::vector<double> before(phi.core().params().begin(), phi.core().params().end());

  TrainConfig cfg = tiny_train_config();
  cfg.iterations = 10;
  StageResult stage = optimize_graph(graph, cfg);

  REQUIRE(stage.history.size() == 10);
  for (const auto& rec : stage.history) CHECK(rec.total == 0.0);
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(phi.core().params()[i] == before[i]);
}

TEST_CASE("poisoned sensor data aborts with a rollback") {
  WeakFormLossSpec spec;
  spec.domain = domain_1d();
  spec.t_end = 0.5;
  spec.n_particles = 3;
  spec.n_ball_points = 2;
  spec.n_time_slices = 2;
  spec.n_init_points = 3;
  spec.r_min = 1e-4;
  spec.r_max_initial = 1e-3;
  spec.total_iterations = 5;
  PeriodicNet phi(fourier_1d(), {4});
  phi.init_kaiming(derive_seed(9, stream::kNetworkInit, 0));
  auto ic = make_pointwise_ic([](const std::array<double, 2>&) { return 0.0; });
  WeakFormLoss graph(spec, phi, nullptr, nullptr, ic, {Point{0.1, {0.0, 0.0}}},
                     {std::nan("")});
  std::vector<double> before(phi.core().params().begin(), phi.core().params().end());

  TrainConfig cfg = tiny_train_config();
  cfg.iterations = 5;
  try {
    optimize_graph(graph, cfg);
    FAIL("expected a numerical failure");
  } catch (const NumericsError& e) {
    std::string msg = e.what();
    CHECK(msg.find("stage 0") != std::string::npos);
    CHECK(msg.find("iteration 0") != std::string::npos);
  }
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(phi.core().params()[i] == before[i]);
}

// ---------------------------------------------------------------------------
// Forward and inverse drivers
// ---------------------------------------------------------------------------

TEST_CASE("forward training marches stages and is reproducible") {
  ForwardProblem problem;
  problem.pde.mobility = 1.0;
  problem.pde.lambda_sq = 1e-3;
  problem.domain = domain_1d();
  problem.t_end = 0.2;
  problem.fourier = fourier_1d(2);
  problem.hidden = {8};
  problem.initial_condition = [](const std::array<double, 2>& x) {
    return 0.2 * std::sin(kPi * x[0]);
  };
  TrainConfig cfg = tiny_train_config();

  int calls = 0;
  int max_stage = -1;
  ForwardResult run1 = train_forward(problem, cfg, [&](int stage, const IterationRecord&) {
    ++calls;
    max_stage = std::max(max_stage, stage);
  });
  CHECK(calls == 60);
  CHECK(max_stage == 1);
  REQUIRE(run1.stages.size() == 2);
  REQUIRE(run1.model.stages.size() == 2);
  CHECK(run1.mu_stages.empty());
  REQUIRE(run1.model.boundaries.size() == 3);
  CHECK(run1.model.boundaries[0] == 0.0);
  CHECK(run1.model.boundaries[1] == Catch::Approx(0.1).margin(1e-15));
  CHECK(run1.model.boundaries[2] == Catch::Approx(0.2).margin(1e-15));
  CHECK(run1.stages[0].history.size() == 30);
  CHECK(run1.model.stages[0].iterations == 30);
  CHECK(run1.model.stages[1].iterations == 60);

  ForwardResult run2 = train_forward(problem, cfg);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t i = 0; i < run1.stages[s].history.size(); ++i)
      CHECK(run1.stages[s].history[i].total == run2.stages[s].history[i].total);
    const auto& p1 = run1.model.stages[s].core().params();
    const auto& p2 = run2.model.stages[s].core().params();
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);
  }

  // The freshly initialized first stage must make progress; later stages are
  // warm-started near a minimum, so only require finite, non-exploding losses.
  CHECK(run1.stages[0].history.back().total < run1.stages[0].history.front().total);
  for (const auto& stage : run1.stages) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rec : stage.history) {
      CHECK(std::isfinite(rec.total));
      best = std::min(best, rec.total);
    }
    CHECK(best <= stage.history.front().total);
  }

  ForwardProblem broken = problem;
  broken.initial_condition = {};
  CHECK_THROWS_AS(train_forward(broken, cfg), ConfigError);
}

TEST_CASE("forward training of the mixed form carries the auxiliary network") {
  ForwardProblem problem;
  problem.pde.equation = Equation::kCahnHilliard;
  problem.pde.mobility = 0.01;
  problem.pde.lambda_sq = 1e-4;
  problem.domain = domain_1d();
  problem.t_end = 0.1;
  problem.fourier = fourier_1d(2);
  problem.hidden = {6};
  problem.initial_condition = [](const std::array<double, 2>& x) {
    return -std::cos(2.0 * kPi * x[0]);
  };
  TrainConfig cfg = tiny_train_config();
  cfg.iterations = 10;
  cfg.sub_intervals = 1;

  ForwardResult run = train_forward(problem, cfg);
  REQUIRE(run.mu_stages.size() == 1);
  CHECK(run.model.stages.size() == 1);
  CHECK(run.stages[0].history.size() == 10);
}

TEST_CASE("inverse training wiring") {
  InverseProblem problem;
  problem.pde.mobility = 1.0;
  problem.pde.lambda_sq = 1e-3;
  problem.domain = domain_1d();
  problem.t_end = 0.1;
  problem.fourier = fourier_1d(2);
  problem.hidden = {6};
  problem.hidden_potential = {4};
  problem.initial_condition = [](const std::array<double, 2>& x) {
    return 0.2 * std::sin(kPi * x[0]);
  };
  TrainConfig cfg = tiny_train_config();
  cfg.iterations = 10;

  spectral::MeasurementSet empty;
  CHECK_THROWS_AS(train_inverse(problem, empty, cfg), ConfigError);

  spectral::MeasurementSet wrong_dim;
  wrong_dim.dim = 2;
  wrong_dim.points = {Point{0.0, {0.0, 0.0}}};
  wrong_dim.values = {0.0};
  CHECK_THROWS_AS(train_inverse(problem, wrong_dim, cfg), ConfigError);

  spectral::MeasurementSet data;
  data.dim = 1;
  for (int i = 0; i < 8; ++i) {
    double x = -1.0 + 0.25 * i;
    data.points.push_back(Point{0.0, {x, 0.0}});
    data.values.push_back(0.2 * std::sin(kPi * x));
  }
  InverseResult result = train_inverse(problem, data, cfg);
  CHECK(result.history.history.size() == 10);
  CHECK(!result.mu.has_value());
  CHECK(result.phi.iterations == 10);
  CHECK(result.potential.iterations == 10);
  for (double p : result.potential.core().params()) CHECK(std::isfinite(p));
}

// ---------------------------------------------------------------------------
// Metrics and potential comparison
// ---------------------------------------------------------------------------

namespace {

spectral::Trajectory constant_trajectory(double value) {
  spectral::Trajectory traj;
  traj.grid.dim = 1;
  traj.grid.n = {8, 1};
  traj.grid.domain.dim = 1;
  traj.dt = 0.1;
  traj.times = {0.0, 0.1};
  traj.snapshots = {std::vector<double>(8, value), std::vector<double>(8, value)};
  return traj;
}

}  // namespace

TEST_CASE("field metrics against a reference trajectory") {
  PiecewiseModel model;
  model.boundaries = {0.0, 0.1};
  model.stages.push_back(PeriodicNet::constant(fourier_1d(), {4}, 0.5));

  auto ref = constant_trajectory(0.5);
  Metrics exact = evaluate_field(model, ref);
  CHECK(exact.rel_l2 == 0.0);
  CHECK(exact.max_abs == 0.0);

  PiecewiseModel off;
  off.boundaries = {0.0, 0.1};
  off.stages.push_back(PeriodicNet::constant(fourier_1d(), {4}, 0.7));
  Metrics m = evaluate_field(off, ref);
  CHECK(m.rel_l2 == Catch::Approx(0.4).epsilon(1e-12));
  CHECK(m.max_abs == Catch::Approx(0.2).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate_field(model, constant_trajectory(0.0)), NumericsError);
}

TEST_CASE("potential comparison grid, shift, and error") {
  PotentialNet zero({4});  // zero parameters: f_pred = 0 everywhere

  SECTION("without shift the error is the full reference norm") {
    auto cmp = compare_potential(zero, -1.5, 1.5, 11, false);
    CHECK(cmp.shift == 0.0);
    CHECK(cmp.rel_l2 == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(cmp.phi.front() == -1.5);
    CHECK(cmp.phi.back() == 1.5);
    CHECK(cmp.f_true[5] == 0.0);  // f(0) = 0
  }
  SECTION("mean shift centres the prediction on the truth") {
    auto cmp = compare_potential(zero, 0.0, 1.5, 4, true);
    double expect_shift = 0.0;
    for (double u : {0.0, 0.5, 1.0, 1.5}) expect_shift += double_well_deriv(u);
    expect_shift /= 4.0;
    CHECK(cmp.shift == Catch::Approx(expect_shift).epsilon(1e-12));
    for (double v : cmp.f_pred) CHECK(v == Catch::Approx(expect_shift).epsilon(1e-12));
    CHECK(cmp.rel_l2 < 1.0);
  }
  SECTION("validation") {
    CHECK_THROWS_AS(compare_potential(zero, 0.0, 1.0, 1, false), ConfigError);
    CHECK_THROWS_AS(compare_potential(zero, 1.0, 1.0, 5, false), ConfigError);
  }
}

TEST_CASE("observed range of a measurement set") {
  spectral::MeasurementSet set;
  set.values = {0.3, -1.2, 0.9};
  auto [lo, hi] = observed_range(set);
  CHECK(lo == -1.2);
  CHECK(hi == 0.9);

  spectral::MeasurementSet empty;
  CHECK_THROWS_AS(observed_range(empty), ConfigError);
  spectral::MeasurementSet flat;
  flat.values = {0.5, 0.5};
  CHECK_THROWS_AS(observed_range(flat), ConfigError);
}

// ---------------------------------------------------------------------------
// Regression fits
// ---------------------------------------------------------------------------

TEST_CASE("field regression drives the mean squared error down") {
  PeriodicNet net(fourier_1d(), {6});
  net.init_kaiming(derive_seed(4, stream::kFit, 0));
  std::vector<Point> pts;
  std::vector<double> targets;
  for (int i = 0; i < 32; ++i) {
    double x = -1.0 + 2.0 * i / 32.0;
    pts.push_back(Point{0.0, {x, 0.0}});
    targets.push_back(0.5 * std::sin(kPi * x));
  }
  double loss = fit_field(net, pts, targets, 800, 1e-2);
  CHECK(loss < 1e-2);

  CHECK_THROWS_AS(fit_field(net, pts, std::vector<double>(3, 0.0), 10, 1e-2), ConfigError);
  CHECK_THROWS_AS(fit_field(net, pts, targets, 1, 1e-2), ConfigError);
}

TEST_CASE("potential regression learns the double-well derivative") {
  PotentialNet net({8, 8});
  net.init_kaiming(derive_seed(4, stream::kFit, 1));
  std::vector<double> inputs, targets;
  for (int i = 0; i < 25; ++i) {
    double u = -1.2 + 2.4 * i / 24.0;
    inputs.push_back(u);
    targets.push_back(double_well_deriv(u));
  }
  double loss = fit_potential(net, inputs, targets, 2000, 1e-2);
  CHECK(loss < 1e-3);

  auto cmp = compare_potential(net, -1.2, 1.2, 25, false);
  CHECK(cmp.rel_l2 < 0.2);

  CHECK_THROWS_AS(fit_potential(net, inputs, std::vector<double>(3, 0.0), 10, 1e-2), ConfigError);
}
